"""Pure-numpy implementations of the hot per-step kernels.

Mirrors the compiled extension in ``_ckernels.pyx``; one of the two is
selected at import time by :mod:`safelearn._core`. Both backends implement
the same contracts and agree to ~1e-12, but are not bit-identical.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

BACKEND_NAME = "python"

# qp_project status codes (shared with the compiled backend)
QP_FEASIBLE = 0
QP_INFEASIBLE = 1
QP_ITER_LIMIT = 2


def chol_rank1_update(L, z):
    """In-place update of lower-triangular L so that L L^T gains + z z^T.

    ``z`` is destroyed. Rank-one *updates* (as opposed to downdates) are
    unconditionally stable.
    """
    d = L.shape[0]
    for k in range(d):
        lkk = L[k, k]
        r = np.hypot(lkk, z[k])
        c = r / lkk
        s = z[k] / lkk
        L[k, k] = r
        if k + 1 < d:
            L[k + 1:, k] = (L[k + 1:, k] + s * z[k + 1:]) / c
            z[k + 1:] = c * z[k + 1:] - s * L[k + 1:, k]


def chol_solve(L, B):
    """Solve (L L^T) X = B given the lower Cholesky factor L."""
    Y = solve_triangular(L, B, lower=True)
    return solve_triangular(L, Y, lower=True, trans="T")


def lower_solve(L, B):
    """Solve L Y = B (forward substitution)."""
    return solve_triangular(L, B, lower=True)


def estimator_absorb(L, V, S, theta, z, y):
    """Absorb one transition with regressor z and target row y (z consumed).

    Mutates V (+= z z^T), S (+= z y^T), L (rank-one Cholesky update) and
    theta (re-solved against the updated factor).
    """
    V += np.outer(z, z)
    S += np.outer(z, y)
    chol_rank1_update(L, z)
    theta[:, :] = chol_solve(L, S)


def zeta_max(L, x, verts):
    """max over vertex rows v of ||L^{-1} [x; v]||_2."""
    d = L.shape[0]
    n = x.shape[0]
    nv = verts.shape[0]
    Q = np.empty((d, nv))
    Q[:n, :] = x[:, None]
    Q[n:, :] = verts.T
    Y = solve_triangular(L, Q, lower=True)
    return float(np.sqrt(np.max(np.sum(Y * Y, axis=0))))


def nnls(A, b, max_iter=0, rnorm_tol=0.0):
    """Lawson-Hanson nonnegative least squares: min ||A x - b||, x >= 0.

    Returns (x, rnorm, converged). A positive ``rnorm_tol`` stops early
    once the residual falls below it (all the LDP caller needs when
    certifying infeasibility; near-zero residuals otherwise stall on
    degenerate columns).
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    M, N = A.shape
    if max_iter <= 0:
        max_iter = 30 * (N + 2)
    x = np.zeros(N)
    passive = np.zeros(N, dtype=bool)
    resid = b.copy()
    w = A.T @ resid
    scale = max(1.0, float(np.abs(A).max(initial=0.0)) * float(np.abs(b).max(initial=0.0)))
    tol = 1e-12 * scale
    it = 0
    rn_prev = np.inf
    stalled = 0
    while True:
        rn = float(np.linalg.norm(resid))
        if rnorm_tol > 0.0 and rn <= rnorm_tol:
            break
        # add/drop cycling without residual progress: report non-convergence
        # now instead of burning the whole iteration budget
        if rn > rn_prev * (1.0 - 1e-10):
            stalled += 1
            if stalled >= 3:
                return x, rn, False
        else:
            stalled = 0
        rn_prev = rn
        free = ~passive
        if not free.any():
            break
        j = int(np.argmax(np.where(free, w, -np.inf)))
        if w[j] <= tol:
            break
        passive[j] = True
        while True:
            it += 1
            if it > max_iter:
                return x, float(np.linalg.norm(b - A @ x)), False
            cols = np.flatnonzero(passive)
            s_p, *_ = np.linalg.lstsq(A[:, cols], b, rcond=None)
            if s_p.min(initial=np.inf) > 0.0:
                x[:] = 0.0
                x[cols] = s_p
                break
            # step toward s until a passive variable hits zero, then free it
            xp = x[cols]
            mask = s_p <= 0.0
            alpha = np.min(xp[mask] / (xp[mask] - s_p[mask]))
            x[cols] = xp + alpha * (s_p - xp)
            drop = cols[x[cols] <= 1e-14 * scale]
            x[drop] = 0.0
            passive[drop] = False
            if not passive.any():
                break
        resid = b - A @ x
        w = A.T @ resid
    return x, float(np.linalg.norm(resid)), True


def qp_project(G, g, ubar, feas_tol=1e-9, max_iter=0):
    """Euclidean projection of ubar onto {u : G u <= g} via LDP/NNLS.

    Returns (status, u, lam, rnorm, mu):
      status QP_FEASIBLE   -- u is the unique projection, lam >= 0 its multipliers
      status QP_INFEASIBLE -- the polyhedron is empty; mu is a Farkas ray
                              (mu >= 0, G^T mu = 0, g^T mu < 0)
      status QP_ITER_LIMIT -- NNLS iteration cap hit (numerical failure)
    """
    G = np.ascontiguousarray(G, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    ubar = np.ascontiguousarray(ubar, dtype=np.float64)
    p, m = G.shape
    if p == 0:
        return QP_FEASIBLE, ubar.copy(), np.zeros(0), 1.0, np.zeros(0)
    # LDP form: min ||y|| s.t. (-G) y >= G ubar - g,  u = ubar + y
    E = np.empty((m + 1, p))
    E[:m, :] = -G.T
    E[m, :] = G @ ubar - g
    f = np.zeros(m + 1)
    f[m] = 1.0
    mu, rnorm, ok = nnls(E, f, max_iter=max_iter, rnorm_tol=0.5 * feas_tol)
    if rnorm <= feas_tol:
        # E mu ~= f certifies emptiness whether or not NNLS fully converged
        return QP_INFEASIBLE, ubar.copy(), np.zeros(p), rnorm, mu
    if not ok:
        # at an LDP optimum of a feasible program rnorm = 1/sqrt(1 + D^2),
        # so a stall this deep can only mean a near-empty set (D would
        # have to be ~1/rnorm, far outside any bounded input set)
        if rnorm <= 1e5 * feas_tol:
            return QP_INFEASIBLE, ubar.copy(), np.zeros(p), rnorm, mu
        return QP_ITER_LIMIT, ubar.copy(), np.zeros(p), rnorm, mu
    r = E @ mu - f
    if r[m] >= 0.0:  # cannot happen at an NNLS optimum of a feasible LDP
        return QP_ITER_LIMIT, ubar.copy(), np.zeros(p), rnorm, mu
    u = ubar - r[:m] / r[m]
    lam = -mu / r[m]
    return QP_FEASIBLE, u, lam, rnorm, mu
