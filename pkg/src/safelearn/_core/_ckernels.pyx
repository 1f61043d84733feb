# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot per-step kernels.

Same contracts as ``py_kernels``; selected at import time by
:mod:`safelearn._core`.
"""

import numpy as np

from libc.math cimport hypot, sqrt

BACKEND_NAME = "cython"

QP_FEASIBLE = 0
QP_INFEASIBLE = 1
QP_ITER_LIMIT = 2


def chol_rank1_update(double[:, ::1] L, double[::1] z):
    """In-place update of lower-triangular L so that L L^T gains + z z^T.

    ``z`` is destroyed.
    """
    cdef Py_ssize_t d = L.shape[0]
    cdef Py_ssize_t i, k
    cdef double lkk, r, c, s
    for k in range(d):
        lkk = L[k, k]
        r = hypot(lkk, z[k])
        c = r / lkk
        s = z[k] / lkk
        L[k, k] = r
        for i in range(k + 1, d):
            L[i, k] = (L[i, k] + s * z[i]) / c
            z[i] = c * z[i] - s * L[i, k]


cdef void _lower_solve_inplace(const double[:, ::1] L, double[:, ::1] B) noexcept:
    cdef Py_ssize_t d = L.shape[0]
    cdef Py_ssize_t ncol = B.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(ncol):
        for i in range(d):
            acc = B[i, j]
            for k in range(i):
                acc -= L[i, k] * B[k, j]
            B[i, j] = acc / L[i, i]


cdef void _upper_solve_inplace(const double[:, ::1] L, double[:, ::1] B) noexcept:
    # solves L^T X = B in place (L lower triangular)
    cdef Py_ssize_t d = L.shape[0]
    cdef Py_ssize_t ncol = B.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(ncol):
        for i in range(d - 1, -1, -1):
            acc = B[i, j]
            for k in range(i + 1, d):
                acc -= L[k, i] * B[k, j]
            B[i, j] = acc / L[i, i]


def lower_solve(L, B):
    """Solve L Y = B (forward substitution)."""
    Lc = np.ascontiguousarray(L, dtype=np.float64)
    out = np.array(B, dtype=np.float64, order="C", copy=True)
    squeeze = out.ndim == 1
    if squeeze:
        out = out.reshape(-1, 1)
    _lower_solve_inplace(Lc, out)
    return out[:, 0] if squeeze else out


def chol_solve(L, B):
    """Solve (L L^T) X = B given the lower Cholesky factor L."""
    Lc = np.ascontiguousarray(L, dtype=np.float64)
    out = np.array(B, dtype=np.float64, order="C", copy=True)
    squeeze = out.ndim == 1
    if squeeze:
        out = out.reshape(-1, 1)
    _lower_solve_inplace(Lc, out)
    _upper_solve_inplace(Lc, out)
    return out[:, 0] if squeeze else out


def estimator_absorb(double[:, ::1] L, double[:, ::1] V, double[:, ::1] S,
                     double[:, ::1] theta, double[::1] z, double[::1] y):
    """Absorb one transition (z consumed). Mutates V, S, L and theta."""
    cdef Py_ssize_t d = L.shape[0]
    cdef Py_ssize_t n = S.shape[1]
    cdef Py_ssize_t i, j
    for i in range(d):
        for j in range(d):
            V[i, j] += z[i] * z[j]
        for j in range(n):
            S[i, j] += z[i] * y[j]
            theta[i, j] = S[i, j]
    chol_rank1_update(L, z)
    _lower_solve_inplace(L, theta)
    _upper_solve_inplace(L, theta)


def zeta_max(const double[:, ::1] L, const double[::1] x, const double[:, ::1] verts):
    """max over vertex rows v of ||L^{-1} [x; v]||_2."""
    cdef Py_ssize_t d = L.shape[0]
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nv = verts.shape[0]
    cdef Py_ssize_t v, i, k
    cdef double acc, best, ss
    work_arr = np.empty(d)
    cdef double[::1] work = work_arr
    best = 0.0
    for v in range(nv):
        ss = 0.0
        for i in range(d):
            acc = x[i] if i < n else verts[v, i - n]
            for k in range(i):
                acc -= L[i, k] * work[k]
            work[i] = acc / L[i, i]
            ss += work[i] * work[i]
        if ss > best:
            best = ss
    return sqrt(best)


cdef int _ls_solve(const double[:, ::1] A, const double[::1] b, const Py_ssize_t[::1] cols, Py_ssize_t K,
                   double[:, ::1] Awork, double[::1] bwork, double[::1] sol) noexcept:
    """Least squares on the selected columns via Householder QR.

    Returns 0 on success, 1 if rank-deficient (cannot happen for the
    passive sets Lawson-Hanson builds in exact arithmetic).
    """
    cdef Py_ssize_t M = A.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double nrm, alpha, vk, dot, factor, acc
    if K > M:
        return 1
    for j in range(K):
        for i in range(M):
            Awork[i, j] = A[i, cols[j]]
    for i in range(M):
        bwork[i] = b[i]
    for k in range(K):
        nrm = 0.0
        for i in range(k, M):
            nrm += Awork[i, k] * Awork[i, k]
        nrm = sqrt(nrm)
        if nrm <= 1e-300:
            return 1
        alpha = -nrm if Awork[k, k] > 0.0 else nrm
        vk = Awork[k, k] - alpha
        Awork[k, k] = alpha
        # apply H = I - 2 v v^T / (v^T v); note alpha * vk < 0
        for j in range(k + 1, K):
            dot = vk * Awork[k, j]
            for i in range(k + 1, M):
                dot += Awork[i, k] * Awork[i, j]
            factor = dot / (alpha * vk)
            Awork[k, j] += factor * vk
            for i in range(k + 1, M):
                Awork[i, j] += factor * Awork[i, k]
        dot = vk * bwork[k]
        for i in range(k + 1, M):
            dot += Awork[i, k] * bwork[i]
        factor = dot / (alpha * vk)
        bwork[k] += factor * vk
        for i in range(k + 1, M):
            bwork[i] += factor * Awork[i, k]
    for k in range(K - 1, -1, -1):
        if Awork[k, k] == 0.0:
            return 1
        acc = bwork[k]
        for j in range(k + 1, K):
            acc -= Awork[k, j] * sol[j]
        sol[k] = acc / Awork[k, k]
    return 0


def nnls(A_in, b_in, int max_iter=0, double rnorm_tol=0.0):
    """Lawson-Hanson nonnegative least squares: min ||A x - b||, x >= 0.

    Returns (x, rnorm, converged). A positive ``rnorm_tol`` stops early
    once the residual falls below it (all the LDP caller needs when
    certifying infeasibility; near-zero residuals otherwise stall on
    degenerate columns).
    """
    A_arr = np.ascontiguousarray(A_in, dtype=np.float64)
    b_arr = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef const double[:, ::1] A = A_arr
    cdef const double[::1] b = b_arr
    cdef Py_ssize_t M = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    if max_iter <= 0:
        max_iter = 30 * (N + 2)
    x_arr = np.zeros(N)
    cdef double[::1] x = x_arr
    w_arr = np.empty(N)
    cdef double[::1] w = w_arr
    resid_arr = b_arr.copy()
    cdef double[::1] resid = resid_arr
    passive_arr = np.zeros(N, dtype=np.uint8)
    cdef unsigned char[::1] passive = passive_arr
    cols_arr = np.empty(N if N > 0 else 1, dtype=np.intp)
    cdef Py_ssize_t[::1] cols = cols_arr
    cdef Py_ssize_t cap = M if M < N else N
    Awork_arr = np.empty((M, cap if cap > 0 else 1))
    cdef double[:, ::1] Awork = Awork_arr
    bwork_arr = np.empty(M)
    cdef double[::1] bwork = bwork_arr
    sol_arr = np.empty(cap if cap > 0 else 1)
    cdef double[::1] sol = sol_arr
    cdef Py_ssize_t i, j, k, K, jbest, idrop
    cdef double scale, tol, wbest, smin, alpha, ratio, rnorm, acc, rn2
    cdef int it = 0, ls_flag

    scale = 1.0
    cdef double amax = 0.0, bmax = 0.0
    for i in range(M):
        for j in range(N):
            if A[i, j] > amax:
                amax = A[i, j]
            elif -A[i, j] > amax:
                amax = -A[i, j]
        if b[i] > bmax:
            bmax = b[i]
        elif -b[i] > bmax:
            bmax = -b[i]
    if amax * bmax > 1.0:
        scale = amax * bmax
    tol = 1e-12 * scale

    # w = A^T resid
    for j in range(N):
        acc = 0.0
        for i in range(M):
            acc += A[i, j] * resid[i]
        w[j] = acc

    cdef double rn_prev = 1e308
    cdef int stalled = 0
    while True:
        rn2 = 0.0
        for i in range(M):
            rn2 += resid[i] * resid[i]
        rn2 = sqrt(rn2)
        if rnorm_tol > 0.0 and rn2 <= rnorm_tol:
            break
        # add/drop cycling without residual progress: report non-convergence
        # now instead of burning the whole iteration budget
        if rn2 > rn_prev * (1.0 - 1e-10):
            stalled += 1
            if stalled >= 3:
                return x_arr, rn2, False
        else:
            stalled = 0
        rn_prev = rn2
        jbest = -1
        wbest = tol
        for j in range(N):
            if not passive[j] and w[j] > wbest:
                wbest = w[j]
                jbest = j
        if jbest < 0:
            break
        passive[jbest] = 1
        while True:
            it += 1
            if it > max_iter:
                rnorm = _residual_norm(A, b, x, resid)
                return x_arr, rnorm, False
            K = 0
            for j in range(N):
                if passive[j]:
                    cols[K] = j
                    K += 1
            ls_flag = _ls_solve(A, b, cols, K, Awork, bwork, sol)
            if ls_flag != 0:
                rnorm = _residual_norm(A, b, x, resid)
                return x_arr, rnorm, False
            smin = 1.0
            for k in range(K):
                if sol[k] <= 0.0 and sol[k] < smin:
                    smin = sol[k]
            if smin > 0.0:
                for j in range(N):
                    x[j] = 0.0
                for k in range(K):
                    x[cols[k]] = sol[k]
                break
            alpha = 1.0
            for k in range(K):
                if sol[k] <= 0.0:
                    ratio = x[cols[k]] / (x[cols[k]] - sol[k])
                    if ratio < alpha:
                        alpha = ratio
            for k in range(K):
                x[cols[k]] = x[cols[k]] + alpha * (sol[k] - x[cols[k]])
            for k in range(K):
                if x[cols[k]] <= 1e-14 * scale:
                    x[cols[k]] = 0.0
                    passive[cols[k]] = 0
            K = 0
            for j in range(N):
                if passive[j]:
                    K += 1
            if K == 0:
                break
        # resid = b - A x ; w = A^T resid
        for i in range(M):
            acc = b[i]
            for j in range(N):
                if x[j] != 0.0:
                    acc -= A[i, j] * x[j]
            resid[i] = acc
        for j in range(N):
            acc = 0.0
            for i in range(M):
                acc += A[i, j] * resid[i]
            w[j] = acc
    rnorm = 0.0
    for i in range(M):
        rnorm += resid[i] * resid[i]
    return x_arr, sqrt(rnorm), True


cdef double _residual_norm(const double[:, ::1] A, const double[::1] b, const double[::1] x,
                           double[::1] resid) noexcept:
    cdef Py_ssize_t M = A.shape[0]
    cdef Py_ssize_t N = A.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, ss = 0.0
    for i in range(M):
        acc = b[i]
        for j in range(N):
            acc -= A[i, j] * x[j]
        resid[i] = acc
        ss += acc * acc
    return sqrt(ss)


def qp_project(G_in, g_in, ubar_in, double feas_tol=1e-9, int max_iter=0):
    """Euclidean projection of ubar onto {u : G u <= g} via LDP/NNLS.

    Same return convention as the Python backend.
    """
    G = np.ascontiguousarray(G_in, dtype=np.float64)
    g = np.ascontiguousarray(g_in, dtype=np.float64)
    ubar = np.ascontiguousarray(ubar_in, dtype=np.float64)
    cdef Py_ssize_t p = G.shape[0]
    cdef Py_ssize_t m = G.shape[1]
    if p == 0:
        return QP_FEASIBLE, ubar.copy(), np.zeros(0), 1.0, np.zeros(0)
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
    if r[m] >= 0.0:
        return QP_ITER_LIMIT, ubar.copy(), np.zeros(p), rnorm, mu
    u = ubar - r[:m] / r[m]
    lam = -mu / r[m]
    return QP_FEASIBLE, u, lam, rnorm, mu
