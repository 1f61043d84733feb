"""Streaming regularized least squares for the stacked model [A B].

The estimator keeps, for regressors z[t] = [x[t]; u[t]] and targets
x[t+1], the Gram matrix V[k] = sum z z^T + lambda I together with its
lower Cholesky factor, the cross-moment accumulator S[k] = sum z x[t+1]^T,
and the current estimate theta_hat (column i solves V theta_i = S_i, so
row i of [A_hat B_hat] is theta_i^T). Updates are rank-one on the factor;
the estimate is re-solved against the updated factor each step.
"""

from __future__ import annotations

import numpy as np

from . import _core
from .types import LtiModel


class RidgeEstimator:
    """Recursive form of the regularized least-squares model estimate.

    Single-writer: updates are strictly sequential per run. Use ``copy()``
    for a read-only snapshot between updates.
    """

    def __init__(self, n: int, m: int, lam: float = 1.0):
        if lam <= 0:
            raise ValueError("regularizer lambda must be positive")
        if n < 1 or m < 1:
            raise ValueError("dimensions must satisfy n >= 1, m >= 1")
        self.n = int(n)
        self.m = int(m)
        self.lam = float(lam)
        d = self.n + self.m
        self._V = np.eye(d) * self.lam
        self._L = np.eye(d) * np.sqrt(self.lam)
        self._S = np.zeros((d, self.n))
        self._theta = np.zeros((d, self.n))
        self.k = 0
        self._logdet = d * np.log(self.lam)

    @property
    def d(self) -> int:
        return self.n + self.m

    @property
    def V(self) -> np.ndarray:
        """Gram matrix V[k] (copy)."""
        return self._V.copy()

    @property
    def V_chol(self) -> np.ndarray:
        """Lower Cholesky factor of V[k] (live array; do not mutate)."""
        return self._L

    @property
    def S(self) -> np.ndarray:
        return self._S.copy()

    @property
    def theta_hat(self) -> np.ndarray:
        """(n+m) x n matrix; column i is the estimate of [A_i^T; B_i^T]."""
        return self._theta.copy()

    @property
    def logdet_V(self) -> float:
        return self._logdet

    def update(self, x_prev, u_prev, x_next) -> None:
        """Absorb one observed transition."""
        z = np.empty(self.d)
        z[: self.n] = x_prev
        z[self.n:] = u_prev
        y = np.ascontiguousarray(x_next, dtype=np.float64)
        if y.shape != (self.n,):
            raise ValueError(f"x_next must have shape ({self.n},)")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(y))):
            raise ValueError("non-finite values in transition")
        _core.estimator_absorb(self._L, self._V, self._S, self._theta, z, y)
        self.k += 1
        self._logdet = 2.0 * float(np.sum(np.log(np.diag(self._L))))

    def model(self) -> LtiModel:
        """Current estimate as an LtiModel ([A_hat B_hat] rows = theta_i^T)."""
        flat = self._theta.T
        return LtiModel(A=flat[:, : self.n], B=flat[:, self.n:])

    def copy(self) -> "RidgeEstimator":
        out = RidgeEstimator(self.n, self.m, self.lam)
        out._V = self._V.copy()
        out._L = self._L.copy()
        out._S = self._S.copy()
        out._theta = self._theta.copy()
        out.k = self.k
        out._logdet = self._logdet
        return out

    # -- checkpoint format: plain text, theta_hat re-derived on load --

    def save(self, path) -> None:
        """Write the state as plain text (k, lambda, dims, V, S)."""
        with open(path, "w") as fh:
            fh.write("safelearn-estimator-v1\n")
            fh.write(f"k {self.k}\n")
            fh.write(f"lambda {self.lam!r}\n")
            fh.write(f"n {self.n}\n")
            fh.write(f"m {self.m}\n")
            fh.write("V\n")
            for row in self._V:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")
            fh.write("S\n")
            for row in self._S:
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def load(cls, path) -> "RidgeEstimator":
        with open(path) as fh:
            lines = [ln.rstrip("\n") for ln in fh]
        if not lines or lines[0] != "safelearn-estimator-v1":
            raise ValueError("not a safelearn estimator checkpoint")
        header = dict(ln.split(" ", 1) for ln in lines[1:5])
        n, m = int(header["n"]), int(header["m"])
        est = cls(n, m, float(header["lambda"]))
        est.k = int(header["k"])
        d = n + m
        if lines[5] != "V" or lines[6 + d] != "S":
            raise ValueError("malformed estimator checkpoint")
        V = np.array([[float(v) for v in lines[6 + i].split()] for i in range(d)])
        S = np.array([[float(v) for v in lines[7 + d + i].split()] for i in range(d)])
        if V.shape != (d, d) or S.shape != (d, n):
            raise ValueError("malformed estimator checkpoint")
        est._V = V
        est._S = S
        est._L = np.linalg.cholesky(V)
        est._theta = _core.chol_solve(est._L, S)
        est._logdet = 2.0 * float(np.sum(np.log(np.diag(est._L))))
        return est


def batch_fit(transitions, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Direct batch solution of the regularized least-squares problem.

    ``transitions`` is a nonempty list of (x_prev, u_prev, x_next) triples.
    Returns (A_hat, B_hat) minimizing
    sum ||x[t+1] - (A x[t] + B u[t])||^2 + lam (||A||_F^2 + ||B||_F^2).
    """
    if lam <= 0:
        raise ValueError("regularizer lambda must be positive")
    if not transitions:
        raise ValueError("transitions must be nonempty")
    x0, u0, _ = transitions[0]
    n = np.size(x0)
    m = np.size(u0)
    d = n + m
    Z = np.empty((len(transitions), d))
    Y = np.empty((len(transitions), n))
    for t, (xp, up, xn) in enumerate(transitions):
        xp = np.asarray(xp, dtype=float).ravel()
        up = np.asarray(up, dtype=float).ravel()
        xn = np.asarray(xn, dtype=float).ravel()
        if xp.size != n or up.size != m or xn.size != n:
            raise ValueError(f"transition {t} has inconsistent dimensions")
        Z[t, :n] = xp
        Z[t, n:] = up
        Y[t] = xn
    V = Z.T @ Z + lam * np.eye(d)
    theta = np.linalg.solve(V, Z.T @ Y)  # column i = theta_i
    flat = theta.T
    return flat[:, :n].copy(), flat[:, n:].copy()
