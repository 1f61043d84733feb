"""Confidence radius beta_k and input-dependent scale zeta_k.

These are the two ingredients of the constraint tightening: beta_k bounds
the weighted estimation error per model row with probability 1 - delta,
and zeta_k converts it into a bound on the state-prediction error by
maximizing the V^{-1/2}-weighted norm of the stacked [x; u] over the
admissible input set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .types import VERTEX_CAP, InputSet


@dataclass(frozen=True)
class ConfidenceConfig:
    """Known bounds and tail budget.

    r bounds the noise covariance (W <= r I), s bounds ||[A B]||_F,
    lam is the ridge regularizer, delta the per-step failure probability.

    By default the lambda exponent inside the log-determinant ratio is the
    full regressor dimension d = n + m, so the ratio is exactly 1 at k = 0;
    ``strict_paper_exponent`` switches it to n for comparison runs (the two
    coincide when lam = 1).
    """

    r: float
    s: float
    lam: float
    delta: float
    n: int
    m: int
    strict_paper_exponent: bool = False

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")
        if self.r <= 0 or self.s <= 0 or self.lam <= 0:
            raise ValueError("r, s and lambda must be positive")
        if self.n < 1 or self.m < 1:
            raise ValueError("dimensions must satisfy n >= 1, m >= 1")

    @property
    def d(self) -> int:
        return self.n + self.m


def beta(cfg: ConfidenceConfig, logdet_V: float, delta_arg: float) -> float:
    """Confidence radius r * sqrt(2 log(det(V)^{1/2} / (lam^{e/2} delta))) + sqrt(lam) s.

    The exponent e is n + m by default and n in strict-paper mode. The
    radicand is clamped at zero from below; under the precondition
    V >= lam I it is at least 2 log(1/delta_arg) > 0, so the clamp only
    guards rounding.
    """
    if not (0.0 < delta_arg < 1.0):
        raise ValueError("delta_arg must lie in (0, 1)")
    expo = cfg.n if cfg.strict_paper_exponent else cfg.d
    radicand = logdet_V - expo * math.log(cfg.lam) - 2.0 * math.log(delta_arg)
    return cfg.r * math.sqrt(max(radicand, 0.0)) + math.sqrt(cfg.lam) * cfg.s


def zeta(V_chol: np.ndarray, x, input_set: InputSet, cap: int = VERTEX_CAP) -> float:
    """max over u in U of ||V^{-1/2} [x; u]||_2.

    The norm is convex in u and affine in the stacked argument, so the max
    over a polytope is attained at a vertex; it is computed exactly by a
    triangular solve per vertex.
    """
    verts = input_set.vertices(cap=cap)
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _core.zeta_max(V_chol, x, np.ascontiguousarray(verts))


def weighted_row_errors(theta_true: np.ndarray, theta_hat: np.ndarray,
                        V_chol: np.ndarray) -> np.ndarray:
    """||V^{1/2}(theta_hat_i - theta_i)||_2 for every row i.

    Both theta arguments are (n+m) x n with column i holding row i's
    stacked parameters. Uses the identity e^T V e = ||L^T e||^2.
    """
    E = np.asarray(theta_hat, dtype=float) - np.asarray(theta_true, dtype=float)
    return np.linalg.norm(V_chol.T @ E, axis=0)


def confidence_holds(theta_true, theta_hat, V_chol, beta_value: float) -> bool:
    """Simulator-side oracle: every weighted row error is <= beta_value."""
    return bool(np.all(weighted_row_errors(theta_true, theta_hat, V_chol) <= beta_value))
