"""Shared mathematical objects: LTI models, noise descriptions, safety
constraint schedules and admissible input sets.

Everything here is immutable after construction (arrays are marked
read-only), so instances can be shared freely across concurrent
Monte Carlo workers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _core

#: Default cap on box vertex enumeration (2^m corners).
VERTEX_CAP = 20


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, order="C")
    a.setflags(write=False)
    return a


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")


@dataclass(frozen=True)
class LtiModel:
    """A (possibly estimated) pair (A, B) for x[k+1] = A x[k] + B u[k] + w[k]."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _freeze(self.A)
        B = _freeze(self.B)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError(f"A must be square n x n with n >= 1, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise ValueError(f"B must be n x m with m >= 1, got {B.shape}")
        _require_finite(A, "A")
        _require_finite(B, "B")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def stacked(self) -> np.ndarray:
        """The n x (n+m) matrix [A B]."""
        return np.hstack([self.A, self.B])

    def frobenius_norm(self) -> float:
        return float(np.linalg.norm(self.stacked(), "fro"))

    def theta(self) -> np.ndarray:
        """(n+m) x n matrix whose column i stacks the i-th rows of A and B."""
        return np.vstack([self.A.T, self.B.T])


@dataclass(frozen=True)
class NoiseSpec:
    """True process-noise covariance W (simulator-only) and its known bound r."""

    W: np.ndarray
    r: float

    def __post_init__(self):
        W = _freeze(self.W)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError(f"W must be square, got {W.shape}")
        if not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("W must be symmetric")
        eigs = np.linalg.eigvalsh(W)
        if eigs.size and eigs[0] < -1e-10:
            raise ValueError(f"W must be positive semi-definite (min eig {eigs[0]:.3e})")
        if self.r <= 0:
            raise ValueError("noise bound r must be positive")
        if eigs.size and eigs[-1] > self.r * (1 + 1e-9) + 1e-12:
            raise ValueError(
                f"noise covariance bound violated: max eig of W = {eigs[-1]:.6g} "
                f"exceeds r = {self.r:.6g}"
            )
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "r", float(self.r))

    @classmethod
    def unchecked(cls, W, r: float) -> "NoiseSpec":
        """Construct without the W <= rI bound check.

        Exists only so negative-control experiments can understate r;
        W must still be symmetric PSD.
        """
        W = _freeze(W)
        if not np.allclose(W, W.T, atol=1e-12):
            raise ValueError("W must be symmetric")
        if np.linalg.eigvalsh(W)[0] < -1e-10:
            raise ValueError("W must be positive semi-definite")
        spec = cls.__new__(cls)
        object.__setattr__(spec, "W", W)
        object.__setattr__(spec, "r", float(r))
        return spec

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def sqrt_factor(self) -> np.ndarray:
        """M with M M^T = W, via symmetric eigendecomposition.

        Handles rank-deficient W (including W = 0).
        """
        vals, vecs = np.linalg.eigh(self.W)
        vals = np.clip(vals, 0.0, None)
        return vecs * np.sqrt(vals)


class InputSet:
    """Admissible input set U. Must be bounded: the tightening scale zeta
    maximizes a convex function over U, so vertex access makes it exact."""

    @property
    def m(self) -> int:
        raise NotImplementedError

    def vertices(self, cap: int = VERTEX_CAP) -> np.ndarray:
        """Complete vertex list as an (nv, m) array."""
        raise NotImplementedError

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        """(G, g) with U = {u : G u <= g}."""
        raise NotImplementedError

    def contains(self, u, tol: float = 1e-9) -> bool:
        G, g = self.halfspaces()
        return bool(np.all(G @ np.asarray(u, dtype=float) <= g + tol))

    def clip(self, u) -> np.ndarray:
        """Nearest point of U (Euclidean)."""
        raise NotImplementedError

    def interior_point(self) -> np.ndarray:
        return np.mean(self.vertices(), axis=0)


class Box(InputSet):
    """Axis-aligned box {u : lower <= u <= upper}."""

    def __init__(self, lower, upper):
        lower = _freeze(np.atleast_1d(lower))
        upper = _freeze(np.atleast_1d(upper))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise ValueError("lower and upper must be 1-D with matching shapes")
        _require_finite(lower, "lower")
        _require_finite(upper, "upper")
        if np.any(lower > upper):
            raise ValueError("box is empty: lower > upper in some coordinate")
        self.lower = lower
        self.upper = upper
        self._verts = None
        self._halfspaces = None

    @property
    def m(self) -> int:
        return self.lower.shape[0]

    def vertices(self, cap: int = VERTEX_CAP) -> np.ndarray:
        if self.m > cap:
            raise ValueError(
                f"vertex enumeration too large: 2^{self.m} box corners exceeds "
                f"the cap of 2^{cap}"
            )
        if self._verts is None:
            corners = itertools.product(*zip(self.lower, self.upper))
            self._verts = _freeze(np.array(list(corners), dtype=np.float64))
        return self._verts

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        if self._halfspaces is None:
            eye = np.eye(self.m)
            self._halfspaces = (_freeze(np.vstack([eye, -eye])),
                                _freeze(np.concatenate([self.upper, -self.lower])))
        return self._halfspaces

    def clip(self, u) -> np.ndarray:
        return np.clip(np.asarray(u, dtype=float), self.lower, self.upper)

    def __repr__(self):
        return f"Box(lower={self.lower.tolist()}, upper={self.upper.tolist()})"


class VertexPolytope(InputSet):
    """Bounded polytope given by both its complete vertex list and a
    halfspace description {u : G u <= g}.

    Consistency of the two descriptions is the caller's responsibility
    beyond the checks performed here: every vertex must satisfy the
    halfspaces (verified to 1e-9), and the halfspace set must be bounded
    (verified exactly via its recession cone).
    """

    def __init__(self, vertices, G, g, tol: float = 1e-9):
        verts = _freeze(np.atleast_2d(vertices))
        G = _freeze(np.atleast_2d(G))
        g = _freeze(np.atleast_1d(g))
        if verts.shape[0] == 0:
            raise ValueError("vertex list must be nonempty")
        m = verts.shape[1]
        if G.shape[1] != m or G.shape[0] != g.shape[0]:
            raise ValueError("halfspace shapes inconsistent with vertex dimension")
        worst = float(np.max(verts @ G.T - g)) if G.shape[0] else -np.inf
        if worst > tol:
            raise ValueError(
                f"vertex violates halfspaces by {worst:.3e} (tolerance {tol:g})"
            )
        # Bounded iff the recession cone {d : G d <= 0} is {0}, which holds
        # iff every +-e_j projects onto the cone at the origin.
        for j in range(m):
            for sign in (1.0, -1.0):
                e = np.zeros(m)
                e[j] = sign
                status, d, _, _, _ = _core.qp_project(G, np.zeros(G.shape[0]), e)
                if status != _core.QP_FEASIBLE or np.linalg.norm(d) > 1e-9:
                    raise ValueError("halfspace set is unbounded")
        self._verts = verts
        self._G = G
        self._g = g

    @property
    def m(self) -> int:
        return self._verts.shape[1]

    def vertices(self, cap: int = VERTEX_CAP) -> np.ndarray:
        return self._verts

    def halfspaces(self) -> tuple[np.ndarray, np.ndarray]:
        return self._G, self._g

    def clip(self, u) -> np.ndarray:
        status, proj, _, _, _ = _core.qp_project(self._G, self._g, np.asarray(u, dtype=float))
        if status != _core.QP_FEASIBLE:
            raise RuntimeError("projection onto a validated polytope failed")
        return proj

    def __repr__(self):
        return f"VertexPolytope({self._verts.shape[0]} vertices, m={self.m})"


def input_set_vertices(input_set: InputSet, cap: int = VERTEX_CAP) -> np.ndarray:
    """Complete vertex list of the input set; for a Box, all 2^m corners."""
    return input_set.vertices(cap=cap)


def check_safety(H: np.ndarray, h: np.ndarray, x) -> tuple[bool, float]:
    """Entrywise test H x <= h.

    Returns (safe, margin) with margin = max_i (H_i x - h_i); negative
    margin means strictly safe. Empty H (p = 0) is vacuously safe with
    margin -inf.
    """
    H = np.asarray(H, dtype=float)
    h = np.asarray(h, dtype=float)
    x = np.asarray(x, dtype=float)
    if H.ndim != 2 or h.ndim != 1 or H.shape[0] != h.shape[0]:
        raise ValueError(f"shape mismatch: H {H.shape}, h {h.shape}")
    if H.shape[0] == 0:
        return True, -np.inf
    if H.shape[1] != x.shape[0]:
        raise ValueError(f"shape mismatch: H {H.shape}, x {x.shape}")
    margin = float(np.max(H @ x - h))
    return margin <= 0.0, margin


@dataclass(frozen=True)
class SafetySpec:
    """Schedule of (H[k], h[k]) constraint pairs plus the input set U.

    Indexing past the end of the schedule repeats the last pair. A pair
    with zero rows means "no state constraint at that step".
    """

    schedule: tuple
    input_set: InputSet
    n: int = field(default=0)

    def __post_init__(self):
        if not self.schedule:
            raise ValueError("schedule must contain at least one (H, h) pair")
        frozen = []
        n = self.n
        for H, h in self.schedule:
            H = _freeze(np.atleast_2d(H)) if np.size(H) else _freeze(np.zeros((0, n)))
            h = _freeze(np.atleast_1d(h)) if np.size(h) else _freeze(np.zeros(0))
            if H.shape[0] != h.shape[0]:
                raise ValueError(f"H has {H.shape[0]} rows but h has {h.shape[0]} entries")
            if H.shape[0] and n and H.shape[1] != n:
                raise ValueError(f"H has {H.shape[1]} columns, expected n = {n}")
            if H.shape[0]:
                n = H.shape[1]
            frozen.append((H, h))
        object.__setattr__(self, "schedule", tuple(frozen))
        object.__setattr__(self, "n", n)

    @classmethod
    def constant(cls, H, h, input_set: InputSet) -> "SafetySpec":
        return cls(schedule=((H, h),), input_set=input_set)

    @classmethod
    def unconstrained(cls, n: int, input_set: InputSet) -> "SafetySpec":
        return cls(schedule=((np.zeros((0, n)), np.zeros(0)),), input_set=input_set, n=n)

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(H[k], h[k]); the last scheduled pair repeats beyond the schedule."""
        if k < 0:
            raise IndexError("schedule index must be nonnegative")
        return self.schedule[min(k, len(self.schedule) - 1)]
