"""Constraint-tightened safety projection.

Converts the robust next-state safety requirement (which quantifies over
a model-uncertainty ball and a noise ball) into a finite set of tightened
linear constraints, then projects the nominal input onto them: the row-i
right-hand side h_i is reduced by

    e_bar_i = (zeta * n * beta(delta/(2n)) + sqrt(2 r n / delta)) * ||H_i||_2,

which is the composition of two ball tightenings of the same halfspace.
The projection is a tiny dense QP solved to a certified KKT residual, or
reported infeasible with a Farkas-type certificate plus the
least-infeasible fallback point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .confidence import ConfidenceConfig, beta, zeta
from .types import InputSet, LtiModel

FEASIBLE = "feasible"
INFEASIBLE = "infeasible"

KKT_TOL = 1e-6
PRIMAL_TOL = 1e-8


class ProjectionError(RuntimeError):
    """Numerical failure of the projection solver (distinct from infeasibility)."""


def robust_halfspace_tighten(a, b, c: float, W: np.ndarray, d_radius: float) -> float:
    """Right-hand side of {u : a^T u <= c'} equal to
    {u : a^T u + b^T w <= c for all w with w^T W w <= d_radius}.

    Returns c' = c - sqrt(d_radius) * ||W^{-1/2} b||_2.
    """
    if d_radius < 0:
        raise ValueError("d_radius must be nonnegative")
    W = np.asarray(W, dtype=float)
    try:
        Lw = np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise ValueError("W must be symmetric positive definite") from None
    y = _core.lower_solve(Lw, np.asarray(b, dtype=float).reshape(-1, 1))
    return float(c) - math.sqrt(d_radius) * float(np.linalg.norm(y))


@dataclass(frozen=True)
class TightenedProgram:
    """The finite projection program for one step."""

    A_hat: np.ndarray
    B_hat: np.ndarray
    x: np.ndarray
    H_next: np.ndarray
    h_next: np.ndarray
    e_bar: np.ndarray
    input_set: InputSet
    u_nominal: np.ndarray


def build_tightened_program(model_est: LtiModel, x, H_next, h_next,
                            cfg: ConfidenceConfig, beta_val: float, zeta_val: float,
                            input_set: InputSet, u_nominal) -> TightenedProgram:
    """Tighten each safety row by the model-uncertainty and noise balls.

    e_bar_i equals two sequential applications of
    :func:`robust_halfspace_tighten` with W = I and b = H_i^T: first with
    ball radius (zeta n beta)^2, then with radius 2 r n / delta.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    H_next = np.atleast_2d(np.asarray(H_next, dtype=float))
    h_next = np.atleast_1d(np.asarray(h_next, dtype=float))
    if H_next.shape[0] != h_next.shape[0]:
        raise ValueError("H_next and h_next row counts differ")
    if H_next.shape[0] and H_next.shape[1] != x.shape[0]:
        raise ValueError("H_next column count must equal the state dimension")
    if beta_val < 0 or zeta_val < 0:
        raise ValueError("beta and zeta must be nonnegative")
    row_norms = np.linalg.norm(H_next, axis=1) if H_next.shape[0] else np.zeros(0)
    scale = zeta_val * cfg.n * beta_val + math.sqrt(2.0 * cfg.r * cfg.n / cfg.delta)
    e_bar = scale * row_norms
    return TightenedProgram(
        A_hat=model_est.A, B_hat=model_est.B, x=x, H_next=H_next, h_next=h_next,
        e_bar=e_bar, input_set=input_set,
        u_nominal=np.ascontiguousarray(u_nominal, dtype=np.float64),
    )


@dataclass
class FilterResult:
    """Outcome of the projection.

    Feasible: ``u`` is the unique minimizer of ||u - u_nominal|| over the
    tightened set, with multiplier-certified ``kkt_residual``.

    Infeasible: ``u`` is None; ``farkas_ray`` certifies emptiness
    (mu >= 0, G^T mu = 0, g^T mu < 0 for the stacked constraints) and
    ``fallback_u`` is the least-infeasible point (state rows uniformly
    relaxed by the smallest feasible amount, reported as
    ``max_violation``). ``distance`` then refers to the fallback point.
    """

    status: str
    u: np.ndarray | None
    distance: float
    kkt_residual: float
    active_tightening: np.ndarray
    fallback_u: np.ndarray | None = None
    max_violation: float = 0.0
    farkas_ray: np.ndarray | None = None

    @property
    def feasible(self) -> bool:
        return self.status == FEASIBLE

    def applied_input(self) -> np.ndarray:
        """The input the default harness policy applies."""
        return self.u if self.feasible else self.fallback_u


def _stack_constraints(prog: TightenedProgram):
    G_state = prog.H_next @ prog.B_hat if prog.H_next.shape[0] else np.zeros((0, prog.B_hat.shape[1]))
    rhs_state = prog.h_next - prog.e_bar - prog.H_next @ (prog.A_hat @ prog.x) \
        if prog.H_next.shape[0] else np.zeros(0)
    G_u, g_u = prog.input_set.halfspaces()
    G = np.ascontiguousarray(np.vstack([G_state, G_u]))
    g = np.ascontiguousarray(np.concatenate([rhs_state, g_u]))
    return G, g, G_state, rhs_state


def _kkt_residual(G, g, ubar, u, lam) -> float:
    stationarity = np.abs(u - ubar + G.T @ lam).max(initial=0.0)
    slack = G @ u - g
    primal = max(0.0, slack.max(initial=0.0))
    dual = max(0.0, -lam.min(initial=0.0))
    comp = np.abs(lam * slack).max(initial=0.0)
    return float(max(stationarity, primal, dual, comp))


def solve_projection(prog: TightenedProgram) -> FilterResult:
    """Project the nominal input onto the tightened constraint set.

    Raises :class:`ProjectionError` on solver non-convergence; genuine
    emptiness is a status, not an error.
    """
    G, g, G_state, rhs_state = _stack_constraints(prog)
    ubar = prog.u_nominal
    status, u, lam, _, mu = _core.qp_project(G, g, ubar)
    if status == _core.QP_ITER_LIMIT:
        raise ProjectionError("projection QP failed to converge within the iteration cap")
    if status == _core.QP_FEASIBLE:
        kkt = _kkt_residual(G, g, ubar, u, lam)
        primal = max(0.0, float((G @ u - g).max(initial=0.0)))
        if kkt > KKT_TOL or primal > PRIMAL_TOL:
            raise ProjectionError(
                f"projection KKT residual {kkt:.3e} / primal violation "
                f"{primal:.3e} exceed tolerances ({KKT_TOL:g}, {PRIMAL_TOL:g})")
        return FilterResult(
            status=FEASIBLE, u=u, distance=float(np.linalg.norm(u - ubar)),
            kkt_residual=kkt, active_tightening=prog.e_bar.copy(),
        )
    # Infeasible: find the least-infeasible point by bisecting a uniform
    # relaxation t of the state rows (u in U stays hard); U is nonempty,
    # so a large enough t is always feasible.
    farkas = mu.copy()
    n_state = rhs_state.shape[0]
    u0 = prog.input_set.clip(prog.input_set.interior_point())
    t_hi = max(0.0, float((G_state @ u0 - rhs_state).max(initial=0.0))) * (1 + 1e-9) + 1e-12
    t_lo = 0.0
    relax = np.zeros_like(g)
    best_u = u0
    for _ in range(48):
        t_mid = 0.5 * (t_lo + t_hi)
        relax[:n_state] = t_mid
        s_mid, u_mid, _, _, _ = _core.qp_project(G, g + relax, ubar)
        if s_mid == _core.QP_FEASIBLE:
            t_hi = t_mid
            best_u = u_mid
        else:
            # infeasible or boundary-ambiguous: stay on the relaxed side
            t_lo = t_mid
    # the applied fallback must respect U exactly, not just to solver slack
    best_u = prog.input_set.clip(best_u)
    max_violation = max(0.0, float((G_state @ best_u - rhs_state).max(initial=0.0)))
    return FilterResult(
        status=INFEASIBLE, u=None,
        distance=float(np.linalg.norm(best_u - ubar)),
        kkt_residual=float("nan"), active_tightening=prog.e_bar.copy(),
        fallback_u=best_u, max_violation=max_violation, farkas_ray=farkas,
    )


@dataclass(frozen=True)
class FilterOptions:
    """Optional behaviors of the per-step pipeline.

    ``noise_only_switch`` drops the (vanishing) model-uncertainty term from
    the tightening once it falls below ``noise_only_ratio`` times the noise
    term.
    Off by default: the full tightening already converges to the
    noise-only one.
    """

    noise_only_switch: bool = False
    noise_only_ratio: float = 1e-6


@dataclass
class StepDiagnostics:
    beta: float
    zeta: float
    e_bar_max: float
    model_term: float
    noise_term: float
    post_weighted_norm: float
    noise_only_switched: bool = False


def safe_step(est, cfg: ConfidenceConfig, x, u_nominal, safety, k: int,
              options: FilterOptions = FilterOptions()) -> tuple[FilterResult, StepDiagnostics]:
    """End-to-end per-step pipeline: estimate -> radii -> tighten -> project.

    ``est`` must have absorbed transitions 0..k-1; the constraint pair for
    step k+1 is taken from the schedule.
    """
    H_next, h_next = safety.at(k + 1)
    model = est.model()
    beta_val = beta(cfg, est.logdet_V, cfg.delta / (2.0 * cfg.n))
    zeta_val = zeta(est.V_chol, x, safety.input_set)
    model_term = zeta_val * cfg.n * beta_val
    noise_term = math.sqrt(2.0 * cfg.r * cfg.n / cfg.delta)
    switched = bool(options.noise_only_switch
                    and model_term <= options.noise_only_ratio * noise_term)
    prog = build_tightened_program(
        model, x, H_next, h_next, cfg,
        beta_val=0.0 if switched else beta_val,
        zeta_val=0.0 if switched else zeta_val,
        input_set=safety.input_set, u_nominal=u_nominal,
    )
    res = solve_projection(prog)
    u_applied = res.applied_input()
    q = np.concatenate([np.asarray(x, dtype=float), u_applied])
    post_norm = float(np.linalg.norm(_core.lower_solve(est.V_chol, q.reshape(-1, 1))))
    # u_applied lies in U up to solver slack, so the realized weighted norm
    # can exceed the vertex max only by that slack
    if post_norm > zeta_val + 1e-5:
        raise AssertionError(
            f"a-posteriori weighted norm {post_norm} exceeds zeta {zeta_val}"
        )
    diag = StepDiagnostics(
        beta=beta_val, zeta=zeta_val,
        e_bar_max=float(prog.e_bar.max(initial=0.0)),
        model_term=model_term, noise_term=noise_term,
        post_weighted_norm=post_norm, noise_only_switched=switched,
    )
    return res, diag
