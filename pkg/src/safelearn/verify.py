"""Statistical and property verification suites.

Three suites back the guarantees the library makes:
  * coverage   -- the confidence ellipsoids contain the true model rows at
                  least as often as advertised (statistical, ground truth
                  known to the simulator);
  * safety     -- among filter-feasible steps, the next state satisfies the
                  constraints at least as often as advertised (statistical);
  * equivalence -- the tightened finite program matches the
                  robust-quantified program on sampled uncertainty balls
                  (property, exact math checked by sampling).

Shared by the CLI ``verify`` subcommand and the acceptance tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sim import Scenario, monte_carlo
from .types import Box


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def coverage_suite(scenario: Scenario, runs: int, base_seed: int,
                   threads: int = 1, confidence: float = 0.99) -> SuiteResult:
    """Empirical frequency of the per-run confidence event must clear
    1 - delta with a one-sided binomial bound."""
    agg, _ = monte_carlo(scenario, runs=runs, base_seed=base_seed,
                         threads=threads, confidence=confidence)
    target = 1.0 - scenario.conf.delta
    passed = agg.coverage_lcb >= target
    detail = (f"coverage {agg.coverage_freq:.4f} "
              f"(LCB {agg.coverage_lcb:.4f}) vs required {target:.2f} "
              f"[runs={runs}, k={scenario.horizon}]")
    return SuiteResult("confidence-coverage", passed, detail)


def safety_suite(scenario: Scenario, runs: int, base_seed: int,
                 threads: int = 1, confidence: float = 0.99) -> SuiteResult:
    """Per-step safety frequency among feasible steps must clear 1 - delta
    with a one-sided binomial bound; infeasible steps reported separately."""
    agg, _ = monte_carlo(scenario, runs=runs, base_seed=base_seed,
                         threads=threads, confidence=confidence)
    target = 1.0 - scenario.conf.delta
    passed = agg.safe_freq_lcb >= target
    detail = (f"safe-step frequency {agg.safe_freq:.4f} "
              f"(LCB {agg.safe_freq_lcb:.4f}) vs required {target:.2f} "
              f"[feasible steps={agg.feasible_steps}, "
              f"infeasible rate={agg.infeasible_rate:.4f}]")
    return SuiteResult("per-step-safety", passed, detail)


# ---------------------------------------------------------------------------
# Tightened-program vs robust-program equivalence by sampling
# ---------------------------------------------------------------------------

def _sample_ball_pairs(rng, n: int, radius_v: float, radius_w: float, count: int):
    """(v, w) samples on the two ball boundaries.

    Half the pairs share a direction: the robust constraint quantifies over
    the product of the balls, and only near-aligned pairs can witness
    violations for points just outside the tightened set.
    """
    dirs_v = rng.standard_normal((count, n))
    dirs_v /= np.linalg.norm(dirs_v, axis=1, keepdims=True)
    dirs_w = rng.standard_normal((count, n))
    dirs_w /= np.linalg.norm(dirs_w, axis=1, keepdims=True)
    half = count // 2
    dirs_w[:half] = dirs_v[:half]
    return radius_v * dirs_v, radius_w * dirs_w


@dataclass
class EquivalenceInstance:
    A_hat: np.ndarray
    B_hat: np.ndarray
    x: np.ndarray
    H: np.ndarray
    h: np.ndarray
    e_bar: np.ndarray
    radius_v: float
    radius_w: float
    box: Box


def random_equivalence_instance(rng) -> EquivalenceInstance:
    """A random tightened program with a guaranteed strictly feasible point."""
    n = int(rng.integers(1, 4))
    m = int(rng.integers(1, 4))
    A_hat = rng.uniform(-1, 1, (n, n))
    B_hat = rng.uniform(-1, 1, (n, m))
    x = rng.uniform(-1, 1, n)
    p = int(rng.integers(1, 5))
    H = rng.uniform(-1, 1, (p, n))
    radius_v = float(rng.uniform(0.1, 1.0))
    radius_w = float(rng.uniform(0.1, 1.0))
    row_norms = np.linalg.norm(H, axis=1)
    e_bar = (radius_v + radius_w) * row_norms
    box = Box(np.full(m, -2.0), np.full(m, 2.0))
    u_slater = rng.uniform(-1, 1, m)
    margins = rng.uniform(0.3, 1.0, p)
    h = H @ (A_hat @ x + B_hat @ u_slater) + e_bar + margins
    return EquivalenceInstance(A_hat, B_hat, x, H, h, e_bar,
                               radius_v, radius_w, box)


def check_equivalence_instance(inst: EquivalenceInstance, rng,
                               samples: int = 100000,
                               probe_points: int = 4):
    """Returns (necessity_ok, falsifier_hit).

    necessity_ok: every probed tightened-feasible point satisfies all
    sampled robust constraints to within 1e-9.
    falsifier_hit: a point 1e-3 outside the tightened set violates some
    sampled constraint.
    """
    n = inst.x.shape[0]
    base_state = inst.A_hat @ inst.x
    rhs = inst.h - inst.e_bar - inst.H @ base_state   # rows: H B u <= rhs
    Gs = inst.H @ inst.B_hat
    Gu, gu = inst.box.halfspaces()
    G = np.vstack([Gs, Gu])
    g = np.concatenate([rhs, gu])
    from . import _core
    # probe points: projections of random nominals onto the tightened set
    points = []
    for _ in range(probe_points):
        status, u, _, _, _ = _core.qp_project(G, g, rng.uniform(-3, 3, Gs.shape[1]))
        if status == _core.QP_FEASIBLE:
            points.append(u)
    V, Wn = _sample_ball_pairs(rng, n, inst.radius_v, inst.radius_w, samples)
    HV = V @ inst.H.T + Wn @ inst.H.T          # (samples, p)
    worst_env = HV.max(axis=0)                 # per-row sampled sup of H(v+w)
    necessity_ok = True
    for u in points:
        lhs = inst.H @ (base_state + inst.B_hat @ u)
        if np.max(lhs + worst_env - inst.h) > 1e-9:
            necessity_ok = False
    # falsifier: push 1e-3 outside the tightened boundary of the most
    # forgiving row (smallest tightening scale) reachable through B_hat
    falsifier_hit = False
    reachable = np.flatnonzero(np.linalg.norm(Gs, axis=1) > 1e-8)
    if points and reachable.size:
        i = reachable[np.argmin(np.linalg.norm(inst.H[reachable], axis=1))]
        u0 = points[0]
        d = Gs[i] / np.linalg.norm(Gs[i])
        push = (rhs[i] - Gs[i] @ u0 + 1e-3) / np.linalg.norm(Gs[i])
        u_out = u0 + push * d                  # Gs[i] @ u_out = rhs[i] + 1e-3
        lhs = inst.H @ (base_state + inst.B_hat @ u_out)
        falsifier_hit = bool(np.max(lhs + worst_env - inst.h) > 0.0)
    return necessity_ok, falsifier_hit


def equivalence_suite(instances: int = 200, samples: int = 100000,
                      seed: int = 20240) -> SuiteResult:
    rng = np.random.default_rng(seed)
    necessity_failures = 0
    falsifier_hits = 0
    testable = 0
    for _ in range(instances):
        inst = random_equivalence_instance(rng)
        ok, hit = check_equivalence_instance(inst, rng, samples=samples)
        if not ok:
            necessity_failures += 1
        testable += 1
        if hit:
            falsifier_hits += 1
    hit_rate = falsifier_hits / testable if testable else 0.0
    passed = necessity_failures == 0 and hit_rate >= 0.95
    detail = (f"necessity failures {necessity_failures}/{instances}, "
              f"falsifier hit rate {hit_rate:.3f} (required >= 0.95) "
              f"[samples={samples}]")
    return SuiteResult("tightening-equivalence", passed, detail)


# ---------------------------------------------------------------------------
# Tightening decay diagnostics
# ---------------------------------------------------------------------------

def sqrt_log_over_k(k) -> float:
    return math.sqrt(math.log(k) / k)


def decay_metrics(tau: np.ndarray, checkpoints=(100, 10000)) -> dict:
    """Ratio diagnostics of the model-uncertainty term against the
    sqrt(log k / k) reference rate, with a factor-2 slack."""
    k1, k2 = checkpoints
    if len(tau) <= k2:
        raise ValueError(f"decay trace too short for checkpoint k={k2}")
    ratio = tau[k2] / tau[k1]
    bound = 2.0 * sqrt_log_over_k(k2) / sqrt_log_over_k(k1)
    out = {
        "k1": k1, "k2": k2,
        "tau_k1": float(tau[k1]), "tau_k2": float(tau[k2]),
        "ratio": float(ratio), "ratio_bound": float(bound),
        "ratio_ok": bool(ratio <= bound),
    }
    k3 = len(tau) - 1
    out["k3"] = k3
    out["tau_k3"] = float(tau[k3])
    out["final_ratio"] = float(tau[k3] / tau[k1])
    return out


def fit_decay_reference(tau: np.ndarray) -> np.ndarray:
    """Least-squares fit of c * sqrt(log k / k) to tau over k >= 2."""
    ks = np.arange(len(tau))
    f = np.zeros(len(tau))
    mask = ks >= 2
    f[mask] = np.sqrt(np.log(ks[mask]) / ks[mask])
    denom = float(f @ f)
    c = float(f @ tau) / denom if denom > 0 else 0.0
    return c * f
