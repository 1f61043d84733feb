"""Ground-truth plant, excitation, PoE monitoring and the closed-loop
Monte Carlo harness.

Randomness: every run owns a single numpy ``Generator`` over PCG64 seeded
from a ``SeedSequence``; per step the draw order is fixed (excitation
first, then process noise), so a (seed, scenario) pair determines the
trajectory exactly. Normal variates use numpy's ziggurat sampler.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betaincinv

from .confidence import beta, confidence_holds, zeta
from .estimator import RidgeEstimator
from .safety_filter import FilterOptions, safe_step
from .types import LtiModel, NoiseSpec, SafetySpec, check_safety

#: Frozen RunTrace CSV column order (x, u blocks expand per dimension).
TRACE_COLUMNS = ("k", "x", "u_nominal", "u_applied", "safe", "status",
                 "beta", "zeta", "e_bar_max", "distance", "alpha_hat")


class Plant:
    """x[k+1] = A x[k] + B u[k] + w[k] with w ~ N(0, W).

    The noise factor M (M M^T = W) comes from a symmetric
    eigendecomposition, so rank-deficient W (including W = 0) is fine.
    """

    def __init__(self, model: LtiModel, noise: NoiseSpec, x0, rng: np.random.Generator):
        if noise.n != model.n:
            raise ValueError("noise dimension does not match the model")
        self.model = model
        self.noise = noise
        self.W_chol = noise.sqrt_factor()
        self.x = np.array(x0, dtype=float).reshape(model.n)
        self.k = 0
        self.rng = rng

    def step(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.model.m,) or not np.all(np.isfinite(u)):
            raise ValueError("u must be a finite vector of length m")
        g = self.rng.standard_normal(self.model.n)
        self.x = self.model.A @ self.x + self.model.B @ u + self.W_chol @ g
        self.k += 1
        return self.x


class PoeMonitor:
    """Windowed excitation monitor: smallest/largest eigenvalue of
    Xi = sum over the last T0 steps of [x; u][x; u]^T."""

    def __init__(self, n: int, m: int, window: int):
        if window < 1:
            raise ValueError("window length must be >= 1")
        self.window = window
        d = n + m
        self._buf = np.zeros((window, d))
        self._count = 0
        self._idx = 0
        self._Xi = np.zeros((d, d))
        self._since_rebuild = 0
        self.alpha_hat = 0.0
        self.gamma_hat = 0.0

    def update(self, x, u) -> tuple[float, float]:
        z = np.concatenate([np.asarray(x, float), np.asarray(u, float)])
        if self._count == self.window:
            old = self._buf[self._idx]
            self._Xi -= np.outer(old, old)
        else:
            self._count += 1
        self._buf[self._idx] = z
        self._idx = (self._idx + 1) % self.window
        self._Xi += np.outer(z, z)
        self._since_rebuild += 1
        if self._since_rebuild >= 4 * self.window:  # kill float drift
            self._Xi = self._buf[: self._count].T @ self._buf[: self._count]
            self._since_rebuild = 0
        eigs = np.linalg.eigvalsh(self._Xi)
        self.alpha_hat = max(float(eigs[0]), 0.0)
        self.gamma_hat = float(eigs[-1])
        return self.alpha_hat, self.gamma_hat


def excitation_draw(kind: str, param: float, m: int, rng: np.random.Generator) -> np.ndarray:
    """Additive input perturbation (the harness clips u back into U)."""
    if kind == "none":
        return np.zeros(m)
    if kind == "uniform_dither":
        return rng.uniform(-param, param, m)
    if kind == "gaussian_dither":
        return param * rng.standard_normal(m)
    if kind == "prbs":
        return param * (2.0 * rng.integers(0, 2, m) - 1.0)
    raise ValueError(f"unknown excitation kind {kind!r}")


@dataclass(frozen=True)
class Scenario:
    """Everything one closed-loop run needs besides its seed."""

    model: LtiModel
    noise: NoiseSpec
    x0: np.ndarray
    conf: ConfidenceConfig
    safety: SafetySpec
    policy_kind: str = "zero"            # zero | constant | feedback
    policy_value: np.ndarray | None = None   # constant u, or gain K
    excitation_kind: str = "none"
    excitation_param: float = 0.0
    horizon: int = 100
    filter_options: FilterOptions = field(default_factory=FilterOptions)
    poe_window: int = 0                  # 0 -> default 2 (n + m)

    def nominal(self, x: np.ndarray) -> np.ndarray:
        if self.policy_kind == "zero":
            return np.zeros(self.model.m)
        if self.policy_kind == "constant":
            return np.asarray(self.policy_value, dtype=float)
        if self.policy_kind == "feedback":
            return np.asarray(self.policy_value, dtype=float) @ x
        raise ValueError(f"unknown policy kind {self.policy_kind!r}")


@dataclass
class RunTrace:
    """Per-step record of one run; one row per simulated step."""

    n: int
    m: int
    seed: int
    config_digest: str
    k: np.ndarray
    x: np.ndarray
    u_nominal: np.ndarray
    u_applied: np.ndarray
    safe: np.ndarray
    status: list
    beta: np.ndarray
    zeta: np.ndarray
    e_bar_max: np.ndarray
    distance: np.ndarray
    alpha_hat: np.ndarray
    next_safe: np.ndarray
    final_x: np.ndarray
    feasible_steps: int
    infeasible_steps: int
    violations_after_feasible: int
    coverage_ok: bool
    coverage_beta: float
    tau: np.ndarray   # model-uncertainty tightening term, k = 0..horizon

    @property
    def horizon(self) -> int:
        return self.k.shape[0]

    def to_csv(self, path) -> None:
        """Write rows in the frozen column order (see TRACE_COLUMNS)."""
        with open(path, "w", newline="") as fh:
            head = ["k"]
            head += [f"x_{i}" for i in range(self.n)]
            head += [f"u_nom_{j}" for j in range(self.m)]
            head += [f"u_{j}" for j in range(self.m)]
            head += ["safe", "status", "beta", "zeta", "e_bar_max", "distance", "alpha_hat"]
            fh.write(",".join(head) + "\n")
            for t in range(self.horizon):
                row = [str(int(self.k[t]))]
                row += [repr(float(v)) for v in self.x[t]]
                row += [repr(float(v)) for v in self.u_nominal[t]]
                row += [repr(float(v)) for v in self.u_applied[t]]
                row.append("1" if self.safe[t] else "0")
                row.append(self.status[t])
                row += [repr(float(v)) for v in
                        (self.beta[t], self.zeta[t], self.e_bar_max[t],
                         self.distance[t], self.alpha_hat[t])]
                fh.write(",".join(row) + "\n")


def run_closed_loop(sc: Scenario, seed: int, config_digest: str = "") -> RunTrace:
    """Simulate one run: nominal + excitation, clip to U, filter, apply,
    measure, update estimator and PoE monitor, record."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    n, m = sc.model.n, sc.model.m
    plant = Plant(sc.model, sc.noise, sc.x0, rng)
    est = RidgeEstimator(n, m, sc.conf.lam)
    poe = PoeMonitor(n, m, sc.poe_window or 2 * (n + m))
    T = sc.horizon
    xs = np.zeros((T, n)); unom = np.zeros((T, m)); uapp = np.zeros((T, m))
    safe = np.zeros(T, bool); nsafe = np.zeros(T, bool)
    betas = np.zeros(T); zetas = np.zeros(T); ebars = np.zeros(T)
    dists = np.zeros(T); alphas = np.zeros(T)
    status = []
    tau = np.zeros(T + 1)
    feas = infeas = viol = 0
    x = plant.x.copy()
    for k in range(T):
        u_bar = sc.safety.input_set.clip(
            sc.nominal(x) + excitation_draw(sc.excitation_kind, sc.excitation_param, m, rng))
        res, diag = safe_step(est, sc.conf, x, u_bar, sc.safety, k, sc.filter_options)
        u = res.applied_input()
        H_now, h_now = sc.safety.at(k)
        safe_now, _ = check_safety(H_now, h_now, x)
        x_next = plant.step(u)
        H_next, h_next = sc.safety.at(k + 1)
        safe_next, _ = check_safety(H_next, h_next, x_next)
        est.update(x, u, x_next)
        alpha, _ = poe.update(x, u)
        xs[k] = x; unom[k] = u_bar; uapp[k] = u
        safe[k] = safe_now; nsafe[k] = safe_next
        betas[k] = diag.beta; zetas[k] = diag.zeta; ebars[k] = diag.e_bar_max
        dists[k] = res.distance; alphas[k] = alpha
        status.append(res.status)
        tau[k] = diag.model_term
        if res.feasible:
            feas += 1
            if not safe_next:
                viol += 1
        else:
            infeas += 1
        x = x_next
    # final tighten magnitude and confidence coverage at k = horizon
    beta_f = beta(sc.conf, est.logdet_V, sc.conf.delta / (2.0 * n))
    tau[T] = zeta(est.V_chol, x, sc.safety.input_set) * n * beta_f
    cov_beta = beta(sc.conf, est.logdet_V, sc.conf.delta / n)
    cov_ok = confidence_holds(sc.model.theta(), est.theta_hat, est.V_chol, cov_beta)
    return RunTrace(
        n=n, m=m, seed=seed, config_digest=config_digest,
        k=np.arange(T), x=xs, u_nominal=unom, u_applied=uapp,
        safe=safe, status=status, beta=betas, zeta=zetas, e_bar_max=ebars,
        distance=dists, alpha_hat=alphas, next_safe=nsafe, final_x=x.copy(),
        feasible_steps=feas, infeasible_steps=infeas,
        violations_after_feasible=viol, coverage_ok=cov_ok,
        coverage_beta=cov_beta, tau=tau,
    )


def binomial_lower_bound(successes: int, trials: int, confidence: float = 0.99) -> float:
    """One-sided Clopper-Pearson lower confidence bound on a proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if successes <= 0:
        return 0.0
    if successes >= trials:
        return float((1.0 - confidence) ** (1.0 / trials))
    return float(betaincinv(successes, trials - successes + 1, 1.0 - confidence))


@dataclass
class Aggregate:
    """Deterministic reduction over runs ordered by seed index."""

    runs: int
    horizon: int
    total_steps: int
    feasible_steps: int
    infeasible_steps: int
    violations_after_feasible: int
    coverage_count: int
    safe_freq: float
    safe_freq_lcb: float
    coverage_freq: float
    coverage_lcb: float
    infeasible_rate: float
    e_bar_curve: np.ndarray
    tau_curve: np.ndarray
    confidence: float = 0.99

    def report(self) -> str:
        lines = [
            f"runs                        {self.runs}",
            f"horizon                     {self.horizon}",
            f"feasible steps              {self.feasible_steps} / {self.total_steps}"
            f"  (infeasible rate {self.infeasible_rate:.6f})",
            f"violations after feasible   {self.violations_after_feasible}",
            f"per-step safe frequency     {self.safe_freq:.6f}"
            f"  (one-sided {self.confidence:.0%} LCB {self.safe_freq_lcb:.6f})",
            f"confidence coverage         {self.coverage_freq:.6f}"
            f"  (one-sided {self.confidence:.0%} LCB {self.coverage_lcb:.6f})",
        ]
        return "\n".join(lines)


def _run_for_pool(args):
    sc, seed, digest = args
    return run_closed_loop(sc, seed, digest)


def run_seeds(base_seed: int, runs: int) -> list[int]:
    """Per-run seeds derived deterministically from the base seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in
            np.random.SeedSequence(base_seed).spawn(runs)]


def monte_carlo(sc: Scenario, runs: int, base_seed: int, threads: int = 1,
                config_digest: str = "", collect_traces: bool = False,
                confidence: float = 0.99):
    """Independent runs + aggregate statistics (binomial LCBs included).

    Returns (Aggregate, traces) where traces is [] unless requested.
    """
    if runs < 1:
        raise ValueError("runs must be >= 1")
    seeds = run_seeds(base_seed, runs)
    jobs = [(sc, s, config_digest) for s in seeds]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            traces = list(pool.map(_run_for_pool, jobs, chunksize=max(1, runs // (4 * threads))))
    else:
        traces = [_run_for_pool(j) for j in jobs]
    T = sc.horizon
    feas = sum(t.feasible_steps for t in traces)
    infeas = sum(t.infeasible_steps for t in traces)
    viol = sum(t.violations_after_feasible for t in traces)
    cov = sum(1 for t in traces if t.coverage_ok)
    ebar_curve = np.mean([t.e_bar_max for t in traces], axis=0) if T else np.zeros(0)
    tau_curve = np.mean([t.tau for t in traces], axis=0)
    total = runs * T
    agg = Aggregate(
        runs=runs, horizon=T, total_steps=total,
        feasible_steps=feas, infeasible_steps=infeas,
        violations_after_feasible=viol, coverage_count=cov,
        safe_freq=(feas - viol) / feas if feas else 1.0,
        safe_freq_lcb=binomial_lower_bound(feas - viol, feas, confidence) if feas else 0.0,
        coverage_freq=cov / runs,
        coverage_lcb=binomial_lower_bound(cov, runs, confidence),
        infeasible_rate=infeas / total if total else 0.0,
        e_bar_curve=ebar_curve, tau_curve=tau_curve, confidence=confidence,
    )
    return agg, (traces if collect_traces else [])
