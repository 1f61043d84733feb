"""Plant, PoE monitor, excitation, closed loop, Monte Carlo."""

import numpy as np
import pytest

from safelearn import (Box, ConfidenceConfig, LtiModel, NoiseSpec, Plant,
                       PoeMonitor, SafetySpec, Scenario, binomial_lower_bound,
                       excitation_draw, monte_carlo, run_closed_loop)
from tests.conftest import coverage_scenario, safety_scenario


def make_rng(seed=0):
    return np.random.Generator(np.random.PCG64(seed))


class TestPlant:
    def test_noise_free_identity_fixed_point(self):
        plant = Plant(LtiModel(A=[[1.0]], B=[[0.0]]),
                      NoiseSpec(W=np.zeros((1, 1)), r=1.0), [1.0], make_rng())
        for _ in range(10):
            plant.step([0.0])
        assert plant.x[0] == 1.0
        assert plant.k == 10

    def test_one_step_arithmetic(self):
        plant = Plant(LtiModel(A=[[0.5]], B=[[1.0]]),
                      NoiseSpec(W=np.zeros((1, 1)), r=1.0), [1.0], make_rng())
        x = plant.step([1.0])
        assert x[0] == pytest.approx(1.5, abs=1e-15)

    def test_standard_normal_moments(self):
        # A = 0, B = 0, W = I: the state is a fresh standard normal draw
        plant = Plant(LtiModel(A=[[0.0]], B=[[0.0]]),
                      NoiseSpec(W=np.eye(1), r=1.0), [0.0], make_rng(42))
        draws = np.array([plant.step([0.0])[0] for _ in range(100000)])
        assert abs(draws.mean()) <= 0.02
        assert abs(draws.var() - 1.0) <= 0.03

    def test_seed_reproducibility(self):
        model = LtiModel(A=[[0.5]], B=[[1.0]])
        noise = NoiseSpec(W=np.eye(1) * 0.3, r=0.3)
        a = Plant(model, noise, [0.0], make_rng(9))
        b = Plant(model, noise, [0.0], make_rng(9))
        for _ in range(50):
            assert a.step([0.4])[0] == b.step([0.4])[0]

    def test_nonfinite_input_rejected(self):
        plant = Plant(LtiModel(A=[[0.5]], B=[[1.0]]),
                      NoiseSpec(W=np.zeros((1, 1)), r=1.0), [1.0], make_rng())
        with pytest.raises(ValueError):
            plant.step([np.nan])


class TestPoeMonitor:
    def test_constant_state_not_excited(self):
        mon = PoeMonitor(1, 1, window=2)
        for _ in range(4):
            alpha, gamma = mon.update([1.0], [0.0])
        assert np.allclose(mon._Xi, [[2.0, 0.0], [0.0, 0.0]])
        assert alpha == 0.0
        assert gamma == pytest.approx(2.0)

    def test_orthogonal_pairs_identity(self):
        mon = PoeMonitor(1, 1, window=2)
        mon.update([1.0], [0.0])
        alpha, gamma = mon.update([0.0], [1.0])
        assert alpha == pytest.approx(1.0, abs=1e-12)
        assert gamma == pytest.approx(1.0, abs=1e-12)

    def test_random_windows_excited(self):
        rng = np.random.default_rng(3)
        n = m = 1
        mon = PoeMonitor(n, m, window=50 * (n + m))
        alphas = []
        for t in range(1200):
            a, _ = mon.update(rng.normal(size=n), rng.normal(size=m))
            if t >= mon.window - 1:
                alphas.append(a)
        frac = np.mean([a > 0 for a in alphas])
        assert frac >= 0.99

    def test_incremental_matches_direct(self):
        rng = np.random.default_rng(8)
        mon = PoeMonitor(2, 1, window=7)
        zs = []
        for _ in range(40):
            x, u = rng.normal(size=2), rng.normal(size=1)
            mon.update(x, u)
            zs.append(np.concatenate([x, u]))
        direct = sum(np.outer(z, z) for z in zs[-7:])
        assert np.allclose(mon._Xi, direct, atol=1e-10)


class TestExcitation:
    def test_none_and_zero_amplitude(self):
        rng = make_rng()
        assert np.all(excitation_draw("none", 0.0, 3, rng) == 0.0)
        assert np.all(excitation_draw("uniform_dither", 0.0, 3, rng) == 0.0)

    def test_gaussian_variance(self):
        rng = make_rng(5)
        sigma = 0.7
        draws = np.concatenate(
            [excitation_draw("gaussian_dither", sigma, 1, rng) for _ in range(100000)])
        assert abs(draws.var() - sigma ** 2) <= 0.03 * sigma ** 2

    def test_prbs_values(self):
        rng = make_rng(6)
        draws = np.concatenate(
            [excitation_draw("prbs", 0.5, 2, rng) for _ in range(100)])
        assert set(np.round(draws, 12)) == {-0.5, 0.5}

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            excitation_draw("sawtooth", 1.0, 1, make_rng())


class TestClosedLoop:
    def test_zero_horizon_empty_trace(self):
        sc = coverage_scenario(horizon=0)
        tr = run_closed_loop(sc, 1)
        assert tr.horizon == 0
        assert tr.x.shape == (0, 2)

    def test_deterministic_replay_noise_free(self):
        """W = 0, no constraints, no excitation: trajectory is the pure
        linear recursion under the clipped feedback policy."""
        model = LtiModel(A=[[0.9, 0.05], [0.0, 0.8]], B=[[0.0], [1.0]])
        K = np.array([[0.05, -0.1]])
        sc = Scenario(
            model=model, noise=NoiseSpec(W=np.zeros((2, 2)), r=1.0),
            x0=np.array([1.0, -0.5]),
            conf=ConfidenceConfig(r=1.0, s=2.0, lam=1.0, delta=0.1, n=2, m=1),
            safety=SafetySpec.unconstrained(2, Box([-5.0], [5.0])),
            policy_kind="feedback", policy_value=K,
            excitation_kind="none", horizon=40,
        )
        tr = run_closed_loop(sc, 123)
        x = np.array([1.0, -0.5])
        for k in range(40):
            u = np.clip(K @ x, -5.0, 5.0)
            assert np.allclose(tr.x[k], x, atol=1e-12)
            assert np.allclose(tr.u_applied[k], u, atol=1e-12)
            x = model.A @ x + model.B @ u
        assert np.allclose(tr.final_x, x, atol=1e-12)

    def test_same_seed_identical_traces(self, tmp_path):
        sc = safety_scenario(horizon=30)
        t1 = run_closed_loop(sc, 99)
        t2 = run_closed_loop(sc, 99)
        assert np.array_equal(t1.x, t2.x)
        assert np.array_equal(t1.u_applied, t2.u_applied)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        t1.to_csv(p1)
        t2.to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()
        t3 = run_closed_loop(sc, 100)
        assert not np.array_equal(t1.x, t3.x)

    def test_trace_row_count_and_safety_flags(self):
        sc = safety_scenario(horizon=25)
        tr = run_closed_loop(sc, 5)
        assert tr.horizon == 25
        H, h = sc.safety.at(0)
        for k in range(25):
            assert tr.safe[k] == bool(np.all(H @ tr.x[k] <= h))

    def test_poe_gram_growth_bound(self):
        """Disjoint-window excitation floor transfers to the Gram matrix:
        lambda_min(V[k]) >= floor(k / T0) * alpha + lambda."""
        sc = coverage_scenario(horizon=240)
        tr = run_closed_loop(sc, 11)
        T0 = 12
        zs = np.hstack([tr.x, tr.u_applied])
        blocks = [zs[j * T0:(j + 1) * T0] for j in range(len(zs) // T0)]
        alpha = min(np.linalg.eigvalsh(b.T @ b)[0] for b in blocks)
        V = sc.conf.lam * np.eye(3) + zs.T @ zs
        lam_min = np.linalg.eigvalsh(V)[0]
        k = len(zs)
        assert lam_min >= (k // T0) * alpha + sc.conf.lam - 1e-9


class TestMonteCarlo:
    def test_single_run_equals_trace_stats(self):
        sc = safety_scenario(horizon=20)
        agg, traces = monte_carlo(sc, runs=1, base_seed=3, collect_traces=True)
        tr = traces[0]
        assert agg.feasible_steps == tr.feasible_steps
        assert agg.infeasible_steps == tr.infeasible_steps
        assert agg.violations_after_feasible == tr.violations_after_feasible
        assert agg.coverage_freq == float(tr.coverage_ok)

    def test_identical_seeds_identical_aggregates(self):
        sc = safety_scenario(horizon=15)
        a1, _ = monte_carlo(sc, runs=8, base_seed=21)
        a2, _ = monte_carlo(sc, runs=8, base_seed=21)
        assert a1.report() == a2.report()
        assert np.array_equal(a1.tau_curve, a2.tau_curve)

    def test_threads_match_sequential(self):
        sc = safety_scenario(horizon=15)
        a1, _ = monte_carlo(sc, runs=8, base_seed=21, threads=1)
        a2, _ = monte_carlo(sc, runs=8, base_seed=21, threads=2)
        assert a1.report() == a2.report()
        assert np.array_equal(a1.tau_curve, a2.tau_curve)

    def test_runs_validation(self):
        with pytest.raises(ValueError):
            monte_carlo(safety_scenario(horizon=5), runs=0, base_seed=1)


class TestBinomialBound:
    def test_all_successes_closed_form(self):
        assert binomial_lower_bound(10, 10, 0.99) == pytest.approx(0.01 ** 0.1, rel=1e-12)

    def test_zero_successes(self):
        assert binomial_lower_bound(0, 10, 0.99) == 0.0

    def test_matches_beta_quantile(self):
        from scipy.stats import beta as beta_dist
        lcb = binomial_lower_bound(1900, 2000, 0.99)
        assert lcb == pytest.approx(beta_dist.ppf(0.01, 1900, 101), rel=1e-10)
        assert 0.93 < lcb < 0.95

    def test_monotone_in_successes(self):
        vals = [binomial_lower_bound(s, 100, 0.99) for s in (50, 70, 90, 100)]
        assert vals == sorted(vals)
