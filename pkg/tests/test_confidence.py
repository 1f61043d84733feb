"""Confidence radius beta, input scale zeta, and the coverage oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safelearn import (Box, ConfidenceConfig, RidgeEstimator, beta,
                       confidence_holds, monte_carlo, zeta)
from safelearn.confidence import weighted_row_errors
from tests.conftest import coverage_scenario


def cfg_simple(r=1.0, s=1.0, lam=1.0, delta=0.1, n=1, m=1, strict=False):
    return ConfidenceConfig(r=r, s=s, lam=lam, delta=delta, n=n, m=m,
                            strict_paper_exponent=strict)


class TestBeta:
    def test_initial_state_closed_form(self):
        # at k = 0 the determinant ratio collapses to 1
        cfg = cfg_simple()
        d = cfg.d
        val = beta(cfg, logdet_V=d * math.log(cfg.lam), delta_arg=0.1)
        assert val == pytest.approx(math.sqrt(2 * math.log(10.0)) + 1.0, abs=1e-12)
        assert val == pytest.approx(3.1460, abs=1e-4)

    def test_delta_to_one_limit(self):
        cfg = cfg_simple()
        val = beta(cfg, logdet_V=0.0, delta_arg=1 - 1e-12)
        assert val == pytest.approx(math.sqrt(cfg.lam) * cfg.s, abs=1e-5)

    def test_grown_determinant_value(self):
        # d=2, lam=1, V=diag(2,2), r=2, s=0.5, delta=0.05
        cfg = cfg_simple(r=2.0, s=0.5)
        val = beta(cfg, logdet_V=math.log(4.0), delta_arg=0.05)
        expected = 2.0 * math.sqrt(2.0 * (0.5 * math.log(4.0) - math.log(0.05))) + 0.5
        assert val == pytest.approx(expected, abs=1e-12)
        assert val == pytest.approx(5.9324060, abs=1e-6)

    def test_delta_bounds_rejected(self):
        cfg = cfg_simple()
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValueError):
                beta(cfg, 0.0, bad)

    @settings(deadline=None, max_examples=60)
    @given(st.floats(0.0, 30.0), st.floats(0.0, 30.0),
           st.floats(0.01, 0.99), st.floats(0.01, 0.99))
    def test_monotonicity_contract(self, ld1, ld2, d1, d2):
        cfg = cfg_simple()
        lo, hi = sorted((ld1, ld2))
        assert beta(cfg, hi, 0.1) >= beta(cfg, lo, 0.1)
        dlo, dhi = sorted((d1, d2))
        assert beta(cfg, 1.0, dlo) >= beta(cfg, 1.0, dhi)

    def test_r_scale_consistency(self):
        cfg1 = cfg_simple(r=1.0)
        cfg3 = cfg_simple(r=3.0)
        base = math.sqrt(cfg1.lam) * cfg1.s
        b1 = beta(cfg1, 2.5, 0.2) - base
        b3 = beta(cfg3, 2.5, 0.2) - base
        assert b3 == pytest.approx(3.0 * b1, rel=1e-12)

    def test_strict_paper_exponent(self):
        # identical when lam = 1, different otherwise by (d - n) log(lam)
        for logdet in (2.0, 5.0):
            assert beta(cfg_simple(), logdet, 0.1) == beta(cfg_simple(strict=True), logdet, 0.1)
        cfg_d = cfg_simple(lam=4.0)
        cfg_n = cfg_simple(lam=4.0, strict=True)
        logdet = cfg_d.d * math.log(4.0) + 1.0
        rad_d = logdet - cfg_d.d * math.log(4.0) - 2 * math.log(0.1)
        rad_n = logdet - cfg_d.n * math.log(4.0) - 2 * math.log(0.1)
        assert beta(cfg_d, logdet, 0.1) == pytest.approx(math.sqrt(rad_d) + 2.0, abs=1e-12)
        assert beta(cfg_n, logdet, 0.1) == pytest.approx(math.sqrt(rad_n) + 2.0, abs=1e-12)


class TestZeta:
    def test_identity_gram(self):
        est = RidgeEstimator(1, 1, lam=1.0)
        val = zeta(est.V_chol, np.array([1.0]), Box([-1.0], [1.0]))
        assert val == pytest.approx(math.sqrt(2.0), abs=1e-12)

    def test_scaled_gram(self):
        L = np.linalg.cholesky(4.0 * np.eye(2))
        val = zeta(L, np.array([1.0]), Box([-1.0], [1.0]))
        assert val == pytest.approx(math.sqrt(2.0) / 2.0, abs=1e-12)

    def test_matches_dense_grid_oracle(self, rng):
        # n=1 state, 2-D box input; V is 3x3 SPD
        for _ in range(5):
            M = rng.normal(size=(3, 3))
            V = M @ M.T + 0.5 * np.eye(3)
            L = np.linalg.cholesky(V)
            x = rng.normal(size=1)
            lo = rng.uniform(-2, -0.5, 2)
            hi = rng.uniform(0.5, 2, 2)
            box = Box(lo, hi)
            val = zeta(L, x, box)
            g1 = np.linspace(lo[0], hi[0], 201)
            g2 = np.linspace(lo[1], hi[1], 201)
            U1, U2 = np.meshgrid(g1, g2, indexing="ij")
            Q = np.vstack([np.full(U1.size, x[0]), U1.ravel(), U2.ravel()])
            Y = np.linalg.solve(L, Q)
            grid = np.sqrt((Y * Y).sum(axis=0).max())
            assert grid <= val + 1e-12
            assert abs(grid - val) <= 1e-6

    def test_positive_homogeneity(self, rng):
        M = rng.normal(size=(3, 3))
        V = M @ M.T + np.eye(3)
        x = rng.normal(size=2)
        box = Box([-1.5], [0.5])
        for c in (0.5, 2.0, 7.0):
            v1 = zeta(np.linalg.cholesky(V), x, box)
            vc = zeta(np.linalg.cholesky(c * c * V), x, box)
            assert vc == pytest.approx(v1 / c, rel=1e-12)

    def test_vertex_cap_propagates(self):
        est = RidgeEstimator(1, 21, lam=1.0)
        with pytest.raises(ValueError, match="too large"):
            zeta(est.V_chol, np.array([1.0]), Box(-np.ones(21), np.ones(21)))


class TestConfidenceHolds:
    def test_zero_error_any_radius(self, rng):
        theta = rng.normal(size=(3, 2))
        L = np.linalg.cholesky(np.eye(3))
        assert confidence_holds(theta, theta, L, 0.0)

    def test_norm_two_vs_radius_one(self):
        L = np.eye(1)
        theta_true = np.array([[0.0]])
        theta_hat = np.array([[2.0]])
        assert not confidence_holds(theta_true, theta_hat, L, 1.0)

    def test_boundary_counts_as_holding(self):
        V = np.diag([4.0, 1.0])
        L = np.linalg.cholesky(V)
        theta_true = np.zeros((2, 1))
        theta_hat = np.array([[1.0], [0.0]])
        errs = weighted_row_errors(theta_true, theta_hat, L)
        assert errs[0] == pytest.approx(2.0, abs=1e-12)
        assert confidence_holds(theta_true, theta_hat, L, 2.0)


class TestCoverageSmoke:
    def test_confidence_coverage_small_scale(self):
        # small-scale version of the statistical coverage property; the
        # acceptance suite runs it at full scale
        sc = coverage_scenario(horizon=100)
        agg, _ = monte_carlo(sc, runs=300, base_seed=77, threads=1)
        assert agg.coverage_lcb >= 1.0 - sc.conf.delta
