"""core types: models, input sets, safety checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from safelearn import (Box, LtiModel, NoiseSpec, SafetySpec, VertexPolytope,
                       check_safety, input_set_vertices)
from safelearn import _core


class TestLtiModel:
    def test_dimensions(self):
        m = LtiModel(A=[[0.5]], B=[[1.0]])
        assert (m.n, m.m) == (1, 1)

    def test_rejects_nonsquare_a(self):
        with pytest.raises(ValueError):
            LtiModel(A=[[1.0, 0.0]], B=[[1.0]])

    def test_rejects_mismatched_b(self):
        with pytest.raises(ValueError):
            LtiModel(A=[[1.0]], B=[[1.0], [2.0]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            LtiModel(A=[[np.inf]], B=[[1.0]])

    def test_theta_layout_matches_stacked_rows(self, rng):
        A = rng.normal(size=(3, 3))
        B = rng.normal(size=(3, 2))
        m = LtiModel(A=A, B=B)
        assert np.allclose(m.theta().T, m.stacked())

    def test_frobenius_norm(self):
        m = LtiModel(A=[[3.0]], B=[[4.0]])
        assert m.frobenius_norm() == pytest.approx(5.0)


class TestNoiseSpec:
    def test_bound_violation_rejected(self):
        with pytest.raises(ValueError, match="bound"):
            NoiseSpec(W=np.eye(2), r=0.5)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            NoiseSpec(W=np.array([[1.0, 0.5], [0.0, 1.0]]), r=2.0)

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="semi-definite"):
            NoiseSpec(W=np.diag([1.0, -0.2]), r=2.0)

    def test_sqrt_factor_rank_deficient(self):
        spec = NoiseSpec(W=np.diag([1.0, 0.0]), r=1.0)
        M = spec.sqrt_factor()
        assert np.allclose(M @ M.T, spec.W, atol=1e-9)

    def test_sqrt_factor_zero(self):
        spec = NoiseSpec(W=np.zeros((2, 2)), r=1.0)
        assert np.allclose(spec.sqrt_factor(), 0.0)

    def test_unchecked_bypasses_bound_only(self):
        spec = NoiseSpec.unchecked(np.eye(2), r=1e-6)
        assert spec.r == 1e-6
        with pytest.raises(ValueError):
            NoiseSpec.unchecked(np.array([[1.0, 0.5], [0.0, 1.0]]), r=1.0)


class TestInputSetVertices:
    def test_box_1d(self):
        verts = input_set_vertices(Box([-1.0], [1.0]))
        assert sorted(v[0] for v in verts) == [-1.0, 1.0]

    def test_box_2d_all_corners(self):
        verts = input_set_vertices(Box([0.0, 0.0], [1.0, 2.0]))
        assert verts.tolist() == [[0.0, 0.0], [0.0, 2.0], [1.0, 0.0], [1.0, 2.0]]

    def test_polytope_identity(self):
        V = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]])
        # halfspace hull of the triangle
        G = np.array([[1.0, 1.0], [-2.0, 1.0], [1.0, -2.0]])
        g = np.array([1.0, 1.0, 1.0])
        poly = VertexPolytope(V, G, g)
        assert np.array_equal(input_set_vertices(poly), V)

    def test_enumeration_cap(self):
        big = Box(-np.ones(21), np.ones(21))
        with pytest.raises(ValueError, match="too large"):
            big.vertices()
        small = Box(-np.ones(3), np.ones(3))
        with pytest.raises(ValueError, match="too large"):
            small.vertices(cap=2)
        assert small.vertices(cap=3).shape == (8, 3)

    def test_empty_box_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            Box([1.0], [0.0])

    def test_box_vertices_inside_and_span(self, rng):
        """Vertices lie in the box and every box point is a convex
        combination of them (NNLS feasibility as the oracle)."""
        for m in (2, 3):
            lo = rng.uniform(-3, 0, m)
            hi = lo + rng.uniform(0.5, 3, m)
            box = Box(lo, hi)
            verts = box.vertices()
            assert np.all(verts >= lo - 1e-12) and np.all(verts <= hi + 1e-12)
            for _ in range(10):
                point = rng.uniform(lo, hi)
                A = np.vstack([verts.T, np.ones(len(verts))])
                b = np.concatenate([point, [1.0]])
                _, rnorm, ok = _core.nnls(A, b)
                assert ok and rnorm < 1e-9

    def test_polytope_vertex_violation_rejected(self):
        with pytest.raises(ValueError, match="violates"):
            VertexPolytope([[2.0, 0.0]], G=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
                           g=[1.0, 1.0, 1.0, 1.0])

    def test_unbounded_halfspaces_rejected(self):
        with pytest.raises(ValueError, match="unbounded"):
            VertexPolytope([[0.0, 0.0]], G=[[1.0, 0.0]], g=[1.0])

    def test_polytope_clip(self):
        square = VertexPolytope(
            [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]],
            G=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
            g=[1.0, 1.0, 1.0, 1.0])
        assert np.allclose(square.clip([3.0, 0.5]), [1.0, 0.5])
        assert square.contains([0.2, -0.9])
        assert not square.contains([1.2, 0.0])


class TestCheckSafety:
    def test_boundary_is_safe(self):
        safe, margin = check_safety(np.array([[1.0]]), np.array([0.0]), np.array([0.0]))
        assert safe and margin == 0.0

    def test_interval_violation(self):
        safe, margin = check_safety(np.array([[1.0], [-1.0]]), np.array([1.0, 1.0]),
                                    np.array([2.0]))
        assert not safe and margin == pytest.approx(1.0)

    def test_infeasible_zero_row(self):
        safe, margin = check_safety(np.array([[0.0, 0.0]]), np.array([-1.0]),
                                    np.array([17.0, -3.0]))
        assert not safe and margin == pytest.approx(1.0)

    def test_empty_constraints_vacuous(self):
        safe, margin = check_safety(np.zeros((0, 2)), np.zeros(0), np.ones(2))
        assert safe and margin == -np.inf

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            check_safety(np.eye(2), np.ones(3), np.ones(2))

    @settings(deadline=None, max_examples=50)
    @given(st.integers(0, 10**6))
    def test_monotone_in_h(self, seed):
        r = np.random.default_rng(seed)
        p, n = int(r.integers(1, 5)), int(r.integers(1, 4))
        H = r.normal(size=(p, n))
        h = r.normal(size=p)
        x = r.normal(size=n)
        bigger = h + r.uniform(0, 2, p)
        safe1, m1 = check_safety(H, h, x)
        safe2, m2 = check_safety(H, bigger, x)
        assert m2 <= m1 + 1e-12
        if safe1:
            assert safe2


class TestSafetySpec:
    def test_schedule_last_repeats(self):
        H1, h1 = np.array([[1.0]]), np.array([1.0])
        H2, h2 = np.array([[1.0]]), np.array([2.0])
        spec = SafetySpec(schedule=((H1, h1), (H2, h2)), input_set=Box([-1.0], [1.0]))
        assert spec.at(0)[1][0] == 1.0
        assert spec.at(1)[1][0] == 2.0
        assert spec.at(100)[1][0] == 2.0

    def test_row_mismatch_rejected(self):
        with pytest.raises(ValueError, match="rows"):
            SafetySpec.constant(np.eye(2), np.ones(3), Box([-1.0], [1.0]))

    def test_unconstrained(self):
        spec = SafetySpec.unconstrained(3, Box([-1.0], [1.0]))
        H, h = spec.at(5)
        assert H.shape == (0, 3) and h.shape == (0,)
