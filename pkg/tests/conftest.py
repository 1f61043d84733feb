"""Shared builders for the test suite."""

import numpy as np
import pytest

from safelearn import (Box, ConfidenceConfig, LtiModel, NoiseSpec, SafetySpec,
                       Scenario)

ACCEPTANCE_LINES_KEY = pytest.StashKey()


@pytest.fixture
def record_criterion(request):
    """One pass/fail line per acceptance criterion; echoed immediately and
    again in the terminal summary."""
    store = request.config.stash.setdefault(ACCEPTANCE_LINES_KEY, [])

    def record(num: int, name: str, passed: bool, detail: str) -> None:
        line = f"[criterion {num}] {'PASS' if passed else 'FAIL'} {name}: {detail}"
        store.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)

# the two-state reference system used by the statistical suites
A_REF = np.array([[0.9, 0.1], [0.0, 0.8]])
B_REF = np.array([[0.0], [1.0]])


def reference_model() -> LtiModel:
    return LtiModel(A=A_REF, B=B_REF)


def coverage_scenario(horizon=200, delta=0.1, dither=1.0) -> Scenario:
    """Estimation-only loop: zero policy plus uniform dither, no state
    constraints (the projection degenerates to the identity on U)."""
    model = reference_model()
    return Scenario(
        model=model,
        noise=NoiseSpec(W=0.01 * np.eye(2), r=0.01),
        x0=np.zeros(2),
        conf=ConfidenceConfig(r=0.01, s=2.0, lam=1.0, delta=delta, n=2, m=1),
        safety=SafetySpec.unconstrained(2, Box([-1.0], [1.0])),
        policy_kind="zero",
        excitation_kind="uniform_dither",
        excitation_param=dither,
        horizon=horizon,
    )


def safety_scenario(horizon=100, delta=0.2, u_push=2.0) -> Scenario:
    """Destabilizing constant nominal driving the state toward the box
    boundary; the filter must hold H x <= h."""
    model = reference_model()
    H = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    h = np.array([5.0, 5.0, 5.0, 5.0])
    return Scenario(
        model=model,
        noise=NoiseSpec(W=0.01 * np.eye(2), r=0.01),
        x0=np.zeros(2),
        conf=ConfidenceConfig(r=0.01, s=2.0, lam=1.0, delta=delta, n=2, m=1),
        safety=SafetySpec.constant(H, h, Box([-2.0], [2.0])),
        policy_kind="constant",
        policy_value=np.array([u_push]),
        excitation_kind="uniform_dither",
        excitation_param=0.5,
        horizon=horizon,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
