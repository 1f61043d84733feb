"""Experiment configuration: a single self-contained JSON file with
explicit matrices, canonical (round-trippable) serialization, and
validation of the known-bound assumptions.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .confidence import ConfidenceConfig
from .safety_filter import FilterOptions
from .sim import Scenario
from .types import Box, InputSet, LtiModel, NoiseSpec, SafetySpec, VertexPolytope


class ConfigError(ValueError):
    """Config parse/validation failure."""


_DEFAULTS = {
    "filter": {"delta": 0.1, "strict_paper_beta": False,
               "noise_only_switch": False, "noise_only_ratio": 1e-6},
    "nominal": {"kind": "zero"},
    "excitation": {"kind": "none"},
    "run": {"horizon": 100, "runs": 1, "base_seed": 0, "out_dir": "out",
            "write_traces": True, "poe_window": 0, "threads": 1},
    "verify": {"coverage_runs": 2000, "coverage_horizon": 200,
               "safety_runs": 2000, "safety_horizon": 100,
               "equivalence_instances": 200, "equivalence_samples": 100000,
               "equivalence_seed": 20240,
               "confidence": 0.99},
}


@dataclass
class ExperimentConfig:
    """Parsed experiment description (plain nested data; domain objects
    are built on demand)."""

    data: dict
    assumption_checks_bypassed: bool = False

    # -- construction ------------------------------------------------

    @classmethod
    def parse(cls, text: str, bypass_assumption_checks: bool = False) -> "ExperimentConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        data = copy.deepcopy(raw)
        for block, defaults in _DEFAULTS.items():
            merged = dict(defaults)
            merged.update(data.get(block, {}))
            data[block] = merged
        cfg = cls(data=data, assumption_checks_bypassed=bypass_assumption_checks)
        cfg.validate(bypass_assumption_checks=bypass_assumption_checks)
        return cfg

    @classmethod
    def load(cls, path, bypass_assumption_checks: bool = False) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.parse(text, bypass_assumption_checks=bypass_assumption_checks)

    # -- canonical serialization --------------------------------------

    def to_text(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def digest(self) -> str:
        """Hash of the result-affecting part of the config (output paths,
        trace toggles and worker counts excluded)."""
        data = copy.deepcopy(self.data)
        for key in ("out_dir", "write_traces", "threads"):
            data["run"].pop(key, None)
        text = json.dumps(data, sort_keys=True, indent=2)
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    # -- domain objects ------------------------------------------------

    def model(self) -> LtiModel:
        sysb = self._block("system")
        return LtiModel(A=np.array(sysb["A"], dtype=float),
                        B=np.array(sysb["B"], dtype=float))

    def noise(self) -> NoiseSpec:
        sysb = self._block("system")
        n = len(sysb["A"])
        W = np.array(sysb.get("W", np.zeros((n, n)).tolist()), dtype=float)
        r = float(self._block("assumptions")["r"])
        if self.assumption_checks_bypassed:
            return NoiseSpec.unchecked(W, r)
        return NoiseSpec(W=W, r=r)

    def x0(self) -> np.ndarray:
        return np.array(self._block("system")["x0"], dtype=float)

    def input_set(self) -> InputSet:
        spec = self._block("safety").get("input_set")
        if spec is None:
            raise ConfigError("safety block must define input_set")
        kind = spec.get("type")
        if kind == "box":
            return Box(np.array(spec["lower"], float), np.array(spec["upper"], float))
        if kind == "polytope":
            return VertexPolytope(np.array(spec["vertices"], float),
                                  np.array(spec["G"], float),
                                  np.array(spec["g"], float))
        raise ConfigError(f"unknown input_set type {kind!r}")

    def safety(self) -> SafetySpec:
        blk = self._block("safety")
        n = len(self._block("system")["A"])
        input_set = self.input_set()
        if "schedule" in blk:
            pairs = [(np.array(e["H"], float), np.array(e["h"], float))
                     for e in blk["schedule"]]
            return SafetySpec(schedule=tuple(pairs), input_set=input_set, n=n)
        if "H" in blk:
            return SafetySpec.constant(np.array(blk["H"], float),
                                       np.array(blk["h"], float), input_set)
        return SafetySpec.unconstrained(n, input_set)

    def conf(self) -> ConfidenceConfig:
        a = self._block("assumptions")
        f = self._block("filter")
        model = self.model()
        return ConfidenceConfig(
            r=float(a["r"]), s=float(a["s"]), lam=float(a["lambda"]),
            delta=float(f["delta"]), n=model.n, m=model.m,
            strict_paper_exponent=bool(f["strict_paper_beta"]),
        )

    def filter_options(self) -> FilterOptions:
        f = self._block("filter")
        return FilterOptions(noise_only_switch=bool(f["noise_only_switch"]),
                             noise_only_ratio=float(f["noise_only_ratio"]))

    def scenario(self, horizon: int | None = None) -> Scenario:
        nom = self._block("nominal")
        exc = self._block("excitation")
        run = self._block("run")
        kind = nom["kind"]
        if kind == "constant":
            pol_val = np.array(nom["value"], dtype=float)
        elif kind == "feedback":
            pol_val = np.array(nom["K"], dtype=float)
        elif kind == "zero":
            pol_val = None
        else:
            raise ConfigError(f"unknown nominal policy kind {kind!r}")
        exc_kind = exc["kind"]
        exc_param = float(exc.get("amplitude", exc.get("sigma", 0.0)))
        return Scenario(
            model=self.model(), noise=self.noise(), x0=self.x0(),
            conf=self.conf(), safety=self.safety(),
            policy_kind=kind, policy_value=pol_val,
            excitation_kind=exc_kind, excitation_param=exc_param,
            horizon=int(horizon if horizon is not None else run["horizon"]),
            filter_options=self.filter_options(),
            poe_window=int(run["poe_window"]),
        )

    # -- validation ------------------------------------------------------

    def _block(self, name: str) -> dict:
        if name not in self.data:
            raise ConfigError(f"config is missing the '{name}' block")
        return self.data[name]

    def validate(self, bypass_assumption_checks: bool = False) -> None:
        for required in ("system", "assumptions", "safety"):
            self._block(required)
        sysb = self._block("system")
        for key in ("A", "B", "x0"):
            if key not in sysb:
                raise ConfigError(f"system block is missing '{key}'")
        model = self.model()
        if len(sysb["x0"]) != model.n:
            raise ConfigError("x0 dimension does not match A")
        a = self._block("assumptions")
        for key in ("r", "s", "lambda"):
            if key not in a:
                raise ConfigError(f"assumptions block is missing '{key}'")
        if float(a["lambda"]) <= 0:
            raise ConfigError("lambda must be positive")
        f = self._block("filter")
        if not (0.0 < float(f["delta"]) < 1.0):
            raise ConfigError("delta must lie in (0, 1)")
        run = self._block("run")
        if int(run["horizon"]) < 1:
            raise ConfigError("horizon must be >= 1")
        if int(run["runs"]) < 1:
            raise ConfigError("runs must be >= 1")
        self.input_set()
        self.safety()
        if not bypass_assumption_checks:
            W = np.array(sysb.get("W", np.zeros((model.n, model.n)).tolist()), float)
            w_max = float(np.linalg.eigvalsh(W)[-1]) if W.size else 0.0
            if w_max > float(a["r"]) * (1 + 1e-9) + 1e-12:
                raise ConfigError(
                    "assumption violated: the noise covariance bound requires "
                    f"r >= lambda_max(W), but r = {float(a['r']):.6g} < "
                    f"lambda_max(W) = {w_max:.6g}"
                )
            fro = model.frobenius_norm()
            if fro > float(a["s"]) * (1 + 1e-9) + 1e-12:
                raise ConfigError(
                    "assumption violated: the model norm bound requires "
                    f"s >= ||[A B]||_F, but s = {float(a['s']):.6g} < "
                    f"||[A B]||_F = {fro:.6g}"
                )
