"""Command-line entry point.

Subcommands:
  run     -- single or Monte Carlo closed-loop experiments; writes CSV
             trace(s) plus a summary report.
  decay   -- one long trajectory; writes the tightening decay curve
             (k, tau, fitted c*sqrt(log k / k)) and ratio diagnostics.
  verify  -- the three statistical/property suites (coverage, safety,
             tightening equivalence); exit 0 iff all pass.

All randomness flows from the base seed; identical invocations produce
byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from ._core import BACKEND
from .config import ConfigError, ExperimentConfig
from .sim import monte_carlo, run_closed_loop, run_seeds
from .verify import (coverage_suite, decay_metrics, equivalence_suite,
                     fit_decay_reference, safety_suite)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override run.base_seed")
    p.add_argument("--runs", type=int, default=None, help="override run.runs")
    p.add_argument("--out", default=None, help="override run.out_dir")
    p.add_argument("--threads", type=int, default=None, help="worker processes")
    p.add_argument("--strict-paper-beta", action="store_true",
                   help="use the n/2 lambda exponent inside beta")
    p.add_argument("--bypass-assumption-checks", action="store_true",
                   help="testing only: accept configs violating the known bounds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="safelearn",
        description="safe simultaneous learning and control of LTI systems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("run", cmd_run), ("decay", cmd_decay), ("verify", cmd_verify)):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config,
                                bypass_assumption_checks=args.bypass_assumption_checks)
    if args.seed is not None:
        cfg.data["run"]["base_seed"] = int(args.seed)
    if args.runs is not None:
        cfg.data["run"]["runs"] = int(args.runs)
    if args.out is not None:
        cfg.data["run"]["out_dir"] = args.out
    if args.threads is not None:
        cfg.data["run"]["threads"] = int(args.threads)
    if args.strict_paper_beta:
        cfg.data["filter"]["strict_paper_beta"] = True
    cfg.validate(bypass_assumption_checks=args.bypass_assumption_checks)
    return cfg


def _outdir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.data["run"]["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_run(args) -> int:
    cfg = _load(args)
    run = cfg.data["run"]
    out = _outdir(cfg)
    sc = cfg.scenario()
    digest = cfg.digest()
    runs = int(run["runs"])
    agg, traces = monte_carlo(
        sc, runs=runs, base_seed=int(run["base_seed"]),
        threads=int(run["threads"]), config_digest=digest,
        collect_traces=bool(run["write_traces"]),
    )
    for i, tr in enumerate(traces):
        tr.to_csv(out / f"trace_{i:04d}.csv")
    report = agg.report() + f"\nconfig digest               {digest}\nbackend                     {BACKEND}\n"
    (out / "report.txt").write_text(report)
    _write_json(out / "summary.json", {
        "config_digest": digest,
        "runs": agg.runs, "horizon": agg.horizon,
        "feasible_steps": agg.feasible_steps,
        "infeasible_steps": agg.infeasible_steps,
        "violations_after_feasible": agg.violations_after_feasible,
        "safe_freq": agg.safe_freq, "safe_freq_lcb": agg.safe_freq_lcb,
        "coverage_freq": agg.coverage_freq, "coverage_lcb": agg.coverage_lcb,
        "infeasible_rate": agg.infeasible_rate,
    })
    print(report)
    return EXIT_OK


def cmd_decay(args) -> int:
    cfg = _load(args)
    run = cfg.data["run"]
    out = _outdir(cfg)
    sc = cfg.scenario()
    digest = cfg.digest()
    seed = run_seeds(int(run["base_seed"]), 1)[0]
    trace = run_closed_loop(sc, seed, config_digest=digest)
    tau = trace.tau
    warnings = []
    if sc.excitation_kind == "none" or trace.alpha_hat[-1] <= 0.0:
        warnings.append("PoE not observed: excitation window eigenvalue floor is 0")
    fit = np.zeros_like(tau)
    if sc.horizon >= 2:
        fit = fit_decay_reference(tau)
    else:
        warnings.append("horizon too short for a decay fit; single-point curve")
    with open(out / "decay.csv", "w", newline="") as fh:
        fh.write("k,tau,fit\n")
        for k in range(len(tau)):
            fh.write(f"{k},{float(tau[k])!r},{float(fit[k])!r}\n")
    summary = {"config_digest": digest, "horizon": sc.horizon,
               "final_alpha_hat": float(trace.alpha_hat[-1]),
               "warnings": warnings}
    if sc.horizon >= 10000:
        summary["ratio_diagnostics"] = decay_metrics(tau)
    _write_json(out / "decay_summary.json", summary)
    for w in warnings:
        print(f"warning: {w}")
    if "ratio_diagnostics" in summary:
        d = summary["ratio_diagnostics"]
        print(f"tau[{d['k1']}] = {d['tau_k1']:.6g}")
        print(f"tau[{d['k2']}] = {d['tau_k2']:.6g}")
        print(f"decay ratio {d['ratio']:.4f} vs bound {d['ratio_bound']:.4f} "
              f"({'ok' if d['ratio_ok'] else 'VIOLATED'})")
        print(f"tau[{d['k3']}] / tau[{d['k1']}] = {d['final_ratio']:.4f}")
    print(f"decay curve written to {out / 'decay.csv'}")
    return EXIT_OK


def cmd_verify(args) -> int:
    cfg = _load(args)
    run = cfg.data["run"]
    vb = cfg.data["verify"]
    out = _outdir(cfg)
    threads = int(run["threads"])
    base_seed = int(run["base_seed"])
    confidence = float(vb["confidence"])
    results = [
        coverage_suite(cfg.scenario(horizon=int(vb["coverage_horizon"])),
                       runs=int(vb["coverage_runs"]), base_seed=base_seed,
                       threads=threads, confidence=confidence),
        safety_suite(cfg.scenario(horizon=int(vb["safety_horizon"])),
                     runs=int(vb["safety_runs"]), base_seed=base_seed + 1,
                     threads=threads, confidence=confidence),
        equivalence_suite(instances=int(vb["equivalence_instances"]),
                          samples=int(vb["equivalence_samples"]),
                          seed=int(vb["equivalence_seed"])),
    ]
    lines = [r.line() for r in results]
    (out / "verify_report.txt").write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
