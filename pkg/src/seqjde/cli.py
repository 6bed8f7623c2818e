"""Command line entry point: design, simulate, benchmark, export-policy, verify."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .design import LpSizeError, LpSolveError
from .io import (
    ArtifactVersionError,
    artifact_from_design,
    load_artifact,
    save_artifact,
    write_regions,
    write_report,
    write_trace,
)
from .pipeline import run_benchmark, run_design, simulate_artifact

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_INVARIANT = 3
EXIT_USAGE = 1

log = logging.getLogger("seqjde")


def _vec(v) -> str:
    return "(" + ", ".join(f"{float(x):.6g}" for x in np.atleast_1d(v)) + ")"


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    return cfg.with_overrides(runs=getattr(args, "runs", None), seed=getattr(args, "seed", None),
                              threads=getattr(args, "threads", None))


def _out_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_design(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    try:
        outcome = run_design(cfg, threads=cfg.simulation.threads)
    except (LpSolveError, LpSizeError) as exc:
        print(f"design failed: {exc}")
        return EXIT_INFEASIBLE
    res = outcome.result
    art = artifact_from_design(outcome.disc, res, cfg.to_ini())
    path = save_artifact(art, out / "design.npz")
    if res.trace:
        write_trace(res, out / "trace.csv")
    print(f"method      {cfg.design.method}")
    print(f"lambda      {_vec(res.coeffs.lam)}")
    print(f"mu          {_vec(res.coeffs.mu)}")
    print(f"alpha       {_vec(res.errors.alpha)}  (bound {_vec(cfg.constraints.alpha)})")
    print(f"beta        {_vec(res.errors.beta)}  (bound {_vec(cfg.constraints.beta)})")
    print(f"E[tau]      {outcome.identity_runlength:.6g}")
    print(f"L           {res.dual:.6g}")
    print(f"artifact    {path}")
    if not res.converged:
        print(res.report())
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    art = load_artifact(args.artifact or out / "design.npz")
    report = simulate_artifact(art, cfg.model.build(), cfg)
    write_report(report, out, "optimal", cfg.constraints.alpha, cfg.constraints.beta)
    print(report.summary())
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args, cfg)
    model = cfg.model.build()
    report, mc = run_benchmark(cfg, model)
    print(f"thresholds  {_vec(mc.A)}")
    print(report.summary())
    write_report(report, out, "two-step", cfg.constraints.alpha, cfg.constraints.beta)
    return EXIT_OK


def cmd_export_policy(args) -> int:
    art = load_artifact(args.artifact)
    path = Path(args.out) if args.out else Path(args.artifact).with_name("regions.csv")
    write_regions(art.stop, art.decision, art.grid, path)
    print(f"regions     {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import run_verification

    cfg = ExperimentConfig.load(args.config) if args.config else None
    results = run_verification(cfg, threads=args.threads or 8, seed=args.seed or 0)
    failed = 0
    for r in results:
        print(r.line())
        failed += not r.passed
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqjde", description="Sequential joint detection and estimation")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment config (INI)")
        p.add_argument("--seed", type=int)
        p.add_argument("--runs", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out", help="output directory (file for export-policy)")

    p = sub.add_parser("design", help="design cost coefficients and the optimal policy")
    common(p)
    p.set_defaults(func=cmd_design)
    p = sub.add_parser("simulate", help="Monte Carlo evaluation of a designed policy")
    common(p)
    p.add_argument("--artifact", help="design artifact (default: <out>/design.npz)")
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("benchmark", help="Monte Carlo evaluation of the two-step MSPRT scheme")
    common(p)
    p.set_defaults(func=cmd_benchmark)
    p = sub.add_parser("export-policy", help="write stop/continue regions as CSV")
    p.add_argument("artifact")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_policy)
    p = sub.add_parser("verify", help="run the invariant and derivative suites")
    common(p, config_required=False)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ArtifactVersionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
