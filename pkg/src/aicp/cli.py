"""Command line interface: ``aicp {gen,run,metrics,check}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from .harness import (ConfigError, ExperimentConfig, compute_metrics, generate_ensemble,
                      load_ensemble, read_traces, run_experiment, save_ensemble, write_traces)

log = logging.getLogger("aicp")

ENSEMBLE_FILE = "ensemble.json"
TRACES_FILE = "traces.jsonl"


def _load_config(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = ExperimentConfig.load(args.config)
    if args.master_seed is not None:
        cfg.master_seed = args.master_seed
    return cfg


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scms = generate_ensemble(cfg)
    save_ensemble(scms, out / ENSEMBLE_FILE)
    log.info("wrote %d SCMs to %s", len(scms), out / ENSEMBLE_FILE)
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = Path(args.ensemble) if args.ensemble else out / ENSEMBLE_FILE
    scms = load_ensemble(ensemble) if ensemble.exists() else None
    traces = run_experiment(cfg, scms, workers=args.workers)
    write_traces(traces, out / TRACES_FILE)
    log.info("wrote %d traces to %s", len(traces), out / TRACES_FILE)
    return 0


def cmd_metrics(args) -> int:
    out = Path(args.out)
    traces_path = Path(args.traces) if args.traces else out / TRACES_FILE
    traces = read_traces(traces_path)
    summary = compute_metrics(traces, censor=args.censor)
    curves, table = summary.write_csv(out)
    log.info("wrote %s and %s", curves, table)
    return 0


def cmd_check(args) -> int:
    seed = args.master_seed or 0
    lemmas = checks.lemma_suite(args.dags, seed=seed)
    calib = checks.calibration_suite(args.reps, seed=seed)
    ok = not any(lemmas.values())
    ok &= 0.035 <= calib["welch"] <= 0.065 and 0.035 <= calib["f"] <= 0.065
    ok &= calib["invariance"] <= 0.08
    print(json.dumps({"lemma_violations": lemmas, "rejection_rates": calib, "ok": ok}, indent=2))
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aicp", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--master-seed", type=int, default=None)

    common(sub.add_parser("gen", help="write a random SCM ensemble"))
    run = sub.add_parser("run", help="run the configured policies, JSONL traces out")
    common(run)
    run.add_argument("--ensemble", help="ensemble file (default: OUT/ensemble.json, else generated)")
    metrics = sub.add_parser("metrics", help="summaries and plot-ready CSV tables")
    common(metrics)
    metrics.add_argument("--traces", help="trace file (default: OUT/traces.jsonl)")
    metrics.add_argument("--censor", type=int, default=None,
                         help="recovery censoring value (default: T)")
    check = sub.add_parser("check", help="run the property and calibration suites")
    common(check)
    check.add_argument("--dags", type=int, default=500)
    check.add_argument("--reps", type=int, default=1000)
    return parser


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "metrics": cmd_metrics, "check": cmd_check}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report any runtime failure as exit 1
        log.exception("failed: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
