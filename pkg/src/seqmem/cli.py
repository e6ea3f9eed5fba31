"""Command line: ``seqmem run | metrics | compare | resume``.

Exit codes: 0 success, 2 configuration error, 3 gateway failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from seqmem.bundle import (
    METRICS_FILE,
    ReportBundle,
    compare_reports,
    comparison_csv,
    metrics_csv,
    read_report,
    report_from_runlog,
    write_bundle,
)
from seqmem.config import build_gateway, build_plan, parse_config
from seqmem.errors import ConfigurationError, GatewayError, InvariantViolation, RunAborted, ValidationError
from seqmem.runner import RunLog, execute, resume

EXIT_OK, EXIT_CONFIG, EXIT_GATEWAY, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("seqmem")


def _horizons(text: str) -> list[int]:
    try:
        hs = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"horizons must be comma-separated integers, got {text!r}") from None
    if not hs or any(h < 1 for h in hs):
        raise argparse.ArgumentTypeError("horizons must be positive integers")
    return hs


def _overrides(args) -> dict:
    o = {}
    if getattr(args, "out", None) is not None:
        o["output_dir"] = str(Path(args.out).resolve())
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "checkpoints", None) is not None:
        o["schedule.n_checkpoints"] = args.checkpoints
        o["schedule.checkpoints"] = None
    if getattr(args, "horizons", None) is not None:
        o["schedule.horizons"] = args.horizons
    if getattr(args, "replay_budget", None) is not None:
        o["schedule.replay_budget"] = args.replay_budget
    return o


def _load(args):
    cfg = parse_config(args.config, _overrides(args))
    return cfg, build_plan(cfg), build_gateway(cfg.gateway)


def cmd_run(args) -> int:
    cfg, plan, gateway = _load(args)
    runlog = execute(plan, gateway, cfg.output_dir)
    bundle = write_bundle(cfg.output_dir, report_from_runlog(runlog))
    print(bundle.summary.read_text(encoding="utf-8"), end="")
    print(f"wrote {bundle.directory}")
    return EXIT_OK


def cmd_resume(args) -> int:
    cfg, plan, gateway = _load(args)
    runlog = resume(plan, gateway, cfg.output_dir)
    bundle = write_bundle(cfg.output_dir, report_from_runlog(runlog))
    print(bundle.summary.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_metrics(args) -> int:
    run = Path(args.run)
    runlog = RunLog.read(run)
    runlog.check()
    out = Path(args.out) if args.out else (run if run.is_dir() else run.parent)
    bundle = write_bundle(out, report_from_runlog(runlog, args.horizons))
    if not bundle.run_log.exists():
        bundle.run_log.write_text(runlog.to_jsonl(), encoding="utf-8")
    print(bundle.summary.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_compare(args) -> int:
    if len(args.bundles) < 2:
        raise ConfigurationError("compare needs at least two run directories")
    reports = [ReportBundle(Path(b)).report() if Path(b).is_dir() else read_report(b) for b in args.bundles]
    text = compare_reports(reports, args.normalization)
    print(text, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "comparison.txt").write_text(text, encoding="utf-8")
        (out / "comparison.csv").write_text(comparison_csv(reports, args.normalization), encoding="utf-8")
        (out / METRICS_FILE).write_text(metrics_csv(reports), encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seqmem", description="Sequential memory evaluation harness")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def run_flags(sp):
        sp.add_argument("--config", required=True, metavar="PATH")
        sp.add_argument("--out", metavar="DIR")
        sp.add_argument("--seed", type=int, metavar="N")
        sp.add_argument("--checkpoints", type=int, metavar="N")
        sp.add_argument("--horizons", type=_horizons, metavar="CSV")
        sp.add_argument("--replay-budget", type=int, metavar="N")

    sp = sub.add_parser("run", help="run the sequential protocol and write a report bundle")
    run_flags(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("resume", help="continue an aborted run from its resume token")
    run_flags(sp)
    sp.set_defaults(func=cmd_resume)

    sp = sub.add_parser("metrics", help="recompute diagnostics from an existing run log")
    sp.add_argument("run", metavar="RUN", help="run directory or events.jsonl")
    sp.add_argument("--out", metavar="DIR")
    sp.add_argument("--horizons", type=_horizons, metavar="CSV")
    sp.set_defaults(func=cmd_metrics)

    sp = sub.add_parser("compare", help="rank methods and filter the Pareto-competitive ones")
    sp.add_argument("bundles", nargs="+", metavar="RUN")
    sp.add_argument("--out", metavar="DIR")
    sp.add_argument("--normalization", choices=("minmax", "rank"), default="minmax")
    sp.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except RunAborted as exc:
        print(f"run aborted after step {exc.last_step}: {exc}", file=sys.stderr)
        if exc.resume_token:
            print(f"resume token: {exc.resume_token}", file=sys.stderr)
        return EXIT_GATEWAY
    except GatewayError as exc:
        print(f"gateway failure: {exc}", file=sys.stderr)
        return EXIT_GATEWAY
    except (ConfigurationError, ValidationError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
