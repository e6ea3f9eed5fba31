"""Report emission: metrics/horizon CSVs, summary text, full JSON report.

Every writer has a reader so emitted files can be re-parsed and checked.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from seqmem.diagnostics import (
    PREFERENCE,
    DiagnosticReport,
    Thresholds,
    build_report,
    efficiency_summary,
    pareto_filter,
    rank_profiles,
    summarize_holdout,
)
from seqmem.diagnostics.compare import DIMENSIONS
from seqmem.errors import ValidationError
from seqmem.runner import EVENTS_FILE, RunLog

METRICS_FILE = "metrics.csv"
HORIZON_FILE = "horizons.csv"
SUMMARY_FILE = "summary.txt"
REPORT_FILE = "report.json"

BASE_COLUMNS = ["method", "dataset", "online_acc", "ped", "mer", "r_min", "holdout_acc", "trend_ho", "iv"]
TAIL_COLUMNS = ["tokens_total", "runtime_s", "pattern"]
HORIZON_COLUMNS = ["method", "dataset", "horizon", "bwt", "f"]


def report_from_runlog(runlog: RunLog, horizons: Sequence[int] | None = None,
                       thresholds: Thresholds | None = None) -> DiagnosticReport:
    """All diagnostics for one completed run."""
    hs = list(horizons) if horizons is not None else runlog.horizons
    holdouts = []
    for name in runlog.holdout_names():
        tag = next(h.distribution_tag for h in runlog.holdout if h.name == name)
        holdouts.append(summarize_holdout(name, tag, runlog.holdout_points(name), runlog.T))
    tokens, runtime_s = efficiency_summary(runlog)
    return build_report(runlog.method, runlog.dataset, runlog.online_trace, runlog.retro, hs, holdouts,
                        tokens, runtime_s, thresholds)


# -- CSV -------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _num(s: str):
    if s == "":
        return None
    return float(s)


def metrics_columns(horizons: Sequence[int]) -> list[str]:
    cols = list(BASE_COLUMNS)
    for prefix in ("bwt_t", "f_exact_t", "f_approx_t"):
        cols += [f"{prefix}{t}" for t in horizons]
    return cols + TAIL_COLUMNS


def metrics_csv(reports: Sequence[DiagnosticReport]) -> str:
    horizons = sorted({t for r in reports for t in r.bwt})
    cols = metrics_columns(horizons)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in reports:
        row = {
            "method": r.method, "dataset": r.dataset, "online_acc": r.online_acc, "ped": r.ped, "mer": r.mer,
            "r_min": r.r_min, "holdout_acc": r.holdout_acc, "trend_ho": r.trend_ho, "iv": r.iv,
            "tokens_total": r.tokens_total, "runtime_s": r.runtime_s, "pattern": r.pattern,
        }
        for t in horizons:
            row[f"bwt_t{t}"] = r.bwt.get(t)
            row[f"f_exact_t{t}"] = r.f_exact.get(t)
            row[f"f_approx_t{t}"] = r.f_approx.get(t)
        w.writerow([_cell(row[c]) for c in cols])
    return buf.getvalue()


def read_metrics_csv(path: str | Path) -> list[dict]:
    """Parse a metrics CSV back into typed rows; raises ValidationError on schema drift."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        horizons = sorted(int(c[len("bwt_t"):]) for c in header if c.startswith("bwt_t"))
        if header != metrics_columns(horizons):
            raise ValidationError(f"{path}: unexpected metrics columns {header}")
        rows = []
        for rec in reader:
            row: dict = {"method": rec["method"], "dataset": rec["dataset"], "pattern": rec["pattern"]}
            for c in header:
                if c not in row:
                    row[c] = _num(rec[c])
            row["tokens_total"] = int(row["tokens_total"])
            rows.append(row)
    return rows


def horizon_csv(reports: Sequence[DiagnosticReport]) -> str:
    """Long format; `f` is the exact forgetting where defined, else the grid approximation."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HORIZON_COLUMNS)
    for r in reports:
        for t in sorted(r.bwt):
            f = r.f_exact.get(t)
            if f is None:
                f = r.f_approx.get(t)
            w.writerow([r.method, r.dataset, t, _cell(r.bwt[t]), _cell(f)])
    return buf.getvalue()


def read_horizon_csv(path: str | Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != HORIZON_COLUMNS:
            raise ValidationError(f"{path}: unexpected horizon columns {reader.fieldnames}")
        return [
            {"method": r["method"], "dataset": r["dataset"], "horizon": int(r["horizon"]),
             "bwt": _num(r["bwt"]), "f": _num(r["f"])}
            for r in reader
        ]


# -- summary text --------------------------------------------------------------------


def _fmt(v) -> str:
    return "n/a" if v is None else f"{v:.4f}"


def summary_text(r: DiagnosticReport) -> str:
    preference, interpretation = PREFERENCE[r.pattern]
    lines = [
        f"Method: {r.method}   Dataset: {r.dataset}   Steps: {r.T}",
        "",
        f"Pattern: {r.pattern}",
        f"Preference: {preference}",
        f"Interpretation: {interpretation}",
        "",
        f"OnlineAcc {_fmt(r.online_acc)}  PED {_fmt(r.ped)}  MER {_fmt(r.mer)}  r_min {_fmt(r.r_min)}",
    ]
    for h in r.holdout:
        lines.append(f"Hold-out [{h.name}, {h.distribution_tag}]: HoldOutAcc {_fmt(h.holdout_acc)}  "
                     f"Trend_HO {_fmt(h.trend_ho)}")
    if r.bwt:
        lines.append(f"IV {_fmt(r.iv)}")
        for t in sorted(r.bwt):
            lines.append(f"  t={t}: BWT {_fmt(r.bwt[t])}  F_exact {_fmt(r.f_exact.get(t))}  "
                         f"F_approx {_fmt(r.f_approx.get(t))}")
    lines.append(f"Tokens {r.tokens_total}  Runtime {r.runtime_s:.3f}s")
    return "\n".join(lines) + "\n"


# -- bundle -----------------------------------------------------------------------------


@dataclass
class ReportBundle:
    directory: Path

    @property
    def metrics_csv(self) -> Path:
        return self.directory / METRICS_FILE

    @property
    def horizon_csv(self) -> Path:
        return self.directory / HORIZON_FILE

    @property
    def run_log(self) -> Path:
        return self.directory / EVENTS_FILE

    @property
    def summary(self) -> Path:
        return self.directory / SUMMARY_FILE

    @property
    def report_json(self) -> Path:
        return self.directory / REPORT_FILE

    def report(self) -> DiagnosticReport:
        return read_report(self.report_json)

    def validate(self) -> None:
        """Every referenced file exists and re-parses under its reader."""
        for p in (self.metrics_csv, self.horizon_csv, self.run_log, self.summary, self.report_json):
            if not p.is_file():
                raise ValidationError(f"bundle file missing: {p}")
        rows = read_metrics_csv(self.metrics_csv)
        read_horizon_csv(self.horizon_csv)
        RunLog.read(self.run_log).check()
        rep = self.report()
        if len(rows) != 1 or rows[0]["method"] != rep.method or rows[0]["pattern"] != rep.pattern:
            raise ValidationError(f"{self.metrics_csv} disagrees with {self.report_json}")
        if f"Pattern: {rep.pattern}" not in self.summary.read_text(encoding="utf-8"):
            raise ValidationError(f"{self.summary} lacks the pattern label")


def read_report(path: str | Path) -> DiagnosticReport:
    try:
        return DiagnosticReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"{path}: not a diagnostic report ({exc})") from exc


def write_bundle(out_dir: str | Path, report: DiagnosticReport) -> ReportBundle:
    """Write CSVs, summary and JSON report next to the run log in `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(out)
    bundle.metrics_csv.write_text(metrics_csv([report]), encoding="utf-8")
    bundle.horizon_csv.write_text(horizon_csv([report]), encoding="utf-8")
    bundle.summary.write_text(summary_text(report), encoding="utf-8")
    bundle.report_json.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return bundle


# -- comparison --------------------------------------------------------------------------


def compare_reports(reports: Sequence[DiagnosticReport], normalization: str = "minmax") -> str:
    """Rank table, Pareto survivors and pattern labels, as text."""
    datasets = {r.dataset for r in reports}
    if len(datasets) != 1:
        raise ValidationError(f"cannot compare runs on different datasets: {sorted(datasets)}")
    profiles = rank_profiles(reports, normalization)
    has_holdout = all(r.holdout_acc is not None for r in reports)
    objectives = None if has_holdout else {"online_acc": "max", "tokens_total": "min", "runtime_s": "min"}
    survivors = pareto_filter(reports, objectives)
    dims = list(DIMENSIONS)
    width = max(len(r.method) for r in reports) + 2
    lines = [f"Dataset: {datasets.pop()}   normalization: {normalization}", ""]
    lines.append("method".ljust(width) + "  ".join(d.ljust(22) for d in dims))
    for p in profiles:
        cells = [f"{p.ranks[d]} ({p.scores[d]:.3f})".ljust(22) for d in dims]
        lines.append(p.method.ljust(width) + "  ".join(cells))
    lines += ["", "Pareto competitive: " + ", ".join(survivors), ""]
    for r in reports:
        lines.append(f"{r.method}: {r.pattern} ({PREFERENCE[r.pattern][0]})")
    return "\n".join(lines) + "\n"


def comparison_csv(reports: Sequence[DiagnosticReport], normalization: str = "minmax") -> str:
    profiles = rank_profiles(reports, normalization)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "dimension", "score", "rank"])
    for p in profiles:
        for d in DIMENSIONS:
            w.writerow([p.method, d, repr(p.scores[d]), p.ranks[d]])
    return buf.getvalue()
