from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

from seqmem.diagnostics import metrics
from seqmem.diagnostics.classify import Thresholds, classify_trajectory
from seqmem.diagnostics.matrix import EvalMatrix
from seqmem.errors import EmptyHorizonError


@dataclass
class HoldoutSummary:
    name: str
    distribution_tag: str
    points: list[tuple[int, float]]
    holdout_acc: float | None
    trend_ho: float | None


@dataclass
class DiagnosticReport:
    method: str
    dataset: str
    T: int
    online_trace: list[int]
    curve: list[float]
    online_acc: float
    ped: float
    mer: float
    r_min: float
    pattern: str
    holdout: list[HoldoutSummary] = field(default_factory=list)
    bwt: dict[int, float | None] = field(default_factory=dict)
    iv: float | None = None
    f_exact: dict[int, float | None] = field(default_factory=dict)
    f_approx: dict[int, float | None] = field(default_factory=dict)
    tokens_total: int = 0
    runtime_s: float = 0.0

    @property
    def holdout_acc(self) -> float | None:
        return self.holdout[0].holdout_acc if self.holdout else None

    @property
    def trend_ho(self) -> float | None:
        return self.holdout[0].trend_ho if self.holdout else None

    @property
    def bwt_mean(self) -> float | None:
        return _mean(self.bwt.values())

    @property
    def f_mean(self) -> float | None:
        """Mean forgetting over horizons; exact values when all exist, else approximate."""
        exact = list(self.f_exact.values())
        if exact and all(v is not None for v in exact):
            return _mean(exact)
        return _mean(self.f_approx.values())

    def metric(self, name: str):
        return getattr(self, name)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("bwt", "f_exact", "f_approx"):
            d[key] = {str(k): v for k, v in d[key].items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DiagnosticReport":
        d = dict(d)
        d["holdout"] = [
            HoldoutSummary(h["name"], h["distribution_tag"], [tuple(p) for p in h["points"]],
                           h["holdout_acc"], h["trend_ho"])
            for h in d.get("holdout", [])
        ]
        for key in ("bwt", "f_exact", "f_approx"):
            d[key] = {int(k): v for k, v in d.get(key, {}).items()}
        return cls(**d)


def _mean(values) -> float | None:
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


def _safe(fn, *args):
    try:
        return fn(*args)
    except EmptyHorizonError:
        return None


def summarize_holdout(name: str, tag: str, points: Sequence[tuple[int, float]], T: int) -> HoldoutSummary:
    points = sorted(points)
    final = metrics.holdout_final(points, T) if points and points[-1][0] == T else None
    trend = metrics.trend_ho(points, T) if len({p[0] for p in points}) >= 2 else None
    return HoldoutSummary(name, tag, [tuple(p) for p in points], final, trend)


def build_report(
    method: str,
    dataset: str,
    online_trace: Sequence[int],
    matrix: EvalMatrix | None = None,
    horizons: Sequence[int] = (),
    holdouts: Sequence[HoldoutSummary] = (),
    tokens_total: int = 0,
    runtime_s: float = 0.0,
    thresholds: Thresholds | None = None,
) -> DiagnosticReport:
    curve = metrics.cumulative_curve(online_trace)
    mer, ped, rmin = metrics.mer(curve), metrics.ped(curve), metrics.r_min(curve)
    report = DiagnosticReport(
        method=method,
        dataset=dataset,
        T=len(online_trace),
        online_trace=[int(a) for a in online_trace],
        curve=[float(v) for v in curve],
        online_acc=metrics.online_acc(curve),
        ped=ped,
        mer=mer,
        r_min=rmin,
        pattern=classify_trajectory(mer, ped, rmin, thresholds, curve=list(curve)),
        holdout=list(holdouts),
        tokens_total=int(tokens_total),
        runtime_s=float(runtime_s),
    )
    if matrix is not None:
        hs = sorted(set(horizons))
        report.bwt = {t: _safe(metrics.bwt, matrix, t) for t in hs}
        report.iv = _safe(metrics.immediate_validity, matrix)
        report.f_exact = {t: _safe(metrics.forgetting_exact, matrix, t) for t in hs}
        report.f_approx = {t: _safe(metrics.forgetting_approx, matrix, t, hs) for t in hs}
    return report
