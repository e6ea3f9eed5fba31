"""Qualitative labelling of online trajectories from MER, PED and r_min."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

GRADUAL_IMPROVEMENT = "gradual improvement"
DROP_THEN_RECOVER = "drop-then-recover"
EARLY_PEAK_THEN_DEGRADATION = "early peak then degradation"
RAPID_DROP_THEN_STABILIZATION = "rapid drop then stabilization"
STABLE_NON_IMPROVING = "stable but non-improving"
HIGHLY_FLUCTUATING = "highly fluctuating"

PATTERNS = (
    GRADUAL_IMPROVEMENT,
    DROP_THEN_RECOVER,
    EARLY_PEAK_THEN_DEGRADATION,
    RAPID_DROP_THEN_STABILIZATION,
    STABLE_NON_IMPROVING,
    HIGHLY_FLUCTUATING,
)

IMPROVEMENT_FAMILY = (GRADUAL_IMPROVEMENT, DROP_THEN_RECOVER)
DEGRADATION_FAMILY = (EARLY_PEAK_THEN_DEGRADATION, RAPID_DROP_THEN_STABILIZATION)

PREFERENCE = {
    GRADUAL_IMPROVEMENT: ("preferred", "effective accumulation"),
    DROP_THEN_RECOVER: ("acceptable", "delayed recovery"),
    EARLY_PEAK_THEN_DEGRADATION: ("undesirable", "unstable evolution"),
    RAPID_DROP_THEN_STABILIZATION: ("undesirable", "persistent degradation"),
    STABLE_NON_IMPROVING: ("mixed", "limited memory effect"),
    HIGHLY_FLUCTUATING: ("mixed", "volatile memory dynamics"),
}


@dataclass(frozen=True)
class Thresholds:
    high: float = 0.05
    low: float = 0.02
    early: float = 1 / 3
    late: float = 2 / 3
    stable_fraction: float = 1 / 3

    def level(self, value: float) -> str:
        if value >= self.high:
            return "high"
        if value < self.low:
            return "low"
        return "mid"

    def band(self, r: float) -> str:
        if r < self.early:
            return "early"
        if r < self.late:
            return "middle"
        return "late"


def _stabilised(curve: Sequence[float], th: Thresholds) -> bool:
    """True when the curve reaches its minimum level and stays there.

    The tail starts at the first step within `low` of the minimum; it must
    cover at least `stable_fraction` of the stream and never leave that band.
    """
    lo = min(curve)
    n = len(curve)
    start = next(i for i, v in enumerate(curve) if v - lo <= th.low)
    tail = curve[start:]
    return (n - start) / n >= th.stable_fraction and max(tail) - lo <= th.low


def _degradation(curve, th: Thresholds) -> str:
    if curve is not None and len(curve) > 0 and _stabilised(list(curve), th):
        return RAPID_DROP_THEN_STABILIZATION
    return EARLY_PEAK_THEN_DEGRADATION


def classify_trajectory(mer: float, ped: float, r_min: float,
                        thresholds: Thresholds | None = None, curve: Sequence[float] | None = None) -> str:
    """Map (MER, PED, r_min) to one of six trajectory patterns.

    MER or PED counts as high at or above `thresholds.high`; anything below
    is treated as low. When both are high, the larger one decides if r_min
    sits in the band that pattern implies (early/middle minimum for
    recovery, late minimum for degradation); otherwise the curve is
    fluctuating. The two degradation patterns share a signature and are
    separated with `curve` when given (see `_stabilised`).
    """
    th = thresholds or Thresholds()
    hi_mer = mer >= th.high
    hi_ped = ped >= th.high
    band = th.band(r_min)

    if not hi_mer and not hi_ped:
        return STABLE_NON_IMPROVING
    if hi_mer and not hi_ped:
        return GRADUAL_IMPROVEMENT if band == "early" else DROP_THEN_RECOVER
    if hi_ped and not hi_mer:
        return _degradation(curve, th)
    if mer > ped and band != "late":
        return GRADUAL_IMPROVEMENT if band == "early" else DROP_THEN_RECOVER
    if ped > mer and band == "late":
        return _degradation(curve, th)
    return HIGHLY_FLUCTUATING
