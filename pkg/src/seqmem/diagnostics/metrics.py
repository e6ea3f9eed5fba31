"""Online-utility, hold-out, backward-transfer, forgetting and efficiency metrics."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from seqmem.diagnostics.matrix import EvalMatrix
from seqmem.errors import EmptyHorizonError, ValidationError


def _trace(trace: Sequence[int]) -> np.ndarray:
    a = np.asarray(trace, dtype=np.int64)
    if a.ndim != 1 or a.size == 0:
        raise ValidationError("online trace must be a non-empty 1-D sequence")
    if not np.isin(a, (0, 1)).all():
        raise ValidationError("online trace must be binary")
    return a


def cumulative_curve(trace: Sequence[int]) -> np.ndarray:
    """Prefix means of the binary online trace."""
    a = _trace(trace)
    return np.cumsum(a) / np.arange(1, a.size + 1)


def _curve(curve) -> np.ndarray:
    c = np.asarray(curve, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ValidationError("cumulative curve must be non-empty")
    return c


def online_acc(curve) -> float:
    return float(_curve(curve)[-1])


def ped(curve) -> float:
    c = _curve(curve)
    return float(c.max() - c[-1])


def mer(curve) -> float:
    c = _curve(curve)
    return float(c[-1] - c.min())


def r_min(curve) -> float:
    c = _curve(curve)
    # np.argmin returns the first occurrence: earliest-index tie-break
    return float((int(np.argmin(c)) + 1) / c.size)


def holdout_final(points: Sequence[tuple[int, float]], T: int) -> float:
    if not points:
        raise ValidationError("hold-out trace is empty")
    step, value = points[-1]
    if step != T:
        raise ValidationError(f"hold-out trace ends at step {step}, not at T={T}")
    return float(value)


def trend_ho(points: Sequence[tuple[int, float]], T: int) -> float:
    """Least-squares slope of H against normalised time tau/T."""
    if len(points) < 2:
        raise ValidationError("trend needs at least two hold-out points")
    x = np.array([p[0] for p in points], dtype=float) / T
    y = np.array([p[1] for p in points], dtype=float)
    dx = x - x.mean()
    sxx = float(np.dot(dx, dx))
    if sxx == 0.0:
        raise ValidationError("all hold-out points share one time index")
    return float(np.dot(dx, y - y.mean()) / sxx)


def _bwt_terms(m: EvalMatrix, t: int) -> list[int]:
    terms = []
    for tau in range(1, m.T - t + 1):
        later = m.acc(tau, tau + t)
        base = m.baseline(tau)
        if later is not None and base is not None:
            terms.append(later - base)
    return terms


def bwt(m: EvalMatrix, t: int) -> float:
    if t < 1:
        raise ValidationError("horizon must be positive")
    terms = _bwt_terms(m, t)
    if not terms:
        raise EmptyHorizonError(f"no (task, checkpoint) pairs at horizon {t}")
    return sum(terms) / len(terms)


def smallest_horizon(m: EvalMatrix) -> int:
    for t in range(1, m.T):
        if _bwt_terms(m, t):
            return t
    raise EmptyHorizonError("matrix has no admissible horizon")


def immediate_validity(m: EvalMatrix) -> float:
    return bwt(m, smallest_horizon(m))


def forgetting_exact(m: EvalMatrix, t: int) -> float:
    """Mean drop from the best correctness in [tau, tau+t] to the value at tau+t.

    Only tasks whose whole window is on the grid contribute.
    """
    if t < 1:
        raise ValidationError("horizon must be positive")
    terms = []
    for tau in range(1, m.T - t + 1):
        window = [m.baseline(tau)] + [m.acc(tau, c) for c in range(tau + 1, tau + t + 1)]
        if any(v is None for v in window):
            continue
        terms.append(max(window) - window[-1])
    if not terms:
        raise EmptyHorizonError(f"no complete forgetting windows at horizon {t}")
    return sum(terms) / len(terms)


def forgetting_approx(m: EvalMatrix, t: int, horizons: Iterable[int]) -> float:
    """Forgetting with the window max taken only over horizons t_i <= t."""
    if t < 1:
        raise ValidationError("horizon must be positive")
    hs = sorted({h for h in horizons if 1 <= h <= t} | {t})
    terms = []
    for tau in range(1, m.T - t + 1):
        end = m.acc(tau, tau + t)
        if end is None:
            continue
        seen = [v for v in (m.acc(tau, tau + h) for h in hs) if v is not None]
        terms.append(max(seen) - end)
    if not terms:
        raise EmptyHorizonError(f"no (task, checkpoint) pairs at horizon {t}")
    return sum(terms) / len(terms)


def efficiency_summary(runlog) -> tuple[int, float]:
    """(token total, runtime in seconds) of the online pass.

    Tokens are summed from the per-step records, which include every call a
    step issued: answers, retries, reflections and memory updates.
    """
    tokens = sum(s.prompt_tokens + s.completion_tokens for s in runlog.steps)
    return tokens, runlog.runtime_ms / 1000.0
