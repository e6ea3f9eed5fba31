"""Cross-method comparison: dimension-level rank profiles and a Pareto filter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

from seqmem.errors import ValidationError

# metric name -> +1 when higher is better, -1 when lower is better
DIMENSIONS: dict[str, list[tuple[str, int]]] = {
    "online_utility": [("online_acc", 1), ("mer", 1), ("ped", -1), ("r_min", -1)],
    "holdout_generalization": [("holdout_acc", 1), ("trend_ho", 1)],
    "backward_transfer": [("iv", 1), ("bwt_mean", 1)],
    "forgetting": [("f_mean", -1)],
    "efficiency": [("tokens_total", -1), ("runtime_s", -1)],
}

OBJECTIVE_ALIASES = {
    "OnlineAcc": "online_acc",
    "HoldOutAcc": "holdout_acc",
    "token_total": "tokens_total",
    "runtime": "runtime_s",
}
DEFAULT_OBJECTIVES = {"online_acc": "max", "holdout_acc": "max", "tokens_total": "min", "runtime_s": "min"}


@dataclass
class MethodProfile:
    method: str
    scores: dict[str, float] = field(default_factory=dict)
    ranks: dict[str, int] = field(default_factory=dict)


def _minmax(values: list[float], sign: int) -> list[float]:
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    out = [(v - lo) / (hi - lo) for v in values]
    return out if sign > 0 else [1.0 - x for x in out]


def _rank_scores(values: list[float], sign: int) -> list[float]:
    """Rank-based normalisation: best -> 1, worst -> 0, ties share the mean."""
    n = len(values)
    if n == 1 or len(set(values)) == 1:
        return [0.5] * n
    keyed = sorted(range(n), key=lambda i: -sign * values[i])
    pos = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[keyed[j + 1]] == values[keyed[i]]:
            j += 1
        avg = (i + j) / 2
        for k in range(i, j + 1):
            pos[keyed[k]] = avg
        i = j + 1
    return [1.0 - p / (n - 1) for p in pos]


def competition_ranks(scores: list[float], ndigits: int = 12) -> list[int]:
    """Descending "1224" ranks; scores equal to `ndigits` share the better rank."""
    rounded = [round(s, ndigits) for s in scores]
    return [1 + sum(1 for o in rounded if o > r) for r in rounded]


def rank_profiles(reports: Sequence, normalization: Literal["minmax", "rank"] = "minmax") -> list[MethodProfile]:
    if len(reports) < 2:
        raise ValidationError("ranking needs at least two methods")
    normalize = _minmax if normalization == "minmax" else _rank_scores
    n = len(reports)
    profiles = [MethodProfile(r.method) for r in reports]
    for dim, metric_list in DIMENSIONS.items():
        per_method: list[list[float]] = [[] for _ in range(n)]
        for name, sign in metric_list:
            values = [r.metric(name) for r in reports]
            if any(v is None for v in values):
                continue
            for i, s in enumerate(normalize([float(v) for v in values], sign)):
                per_method[i].append(s)
        dim_scores = [sum(s) / len(s) if s else 0.5 for s in per_method]
        for p, s, rk in zip(profiles, dim_scores, competition_ranks(dim_scores)):
            p.scores[dim] = s
            p.ranks[dim] = rk
    return profiles


def _objectives(objectives) -> dict[str, str]:
    if objectives is None:
        return dict(DEFAULT_OBJECTIVES)
    if not objectives:
        raise ValidationError("at least one objective is required")
    if not isinstance(objectives, Mapping):
        objectives = {o: DEFAULT_OBJECTIVES[OBJECTIVE_ALIASES.get(o, o)] for o in objectives}
    out = {}
    for name, direction in objectives.items():
        if direction not in ("max", "min"):
            raise ValidationError(f"objective {name!r} must be tagged 'max' or 'min'")
        out[OBJECTIVE_ALIASES.get(name, name)] = direction
    return out


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    """a is at least as good everywhere and strictly better somewhere (maximisation)."""
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def pareto_filter(reports: Sequence, objectives=None) -> list[str]:
    """Methods not dominated by any other on the chosen objectives."""
    obj = _objectives(objectives)
    vecs = []
    for r in reports:
        v = []
        for name, direction in obj.items():
            x = r.metric(name)
            if x is None:
                raise ValidationError(f"method {r.method!r} has no value for objective {name!r}")
            v.append(float(x) if direction == "max" else -float(x))
        vecs.append(v)
    return [
        r.method
        for i, r in enumerate(reports)
        if not any(dominates(vecs[j], vecs[i]) for j in range(len(reports)) if j != i)
    ]
