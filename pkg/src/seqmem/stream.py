"""Datasets, the fixed-order online stream, and hold-out splits."""

from __future__ import annotations

import json
import math
import random
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

from seqmem.errors import ParseError, ValidationError

DEFAULT_CATEGORY = "default"


@dataclass(frozen=True)
class Task:
    id: str
    prompt: str
    target: str
    category: str = DEFAULT_CATEGORY
    metadata: dict[str, Any] = field(default_factory=dict, hash=False, compare=True)

    def __post_init__(self):
        if not self.id:
            raise ValidationError("task id must be non-empty")
        if not self.prompt:
            raise ValidationError(f"task {self.id!r}: prompt must be non-empty")
        if not self.target:
            raise ValidationError(f"task {self.id!r}: target must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": self.id,
            "prompt": self.prompt,
            "target": self.target,
            "category": self.category,
        }
        if self.metadata:
            out["metadata"] = dict(self.metadata)
        return out

    @classmethod
    def from_dict(cls, record: dict[str, Any]) -> "Task":
        return cls(
            id=record["id"],
            prompt=record["prompt"],
            target=record["target"],
            category=record.get("category") or DEFAULT_CATEGORY,
            metadata=dict(record.get("metadata") or {}),
        )


class DistributionTag(str, Enum):
    IN_DISTRIBUTION = "in_distribution"
    OUT_OF_DISTRIBUTION = "out_of_distribution"


@dataclass(frozen=True)
class TaskStream:
    tasks: tuple[Task, ...]
    order_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise ValidationError("a task stream needs at least one task")
        _check_unique(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    def __getitem__(self, i):
        return self.tasks[i]

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tasks]


@dataclass(frozen=True)
class HoldoutSet:
    tasks: tuple[Task, ...]
    source_dataset: str = ""
    distribution_tag: DistributionTag = DistributionTag.IN_DISTRIBUTION

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        object.__setattr__(self, "distribution_tag", DistributionTag(self.distribution_tag))
        if not self.tasks:
            raise ValidationError("a hold-out set needs at least one task")
        _check_unique(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def ids(self) -> list[str]:
        return [t.id for t in self.tasks]


class SplitMode(str, Enum):
    TAIL_FRACTION = "tail_fraction"
    STRATIFIED_SAMPLE = "stratified_sample"


@dataclass(frozen=True)
class SplitSpec:
    mode: SplitMode
    fraction: float | None = None
    size: int | None = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", SplitMode(self.mode))
        if self.mode is SplitMode.TAIL_FRACTION:
            if self.fraction is None or self.size is not None:
                raise ValidationError("tail_fraction split takes `fraction` and no `size`")
        else:
            if self.size is None or self.fraction is not None:
                raise ValidationError("stratified_sample split takes `size` and no `fraction`")


def _check_unique(tasks: Iterable[Task]) -> None:
    seen: set[str] = set()
    for t in tasks:
        if t.id in seen:
            raise ValidationError(f"duplicate task id {t.id!r}")
        seen.add(t.id)


def load_dataset(path: str | Path, format: str = "jsonl") -> list[Task]:
    """Read tasks from a JSONL file, one record per line, in file order.

    Blank lines are skipped. A malformed line raises `ParseError` carrying the
    1-based line number; a repeated id raises `ValidationError`.
    """
    if format != "jsonl":
        raise ValidationError(f"unsupported dataset format {format!r}")
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"dataset file not found: {path}")
    tasks: list[Task] = []
    seen: dict[str, int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(record, dict):
                raise ParseError("record must be a JSON object", line=lineno)
            for key in ("id", "prompt", "target"):
                if not isinstance(record.get(key), str):
                    raise ParseError(f"missing or non-string field {key!r}", line=lineno)
            if "metadata" in record and not isinstance(record["metadata"], (dict, type(None))):
                raise ParseError("metadata must be an object", line=lineno)
            try:
                task = Task.from_dict(record)
            except ValidationError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if task.id in seen:
                raise ValidationError(
                    f"duplicate task id {task.id!r} on lines {seen[task.id]} and {lineno}"
                )
            seen[task.id] = lineno
            tasks.append(task)
    return tasks


def write_dataset(tasks: Iterable[Task], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in tasks:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")


def split_tail(
    dataset: Sequence[Task], fraction: float, source_dataset: str = ""
) -> tuple[TaskStream, HoldoutSet]:
    """Hold out the last floor(fraction * N) tasks; the prefix becomes the stream."""
    if not 0 < fraction < 1:
        raise ValidationError(f"fraction must lie in (0, 1), got {fraction}")
    n = len(dataset)
    if n < 2:
        raise ValidationError("tail split needs at least 2 tasks")
    # exact decimal arithmetic so 0.29 * 100 floors to 29, not 28
    n_hold = math.floor(Fraction(repr(float(fraction))) * n)
    if n_hold == 0 or n_hold == n:
        raise ValidationError(
            f"fraction {fraction} on {n} tasks leaves an empty stream or hold-out"
        )
    stream = TaskStream(tuple(dataset[: n - n_hold]))
    holdout = HoldoutSet(tuple(dataset[n - n_hold :]), source_dataset=source_dataset)
    return stream, holdout


def stratified_counts(category_sizes: dict[str, int], size: int) -> dict[str, int]:
    """Per-category allocation: one each, then the rest by largest remainder.

    The remaining `size - C` slots are apportioned in proportion to each
    category's spare capacity (n_c - 1). Remainder ties go to the category that
    appears first in `category_sizes`.
    """
    n_cat = len(category_sizes)
    total = sum(category_sizes.values())
    if size < n_cat:
        raise ValidationError(
            f"cannot draw {size} tasks while keeping one from each of {n_cat} categories"
        )
    if size > total:
        raise ValidationError(f"requested {size} tasks from a pool of {total}")
    rest = size - n_cat
    spare = total - n_cat
    counts = {c: 1 for c in category_sizes}
    if rest == 0:
        return counts
    quotas = {c: Fraction(rest * (n - 1), spare) for c, n in category_sizes.items()}
    for c, q in quotas.items():
        counts[c] += math.floor(q)
    leftover = size - sum(counts.values())
    order = sorted(
        category_sizes,
        key=lambda c: (-(quotas[c] - math.floor(quotas[c])), list(category_sizes).index(c)),
    )
    for c in order[:leftover]:
        counts[c] += 1
    return counts


def split_stratified(
    train_pool: Sequence[Task],
    size: int,
    seed: int,
    source_dataset: str = "",
    distribution_tag: DistributionTag | str = DistributionTag.IN_DISTRIBUTION,
) -> HoldoutSet:
    """Sample a hold-out set that keeps category proportions and covers every category."""
    if not train_pool:
        raise ValidationError("empty training pool")
    _check_unique(train_pool)
    by_cat: "OrderedDict[str, list[int]]" = OrderedDict()
    for i, t in enumerate(train_pool):
        by_cat.setdefault(t.category, []).append(i)
    counts = stratified_counts({c: len(ix) for c, ix in by_cat.items()}, size)
    rng = random.Random(seed)
    chosen: list[int] = []
    for cat in sorted(by_cat):
        chosen.extend(rng.sample(by_cat[cat], counts[cat]))
    chosen.sort()
    return HoldoutSet(
        tuple(train_pool[i] for i in chosen),
        source_dataset=source_dataset,
        distribution_tag=distribution_tag,
    )


def build_stream(tasks: Sequence[Task], order_seed: int | None = None) -> TaskStream:
    if not tasks:
        raise ValidationError("cannot build a stream from zero tasks")
    ordered = list(tasks)
    if order_seed is not None:
        random.Random(order_seed).shuffle(ordered)
    return TaskStream(tuple(ordered), order_seed=order_seed)
