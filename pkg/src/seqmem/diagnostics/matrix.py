from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

from seqmem.errors import ValidationError

BaselineMode = Literal["online", "post_update"]


@dataclass
class EvalMatrix:
    """Sparse grid of correctness Acc(x_tau; M_c) for checkpoints c >= tau.

    `online[tau]` holds A(tau), the correctness recorded during the online
    pass under the pre-update state. By default that is the baseline for
    backward transfer and the first term of the forgetting window. With
    `baseline_mode="post_update"` the baseline is the diagonal entry
    `(tau, tau)`, the post-update snapshot at the task's own step.
    """

    T: int
    column_steps: tuple[int, ...]
    entries: dict[tuple[int, int], int] = field(default_factory=dict)
    online: dict[int, int] = field(default_factory=dict)
    baseline_mode: BaselineMode = "online"

    def __post_init__(self):
        self.column_steps = tuple(sorted(self.column_steps))
        if self.baseline_mode not in ("online", "post_update"):
            raise ValidationError(f"unknown baseline mode {self.baseline_mode!r}")
        for (tau, c), v in self.entries.items():
            if c < tau:
                raise ValidationError(f"entry ({tau}, {c}) precedes its task")
            if v not in (0, 1):
                raise ValidationError("matrix entries must be 0 or 1")

    def acc(self, tau: int, c: int) -> int | None:
        return self.entries.get((tau, c))

    def baseline(self, tau: int) -> int | None:
        if self.baseline_mode == "online":
            return self.online.get(tau)
        return self.entries.get((tau, tau))

    def replayed(self) -> list[int]:
        return sorted({tau for tau, _ in self.entries})

    def with_baseline(self, mode: BaselineMode) -> "EvalMatrix":
        return EvalMatrix(self.T, self.column_steps, dict(self.entries), dict(self.online), mode)

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "column_steps": list(self.column_steps),
            "entries": [[tau, c, v] for (tau, c), v in sorted(self.entries.items())],
            "online": [[tau, v] for tau, v in sorted(self.online.items())],
            "baseline_mode": self.baseline_mode,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalMatrix":
        return cls(
            T=d["T"],
            column_steps=tuple(d["column_steps"]),
            entries={(tau, c): v for tau, c, v in d["entries"]},
            online={tau: v for tau, v in d["online"]},
            baseline_mode=d.get("baseline_mode", "online"),
        )

    @classmethod
    def dense(cls, rows: dict[int, dict[int, int]], online: dict[int, int], T: int | None = None,
              baseline_mode: BaselineMode = "online") -> "EvalMatrix":
        """Build from `{tau: {c: acc}}`; every step is a checkpoint."""
        T = T if T is not None else max(online)
        entries = {(tau, c): v for tau, row in rows.items() for c, v in row.items()}
        return cls(T, tuple(range(1, T + 1)), entries, dict(online), baseline_mode)
