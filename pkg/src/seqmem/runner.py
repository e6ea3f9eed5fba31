"""Sequential protocol: one pass over the stream, checkpoints, hold-out and replay.

The online loop is strictly ordered. After every completed step the runner
appends a ``step`` event to ``events.jsonl`` and rewrites ``state.json`` and
``resume.json``, so an aborted run can continue from the last completed
step and still produce the same log. Hold-out and retrospective evaluation
run after the online pass against frozen snapshots; they never touch the
live memory state.
"""

from __future__ import annotations

import contextvars
import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from seqmem.diagnostics.matrix import BaselineMode, EvalMatrix
from seqmem.errors import GatewayError, InvariantViolation, RunAborted, ValidationError
from seqmem.gateway import Gateway, SimulatedClock, UsageLedger
from seqmem.policies import MemoryState, Policy, PolicyConfig, make_policy
from seqmem.stream import HoldoutSet, TaskStream

log = logging.getLogger(__name__)

EVENTS_FILE = "events.jsonl"
STATE_FILE = "state.json"
RESUME_FILE = "resume.json"


def make_schedule(T: int, n_checkpoints: int) -> list[int]:
    """`n_checkpoints` evenly spaced step indices ending at T."""
    if T < 1:
        raise ValidationError("stream length must be positive")
    if not 1 <= n_checkpoints <= T:
        raise ValidationError(f"need 1 <= n_checkpoints <= T, got {n_checkpoints} for T={T}")
    return [i * T // n_checkpoints for i in range(1, n_checkpoints + 1)]


def grid_horizons(checkpoints: Sequence[int]) -> list[int]:
    """Horizons realisable as differences between checkpoints (falls back to 1)."""
    cs = sorted(checkpoints)
    diffs = {b - a for i, a in enumerate(cs) for b in cs[i + 1:]}
    return sorted(diffs) or ([1] if cs and cs[-1] > 1 else [])


@dataclass
class RunPlan:
    stream: TaskStream
    policy_id: str
    policy_config: PolicyConfig = field(default_factory=PolicyConfig)
    checkpoints: Sequence[int] | None = None
    horizons: Sequence[int] | None = None
    holdout_sets: dict[str, HoldoutSet] = field(default_factory=dict)
    replay_budget: int | None = None
    seed: int = 0
    evaluator: str = "exact_match"
    task_template: str | None = None
    baseline_mode: BaselineMode = "online"
    max_in_flight: int = 1
    method: str = ""
    dataset: str = ""

    def __post_init__(self):
        T = len(self.stream)
        if T == 0:
            raise ValidationError("empty stream")
        if self.checkpoints is None:
            self.checkpoints = make_schedule(T, min(10, T))
        cps = sorted(set(int(c) for c in self.checkpoints))
        if not cps or cps[0] < 1 or cps[-1] != T:
            raise ValidationError(f"checkpoints must lie in [1, {T}] and include T")
        self.checkpoints = tuple(cps)
        if self.horizons is None:
            self.horizons = grid_horizons(cps)
        hs = sorted(set(int(h) for h in self.horizons))
        for h in hs:
            if not 1 <= h < T or not any(c - h >= 1 for c in cps):
                raise ValidationError(f"horizon {h} is not expressible on the checkpoint grid {cps}")
        self.horizons = tuple(hs)
        if self.replay_budget is not None and self.replay_budget < 1:
            raise ValidationError("replay_budget must be positive")
        if self.max_in_flight < 1:
            raise ValidationError("max_in_flight must be positive")
        if self.baseline_mode not in ("online", "post_update"):
            raise ValidationError(f"unknown baseline mode {self.baseline_mode!r}")
        self.method = self.method or self.policy_id

    @property
    def T(self) -> int:
        return len(self.stream)

    def make_policy(self, gateway: Gateway) -> Policy:
        return make_policy(
            self.policy_id, gateway, self.policy_config,
            evaluator=self.evaluator, task_template=self.task_template,
        )


@dataclass
class StepRecord:
    step: int
    task_id: str
    prediction: str
    correct: int
    prompt_tokens: int
    completion_tokens: int
    latency: float
    calls: int
    failed_calls: int = 0
    tries: int = 1


@dataclass
class Snapshot:
    step: int
    state: str
    ledger_delta: UsageLedger

    def restore(self) -> MemoryState:
        state = MemoryState.deserialize(self.state)
        if state.serialize() != self.state:
            raise InvariantViolation(f"snapshot {self.step} does not re-serialize identically")
        return state

    def to_dict(self) -> dict:
        return {"step": self.step, "state": self.state, "ledger_delta": self.ledger_delta.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Snapshot":
        return cls(d["step"], d["state"], UsageLedger.from_dict(d["ledger_delta"]))


@dataclass
class HoldoutResult:
    name: str
    step: int
    value: float
    correct: list[int]
    distribution_tag: str = "in_distribution"


@dataclass
class RunLog:
    method: str
    dataset: str
    policy_id: str
    T: int
    checkpoints: list[int]
    horizons: list[int]
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    snapshots: list[Snapshot] = field(default_factory=list)
    holdout: list[HoldoutResult] = field(default_factory=list)
    retro: EvalMatrix | None = None
    runtime_ms: float = 0.0
    ledgers: dict[str, UsageLedger] = field(default_factory=dict)

    @property
    def online_trace(self) -> list[int]:
        return [s.correct for s in self.steps]

    def check(self) -> None:
        if len(self.steps) != self.T:
            raise InvariantViolation(f"run log has {len(self.steps)} step records, expected {self.T}")
        if any(s.correct not in (0, 1) for s in self.steps):
            raise InvariantViolation("online correctness must be binary")
        if [s.step for s in self.steps] != list(range(1, self.T + 1)):
            raise InvariantViolation("step records out of order")

    def holdout_points(self, name: str) -> list[tuple[int, float]]:
        return [(h.step, h.value) for h in self.holdout if h.name == name]

    def holdout_names(self) -> list[str]:
        return list(dict.fromkeys(h.name for h in self.holdout))

    # -- JSONL -------------------------------------------------------------

    def header_event(self) -> dict:
        return {
            "event": "run", "method": self.method, "dataset": self.dataset, "policy_id": self.policy_id,
            "T": self.T, "checkpoints": self.checkpoints, "horizons": self.horizons, "seed": self.seed,
        }

    def events(self) -> list[dict]:
        out = [self.header_event()]
        snaps = {s.step: s for s in self.snapshots}
        for rec in self.steps:
            out.append({"event": "step", **asdict(rec)})
            if rec.step in snaps:
                out.append({"event": "snapshot", **snaps[rec.step].to_dict()})
        out.extend({"event": "holdout", **asdict(h)} for h in self.holdout)
        if self.retro is not None:
            out.append({"event": "retro", **self.retro.to_dict()})
        out.append({
            "event": "end", "runtime_ms": self.runtime_ms,
            "ledgers": {k: v.to_dict() for k, v in sorted(self.ledgers.items())},
        })
        return out

    def to_jsonl(self) -> str:
        return "".join(_dumps(e) + "\n" for e in self.events())

    @classmethod
    def from_events(cls, events: Iterable[dict]) -> "RunLog":
        events = list(events)
        if not events or events[0].get("event") != "run":
            raise ValidationError("run log must start with a 'run' event")
        head = events[0]
        runlog = cls(
            method=head["method"], dataset=head["dataset"], policy_id=head["policy_id"], T=head["T"],
            checkpoints=list(head["checkpoints"]), horizons=list(head["horizons"]), seed=head["seed"],
        )
        for e in events[1:]:
            kind = e.get("event")
            body = {k: v for k, v in e.items() if k != "event"}
            if kind == "step":
                runlog.steps.append(StepRecord(**body))
            elif kind == "snapshot":
                runlog.snapshots.append(Snapshot.from_dict(body))
            elif kind == "holdout":
                runlog.holdout.append(HoldoutResult(**body))
            elif kind == "retro":
                runlog.retro = EvalMatrix.from_dict(body)
            elif kind == "end":
                runlog.runtime_ms = body["runtime_ms"]
                runlog.ledgers = {k: UsageLedger.from_dict(v) for k, v in body["ledgers"].items()}
            else:
                raise ValidationError(f"unknown run-log event {kind!r}")
        return runlog

    @classmethod
    def from_jsonl(cls, text: str) -> "RunLog":
        events = []
        for n, line in enumerate(text.splitlines(), 1):
            if line.strip():
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"run log line {n}: {exc.msg}") from exc
        return cls.from_events(events)

    @classmethod
    def read(cls, path: str | Path) -> "RunLog":
        path = Path(path)
        if path.is_dir():
            path = path / EVENTS_FILE
        return cls.from_jsonl(path.read_text(encoding="utf-8"))


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False)


# -- parallel map -----------------------------------------------------------------


def _pmap(fn: Callable, items: Sequence, max_in_flight: int) -> list:
    """Ordered map, at most `max_in_flight` concurrent calls; context vars propagate."""
    if max_in_flight <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
        futures = [pool.submit(contextvars.copy_context().run, fn, x) for x in items]
        return [f.result() for f in futures]


# -- persistence --------------------------------------------------------------------


class _Journal:
    """Incremental event log plus the per-step resume state."""

    def __init__(self, out_dir: Path | None):
        self.dir = out_dir
        if out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)

    def reset(self, lines: Sequence[dict]) -> None:
        if self.dir is None:
            return
        with open(self.dir / EVENTS_FILE, "w", encoding="utf-8") as fh:
            fh.writelines(_dumps(e) + "\n" for e in lines)

    def append(self, *events: dict) -> None:
        if self.dir is None:
            return
        with open(self.dir / EVENTS_FILE, "a", encoding="utf-8") as fh:
            fh.writelines(_dumps(e) + "\n" for e in events)
            fh.flush()

    def save_state(self, step: int, state: MemoryState, ledger: UsageLedger, clock_ms: float,
                   snapshot_ledger: UsageLedger, phase: str = "online") -> None:
        if self.dir is None:
            return
        payload = {"step": step, "state": state.serialize(), "ledger": ledger.to_dict(), "clock_ms": clock_ms,
                   "snapshot_ledger": snapshot_ledger.to_dict()}
        tmp = self.dir / (STATE_FILE + ".tmp")
        tmp.write_text(_dumps(payload), encoding="utf-8")
        tmp.replace(self.dir / STATE_FILE)
        token = {"last_step": step, "phase": phase, "state_file": STATE_FILE, "events_file": EVENTS_FILE}
        (self.dir / RESUME_FILE).write_text(_dumps(token), encoding="utf-8")

    @property
    def token_path(self) -> str | None:
        return None if self.dir is None else str(self.dir / RESUME_FILE)


def read_resume_token(out_dir: str | Path) -> dict:
    path = Path(out_dir) / RESUME_FILE
    if not path.exists():
        raise ValidationError(f"no resume token in {out_dir}")
    return json.loads(path.read_text(encoding="utf-8"))


# -- online pass -----------------------------------------------------------------


def run_sequential(plan: RunPlan, gateway: Gateway, out_dir: str | Path | None = None,
                   policy: Policy | None = None, *, _resume: dict | None = None) -> RunLog:
    """Online pass: context from the pre-update state, predict, evaluate, update.

    Returns a RunLog with step records and checkpoint snapshots only; see
    `execute` for the full pipeline. A gateway failure raises RunAborted
    after everything up to the last completed step is on disk.
    """
    policy = policy or plan.make_policy(gateway)
    journal = _Journal(Path(out_dir) if out_dir is not None else None)
    runlog = RunLog(plan.method, plan.dataset, plan.policy_id, plan.T, list(plan.checkpoints),
                    list(plan.horizons), plan.seed)
    checkpoints = set(plan.checkpoints)

    if _resume is None:
        state = policy.initial_state()
        start_step = 1
        journal.reset([runlog.header_event()])
        journal.save_state(0, state, gateway.ledger("online"), 0.0, UsageLedger())
    else:
        state = _resume["state"]
        start_step = _resume["step"] + 1
        runlog.steps = _resume["steps"]
        runlog.snapshots = _resume["snapshots"]
        gateway.accounts.restore_phase("online", _resume["ledger"])
        if isinstance(gateway.clock, SimulatedClock):
            gateway.clock.advance(_resume["clock_ms"] - gateway.clock.now())
        journal.reset(runlog.events()[:-1])  # all but the 'end' event

    t0 = gateway.clock.now() - (_resume["clock_ms"] if _resume else 0.0)
    snap_base = _resume["snapshot_ledger"] if _resume else UsageLedger()

    with gateway.phase("online"):
        for step in range(start_step, plan.T + 1):
            task = plan.stream[step - 1]
            before = gateway.ledger("online")
            try:
                outcome = policy.step(state, task, step)
            except GatewayError as exc:
                log.error("gateway failure at step %d: %s", step, exc)
                raise RunAborted(f"gateway failure at step {step}: {exc}", step - 1, journal.token_path) from exc
            delta = gateway.ledger("online").minus(before)
            state = outcome.state
            rec = StepRecord(
                step=step,
                task_id=task.id,
                prediction=outcome.prediction,
                correct=int(outcome.feedback.correct),
                prompt_tokens=delta.prompt_tokens_total,
                completion_tokens=delta.completion_tokens_total,
                latency=delta.wall_clock_total,
                calls=delta.call_count,
                failed_calls=delta.failed_calls,
                tries=outcome.tries_used,
            )
            runlog.steps.append(rec)
            events = [{"event": "step", **asdict(rec)}]
            if step in checkpoints:
                now = gateway.ledger("online")
                snap = Snapshot(step, state.serialize(), now.minus(snap_base))
                snap_base = now
                runlog.snapshots.append(snap)
                events.append({"event": "snapshot", **snap.to_dict()})
            journal.append(*events)
            journal.save_state(step, state, gateway.ledger("online"), gateway.clock.now() - t0, snap_base)

    runlog.runtime_ms = gateway.clock.now() - t0
    runlog.ledgers = {"online": gateway.ledger("online")}
    runlog.check()
    log.debug("online pass done: %d steps", plan.T)
    return runlog


# -- evaluation against frozen snapshots ------------------------------------------


def _answer_all(policy: Policy, snapshot: Snapshot, tasks: Sequence, max_in_flight: int) -> list[int]:
    state = snapshot.restore()

    def one(task) -> int:
        return int(policy.evaluate(policy.answer(state, task), task).correct)

    results = _pmap(one, list(tasks), max_in_flight)
    if state.serialize() != snapshot.state:
        raise InvariantViolation(f"evaluation mutated the memory snapshot at step {snapshot.step}")
    return results


def evaluate_holdout_at(snapshot: Snapshot, holdout: HoldoutSet, policy: Policy,
                        max_in_flight: int = 1) -> float:
    """Mean correctness on `holdout` under the snapshot's read-only state."""
    correct = _answer_all(policy, snapshot, holdout.tasks, max_in_flight)
    return sum(correct) / len(correct)


def replay_sample(T: int, replay_budget: int | None, seed: int, include_diagonal: bool = False) -> list[int]:
    """Tasks re-evaluated at every checkpoint: all eligible ones, or one fixed seeded sample."""
    eligible = list(range(1, T + 1 if include_diagonal else T))
    if replay_budget is None or len(eligible) <= replay_budget:
        return eligible
    return sorted(random.Random(seed).sample(eligible, replay_budget))


def evaluate_retrospective(snapshots: Sequence[Snapshot], runlog: RunLog, stream: TaskStream, policy: Policy,
                           replay_budget: int | None = None, seed: int = 0,
                           baseline_mode: BaselineMode = "online", max_in_flight: int = 1) -> EvalMatrix:
    """Re-evaluate earlier tasks under each later snapshot.

    The replayed subset is drawn once and reused at every checkpoint, so
    horizon comparisons stay paired. Under ``post_update`` the diagonal
    (task evaluated under its own post-update snapshot) is also filled.
    """
    diag = baseline_mode == "post_update"
    sample = replay_sample(runlog.T, replay_budget, seed, include_diagonal=diag)
    online = {tau: runlog.steps[tau - 1].correct for tau in sample}
    entries: dict[tuple[int, int], int] = {}
    for snap in snapshots:
        c = snap.step
        taus = [tau for tau in sample if tau < c or (diag and tau == c)]
        if not taus:
            continue
        try:
            values = _answer_all(policy, snap, [stream[tau - 1] for tau in taus], max_in_flight)
        except (ValueError, KeyError) as exc:
            raise InvariantViolation(f"cannot restore snapshot {c}: {exc}") from exc
        entries.update({(tau, c): v for tau, v in zip(taus, values)})
    return EvalMatrix(runlog.T, tuple(s.step for s in snapshots), entries, online, baseline_mode)


def evaluate_run(plan: RunPlan, runlog: RunLog, gateway: Gateway, policy: Policy | None = None) -> RunLog:
    """Fill hold-out and retrospective results into `runlog` (in place)."""
    policy = policy or plan.make_policy(gateway)
    runlog.holdout = []
    with gateway.phase("holdout"):
        for name, hs in plan.holdout_sets.items():
            for snap in runlog.snapshots:
                correct = _answer_all(policy, snap, hs.tasks, plan.max_in_flight)
                runlog.holdout.append(HoldoutResult(name, snap.step, sum(correct) / len(correct), correct,
                                                    hs.distribution_tag.value))
    with gateway.phase("retro"):
        runlog.retro = evaluate_retrospective(runlog.snapshots, runlog, plan.stream, policy, plan.replay_budget,
                                              plan.seed, plan.baseline_mode, plan.max_in_flight)
    runlog.ledgers = {p: gateway.ledger(p) for p in ("online", "holdout", "retro")}
    return runlog


def execute(plan: RunPlan, gateway: Gateway, out_dir: str | Path | None = None) -> RunLog:
    """Online pass, then hold-out and retrospective evaluation; writes the full event log."""
    policy = plan.make_policy(gateway)
    runlog = run_sequential(plan, gateway, out_dir, policy)
    return _finish(plan, runlog, gateway, policy, out_dir)


def _finish(plan, runlog, gateway, policy, out_dir) -> RunLog:
    try:
        evaluate_run(plan, runlog, gateway, policy)
    except GatewayError as exc:
        token = str(Path(out_dir) / RESUME_FILE) if out_dir is not None else None
        raise RunAborted(f"gateway failure during evaluation: {exc}", runlog.T, token) from exc
    if out_dir is not None:
        Path(out_dir, EVENTS_FILE).write_text(runlog.to_jsonl(), encoding="utf-8")
    return runlog


def resume(plan: RunPlan, gateway: Gateway, out_dir: str | Path) -> RunLog:
    """Continue an aborted `execute` from the last completed step in `out_dir`."""
    out_dir = Path(out_dir)
    token = read_resume_token(out_dir)
    saved = json.loads((out_dir / token["state_file"]).read_text(encoding="utf-8"))
    partial = RunLog.read(out_dir / token["events_file"])
    if partial.T != plan.T or partial.policy_id != plan.policy_id:
        raise ValidationError("resume plan does not match the interrupted run")
    step = saved["step"]
    steps = [s for s in partial.steps if s.step <= step]
    snapshots = [s for s in partial.snapshots if s.step <= step]
    if len(steps) != step:
        raise InvariantViolation(f"event log holds {len(steps)} steps but the resume token says {step}")
    resume_state = {
        "step": step,
        "state": MemoryState.deserialize(saved["state"]),
        "steps": steps,
        "snapshots": snapshots,
        "ledger": UsageLedger.from_dict(saved["ledger"]),
        "clock_ms": saved["clock_ms"],
        "snapshot_ledger": UsageLedger.from_dict(saved["snapshot_ledger"]),
    }
    policy = plan.make_policy(gateway)
    runlog = run_sequential(plan, gateway, out_dir, policy, _resume=resume_state)
    return _finish(plan, runlog, gateway, policy, out_dir)
