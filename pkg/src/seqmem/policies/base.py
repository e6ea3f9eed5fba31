from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Any, ClassVar

from seqmem.errors import ValidationError
from seqmem.gateway import EmbeddingVector, Gateway, cosine_similarity
from seqmem.policies.evaluators import Feedback, evaluate_answer
from seqmem.policies.templates import Templates, render
from seqmem.stream import Task


@dataclass(frozen=True)
class PolicyConfig:
    k: int = 3
    batch_update_size: int = 8
    max_tries: int = 3
    max_num_rules: int = 20
    induce_steps: int = 1

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValidationError(f"PolicyConfig.{f.name} must be a positive integer, got {v!r}")


@dataclass
class Experience:
    step: int
    task_id: str
    prompt: str
    prediction: str
    correct: int
    embedding: list[float] | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "Experience":
        return cls(**d)


def _experiences(items) -> list[Experience]:
    return [Experience.from_dict(x) for x in items]


@dataclass
class Empty:
    kind: ClassVar[str] = "empty"

    @classmethod
    def from_dict(cls, d: dict) -> "Empty":
        return cls()


@dataclass
class RecentBuffer:
    kind: ClassVar[str] = "recent_buffer"
    experiences: list[Experience] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "RecentBuffer":
        return cls(_experiences(d["experiences"]))


@dataclass
class VectorStore:
    kind: ClassVar[str] = "vector_store"
    experiences: list[Experience] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "VectorStore":
        return cls(_experiences(d["experiences"]))


@dataclass
class Cheatsheet:
    kind: ClassVar[str] = "cheatsheet"
    text: str = ""
    history: list[Experience] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "Cheatsheet":
        return cls(d["text"], _experiences(d["history"]))


@dataclass
class Workflow:
    id: str
    text: str
    source_task: str
    embedding: list[float]


@dataclass
class WorkflowSet:
    kind: ClassVar[str] = "workflow_set"
    workflows: list[Workflow] = field(default_factory=list)
    pending: list[Experience] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "WorkflowSet":
        return cls([Workflow(**w) for w in d["workflows"]], _experiences(d["pending"]))


@dataclass
class ExpelState:
    kind: ClassVar[str] = "expel"
    pool: list[Experience] = field(default_factory=list)
    recent_successes: list[Experience] = field(default_factory=list)
    insights: list[str] = field(default_factory=list)

    @classmethod
    def from_dict(cls, d: dict) -> "ExpelState":
        return cls(_experiences(d["pool"]), _experiences(d["recent_successes"]), list(d["insights"]))


PAYLOAD_TYPES = {t.kind: t for t in (Empty, RecentBuffer, VectorStore, Cheatsheet, WorkflowSet, ExpelState)}


@dataclass
class MemoryState:
    policy_id: str
    payload: Any

    def serialize(self) -> str:
        body = {"policy_id": self.policy_id, "kind": self.payload.kind, "payload": asdict(self.payload)}
        return json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def deserialize(cls, text: str) -> "MemoryState":
        body = json.loads(text)
        try:
            payload_type = PAYLOAD_TYPES[body["kind"]]
        except KeyError:
            raise ValidationError(f"unknown memory payload kind {body.get('kind')!r}") from None
        return cls(body["policy_id"], payload_type.from_dict(body["payload"]))

    def copy(self) -> "MemoryState":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class Context:
    rendered_text: str = ""
    provenance: tuple[tuple[str, float | None], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "provenance", tuple(tuple(p) for p in self.provenance))


@dataclass
class StepOutcome:
    prediction: str
    feedback: Feedback
    state: MemoryState
    context: Context
    tries_used: int = 1


def top_k(query: EmbeddingVector, items: list, k: int, key=lambda x: x.embedding) -> list[tuple[int, float]]:
    """Indices and scores of the k most similar items; ties go to the earlier index."""
    scored = [(i, cosine_similarity(query, key(item))) for i, item in enumerate(items)]
    scored.sort(key=lambda p: (-p[1], p[0]))
    return scored[:k]


def render_experience(templates: Templates, exp: Experience, index: int, show_outcome: bool = True) -> str:
    name = "experience" if show_outcome else "case"
    return render(
        templates[name],
        index=str(index),
        question=exp.prompt,
        prediction=exp.prediction,
        outcome="correct" if exp.correct else "incorrect",
    )


class Policy:
    """One memory method: context construction, prediction, and memory update.

    Subclasses with a non-trivial update (DC-RS, AWM, ExpeL) override `step`
    and `answer`; retrieval baselines only override `build_context` and
    `update`.
    """

    policy_id: ClassVar[str] = ""
    payload_type: ClassVar[type] = Empty

    def __init__(
        self,
        gateway: Gateway,
        config: PolicyConfig | None = None,
        templates: Templates | None = None,
        evaluator: str = "exact_match",
        task_template: str | None = None,
    ):
        self.gateway = gateway
        self.config = config or PolicyConfig()
        self.templates = templates or Templates()
        self.evaluator = evaluator
        self.task_template = task_template

    def initial_state(self) -> MemoryState:
        return MemoryState(self.policy_id, self.payload_type())

    def check_state(self, state: MemoryState) -> None:
        if state.policy_id != self.policy_id or not isinstance(state.payload, self.payload_type):
            raise ValidationError(
                f"state of policy {state.policy_id!r} handed to policy {self.policy_id!r}"
            )

    def question(self, task: Task) -> str:
        if not self.task_template:
            return task.prompt
        values = {k: str(v) for k, v in task.metadata.items()}
        values["question"] = task.prompt
        return render(self.task_template, **values)

    def evaluate(self, prediction: str, task: Task) -> Feedback:
        return evaluate_answer(prediction, task, task.metadata.get("evaluator", self.evaluator))

    def build_context(self, state: MemoryState, task: Task) -> Context:
        return Context()

    def predict(self, context: Context, task: Task, purpose: str = "answer") -> str:
        prompt = render(self.templates["answer"], context=context.rendered_text, question=self.question(task))
        return self.gateway.generate(self.gateway.request(prompt), purpose=purpose).text

    def update(self, state: MemoryState, task: Task, prediction: str, feedback: Feedback, step: int) -> MemoryState:
        return state

    def answer(self, state: MemoryState, task: Task) -> str:
        """Single read-only attempt under `state`; never mutates it."""
        self.check_state(state)
        return self.predict(self.build_context(state, task), task)

    def step(self, state: MemoryState, task: Task, step: int) -> StepOutcome:
        self.check_state(state)
        context = self.build_context(state, task)
        prediction = self.predict(context, task)
        feedback = self.evaluate(prediction, task)
        new_state = self.update(state.copy(), task, prediction, feedback, step)
        return StepOutcome(prediction, feedback, new_state, context)
