"""Memory-free baseline and instance-level experience reuse (recent window, RAG)."""

from __future__ import annotations

from seqmem.gateway import Gateway
from seqmem.policies.base import (
    Context,
    Empty,
    Experience,
    MemoryState,
    Policy,
    RecentBuffer,
    VectorStore,
    render_experience,
    top_k,
)
from seqmem.policies.evaluators import Feedback
from seqmem.stream import Task


def memory_free_update(state: MemoryState, task: Task, prediction: str, feedback: Feedback) -> MemoryState:
    return state


def buffer_update(
    state: MemoryState,
    task: Task,
    prediction: str,
    feedback: Feedback,
    step: int,
    gateway: Gateway | None = None,
) -> MemoryState:
    """Append the experience; a VectorStore also stores embed(task.prompt).

    Mutates and returns `state`; callers pass a copy when the old state must
    survive.
    """
    exp = Experience(step, task.id, task.prompt, prediction, feedback.correct)
    if isinstance(state.payload, VectorStore):
        exp.embedding = list(gateway.embed(task.prompt).values)
    state.payload.experiences.append(exp)
    return state


class MemoryFree(Policy):
    policy_id = "memory_free"
    payload_type = Empty

    def update(self, state, task, prediction, feedback, step):
        return memory_free_update(state, task, prediction, feedback)


class ExpRecent(Policy):
    """Conditions on the k most recent experiences, oldest first."""

    policy_id = "exp_recent"
    payload_type = RecentBuffer

    def build_context(self, state, task):
        k = self.config.k
        recent = state.payload.experiences[-k:]
        text = "\n\n".join(render_experience(self.templates, e, i + 1) for i, e in enumerate(recent))
        return Context(text, [(e.task_id, None) for e in recent])

    def update(self, state, task, prediction, feedback, step):
        return buffer_update(state, task, prediction, feedback, step)


class ExpRAG(Policy):
    """Top-k experiences by cosine similarity of prompt embeddings."""

    policy_id = "exp_rag"
    payload_type = VectorStore

    def build_context(self, state, task):
        store = state.payload.experiences
        if not store:
            return Context()
        hits = top_k(self.gateway.embed(task.prompt), store, self.config.k)
        text = "\n\n".join(
            render_experience(self.templates, store[i], rank + 1) for rank, (i, _) in enumerate(hits)
        )
        return Context(text, [(store[i].task_id, score) for i, score in hits])

    def update(self, state, task, prediction, feedback, step):
        return buffer_update(state, task, prediction, feedback, step, gateway=self.gateway)
