"""Memory policies: retrieve or construct context, predict, evaluate, update."""

from seqmem.errors import ConfigurationError
from seqmem.policies.awm import AWM, awm_step
from seqmem.policies.base import (
    Cheatsheet,
    Context,
    Empty,
    ExpelState,
    Experience,
    MemoryState,
    Policy,
    PolicyConfig,
    RecentBuffer,
    StepOutcome,
    VectorStore,
    Workflow,
    WorkflowSet,
)
from seqmem.policies.dc_rs import DCRS, dc_rs_step
from seqmem.policies.evaluators import EVALUATORS, Feedback, evaluate_answer
from seqmem.policies.expel import ExpeLMT, ExpeLST, expel_mt_step, expel_st_step
from seqmem.policies.retrieval import ExpRAG, ExpRecent, MemoryFree, buffer_update, memory_free_update
from seqmem.policies.templates import Templates, render, task_template

POLICIES: dict[str, type[Policy]] = {
    cls.policy_id: cls for cls in (MemoryFree, ExpRecent, ExpRAG, DCRS, AWM, ExpeLST, ExpeLMT)
}


def register_policy(cls: type[Policy]) -> type[Policy]:
    POLICIES[cls.policy_id] = cls
    return cls


def make_policy(policy_id: str, gateway, config: PolicyConfig | None = None, **kwargs) -> Policy:
    try:
        cls = POLICIES[policy_id]
    except KeyError:
        raise ConfigurationError(
            f"unknown policy {policy_id!r}; known: {', '.join(sorted(POLICIES))}"
        ) from None
    return cls(gateway, config, **kwargs)


def build_context(state: MemoryState, task, config: PolicyConfig, gateway) -> Context:
    """Context for `task` from `state`, dispatching on the state's policy."""
    return make_policy(state.policy_id, gateway, config).build_context(state, task)


__all__ = [
    "AWM", "DCRS", "EVALUATORS", "POLICIES", "Cheatsheet", "Context", "Empty", "ExpRAG",
    "ExpRecent", "ExpeLMT", "ExpeLST", "ExpelState", "Experience", "Feedback", "MemoryFree",
    "MemoryState", "Policy", "PolicyConfig", "RecentBuffer", "StepOutcome", "Templates",
    "VectorStore", "Workflow", "WorkflowSet", "awm_step", "buffer_update", "build_context",
    "dc_rs_step", "evaluate_answer", "expel_mt_step", "expel_st_step", "make_policy",
    "memory_free_update", "register_policy", "render", "task_template",
]
