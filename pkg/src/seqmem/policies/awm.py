"""Agent Workflow Memory: induce a workflow from each successful experience."""

from __future__ import annotations

from seqmem.gateway import Gateway
from seqmem.policies.base import (
    Context,
    Experience,
    MemoryState,
    Policy,
    PolicyConfig,
    Workflow,
    WorkflowSet,
    render_experience,
    top_k,
)
from seqmem.policies.evaluators import Feedback
from seqmem.policies.templates import Templates, render
from seqmem.stream import Task

SUMMARY_MARKER = "## Summary Workflows"


def induction_prompt(templates: Templates, experiences: list[Experience]) -> str:
    rendered = "\n\n".join(render_experience(templates, e, i + 1) for i, e in enumerate(experiences))
    return "\n\n".join([templates["awm_induce"].strip(), templates["awm_one_shot"].strip(),
                        rendered, SUMMARY_MARKER])


def workflow_context(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
                     templates: Templates) -> Context:
    flows = state.payload.workflows
    if not flows:
        return Context()
    hits = top_k(gateway.embed(task.prompt), flows, config.k)
    text = "\n\n".join(
        render(templates["workflow"], index=str(rank + 1), text=flows[i].text)
        for rank, (i, _) in enumerate(hits)
    )
    return Context(text, [(flows[i].id, s) for i, s in hits])


def induce(state: MemoryState, gateway: Gateway, templates: Templates) -> None:
    ws: WorkflowSet = state.payload
    batch = ws.pending
    text = gateway.generate(gateway.request(induction_prompt(templates, batch)), purpose="induce").text.strip()
    # an empty induction still records a workflow so set size tracks inductions
    text = text or batch[-1].prompt
    ws.workflows.append(Workflow(f"wf-{len(ws.workflows) + 1}", text, batch[-1].task_id,
                                 list(gateway.embed(text).values)))
    ws.pending = []


def awm_update(state: MemoryState, task: Task, prediction: str, feedback: Feedback, step: int,
               config: PolicyConfig, gateway: Gateway, templates: Templates) -> MemoryState:
    if not feedback.correct:
        return state
    state.payload.pending.append(Experience(step, task.id, task.prompt, prediction, 1))
    if len(state.payload.pending) >= config.induce_steps:
        induce(state, gateway, templates)
    return state


def awm_step(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
             templates: Templates | None = None, evaluator: str = "exact_match",
             step: int = 0) -> tuple[str, MemoryState]:
    policy = AWM(gateway, config, templates, evaluator)
    out = policy.step(state, task, step)
    return out.prediction, out.state


class AWM(Policy):
    policy_id = "awm"
    payload_type = WorkflowSet

    def build_context(self, state, task):
        return workflow_context(state, task, self.config, self.gateway, self.templates)

    def update(self, state, task, prediction, feedback, step):
        return awm_update(state, task, prediction, feedback, step, self.config, self.gateway, self.templates)
