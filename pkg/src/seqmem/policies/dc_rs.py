"""Dynamic Cheatsheet, retrieval-and-synthesis variant.

Per task: retrieve similar past cases from the history, let the curator
rewrite the cheatsheet, answer with the new cheatsheet, then append the
(question, answer) pair to the history. The cheatsheet is updated *before*
answering.
"""

from __future__ import annotations

from seqmem.gateway import Gateway
from seqmem.policies.base import (
    Cheatsheet,
    Context,
    Experience,
    MemoryState,
    Policy,
    PolicyConfig,
    StepOutcome,
    render_experience,
    top_k,
)
from seqmem.policies.templates import Templates, render
from seqmem.stream import Task


def _curate(state: MemoryState, question: str, query_text: str, config: PolicyConfig,
            gateway: Gateway, templates: Templates):
    sheet: Cheatsheet = state.payload
    hits: list[tuple[int, float]] = []
    embedding = gateway.embed(query_text)
    if sheet.history:
        hits = top_k(embedding, sheet.history, config.k)
    retrieved = "\n\n".join(
        render_experience(templates, sheet.history[i], rank + 1, show_outcome=False)
        for rank, (i, _) in enumerate(hits)
    )
    prompt = render(templates["dc_curator"], memory=sheet.text, context=retrieved, question=question)
    curated = gateway.generate(gateway.request(prompt), purpose="curate").text.strip()
    if not curated:
        # empty curator output: the retrieved cases become the memory verbatim
        curated = retrieved
    context = Context(curated, [(sheet.history[i].task_id, s) for i, s in hits])
    return curated, context, embedding


def _generate(memory: str, question: str, gateway: Gateway, templates: Templates) -> str:
    prompt = render(templates["dc_generator"], memory=memory, question=question)
    return gateway.generate(gateway.request(prompt), purpose="answer").text


def dc_rs_step(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
               templates: Templates | None = None, question: str | None = None,
               step: int = 0) -> tuple[str, MemoryState, Context]:
    """One DC-RS step on a copy of `state`; returns (prediction, new state, context)."""
    templates = templates or Templates()
    question = question if question is not None else task.prompt
    new = state.copy()
    curated, context, embedding = _curate(new, question, task.prompt, config, gateway, templates)
    new.payload.text = curated
    prediction = _generate(curated, question, gateway, templates)
    new.payload.history.append(
        Experience(step, task.id, task.prompt, prediction, 0, list(embedding.values))
    )
    return prediction, new, context


class DCRS(Policy):
    policy_id = "dc_rs"
    payload_type = Cheatsheet

    def build_context(self, state, task):
        sheet = state.payload
        if not sheet.history:
            return Context(sheet.text)
        hits = top_k(self.gateway.embed(task.prompt), sheet.history, self.config.k)
        return Context(sheet.text, [(sheet.history[i].task_id, s) for i, s in hits])

    def answer(self, state, task):
        # full retrieve-curate-generate pipeline; the curated sheet is discarded
        self.check_state(state)
        scratch = state.copy()
        curated, _, _ = _curate(scratch, self.question(task), task.prompt, self.config,
                                self.gateway, self.templates)
        return _generate(curated, self.question(task), self.gateway, self.templates)

    def step(self, state, task, step):
        self.check_state(state)
        prediction, new, context = dc_rs_step(state, task, self.config, self.gateway,
                                              self.templates, self.question(task), step)
        feedback = self.evaluate(prediction, task)
        new.payload.history[-1].correct = feedback.correct
        return StepOutcome(prediction, feedback, new, context)
