"""ExpeL in a sequential setting, single-try (ST) and multi-try (MT) variants.

State: success pool B (retrieval source), recent successes S (flushed into an
insight refresh every L successes), and the bounded insight list.
"""

from __future__ import annotations

import re

from seqmem.gateway import Gateway
from seqmem.policies.base import (
    Context,
    ExpelState,
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

_BULLET = re.compile(r"^\s*(?:[-*•]+|\d+[.)]|rule\s*\d+\s*[:.)-])\s*", re.IGNORECASE)


def parse_rules(text: str, cap: int) -> list[str]:
    """One rule per non-empty line, bullets stripped; keeps the newest `cap`."""
    rules = [_BULLET.sub("", line).strip() for line in text.splitlines()]
    rules = [r for r in rules if r]
    return rules[-cap:]


def _numbered(rules: list[str]) -> str:
    return "\n".join(f"{i}. {r}" for i, r in enumerate(rules, 1))


def expel_context(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
                  templates: Templates) -> Context:
    ex: ExpelState = state.payload
    hits = top_k(gateway.embed(task.prompt), ex.pool, config.k) if ex.pool else []
    examples = "\n\n".join(render_experience(templates, ex.pool[i], r + 1) for r, (i, _) in enumerate(hits))
    return Context(examples, [(ex.pool[i].task_id, s) for i, s in hits])


def _attempt(state: MemoryState, context: Context, question: str, reflections: str,
             gateway: Gateway, templates: Templates) -> str:
    prompt = render(templates["expel_answer"], memory=_numbered(state.payload.insights),
                    context=context.rendered_text, reflections=reflections, question=question)
    return gateway.generate(gateway.request(prompt), purpose="answer").text


def _batch_refresh(state: MemoryState, config: PolicyConfig, gateway: Gateway, templates: Templates) -> None:
    ex: ExpelState = state.payload
    if len(ex.recent_successes) < config.batch_update_size:
        return
    trajectories = "\n\n".join(render_experience(templates, e, i + 1) for i, e in enumerate(ex.recent_successes))
    prompt = render(templates["expel_insights_batch"], memory=_numbered(ex.insights), context=trajectories)
    ex.insights = parse_rules(gateway.generate(gateway.request(prompt), purpose="insight").text,
                              config.max_num_rules)
    ex.recent_successes = []


def _success(task: Task, prediction: str, step: int, gateway: Gateway) -> Experience:
    return Experience(step, task.id, task.prompt, prediction, 1, list(gateway.embed(task.prompt).values))


def expel_st_step(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
                  templates: Templates | None = None, evaluator: str = "exact_match",
                  step: int = 0) -> tuple[str, MemoryState]:
    out = ExpeLST(gateway, config, templates, evaluator).step(state, task, step)
    return out.prediction, out.state


def expel_mt_step(state: MemoryState, task: Task, config: PolicyConfig, gateway: Gateway,
                  templates: Templates | None = None, evaluator: str = "exact_match",
                  step: int = 0) -> tuple[str, MemoryState, int]:
    out = ExpeLMT(gateway, config, templates, evaluator).step(state, task, step)
    return out.prediction, out.state, out.tries_used


class ExpeLST(Policy):
    policy_id = "expel_st"
    payload_type = ExpelState

    def build_context(self, state, task):
        return expel_context(state, task, self.config, self.gateway, self.templates)

    def answer(self, state, task):
        self.check_state(state)
        return _attempt(state, self.build_context(state, task), self.question(task), "",
                        self.gateway, self.templates)

    def step(self, state, task, step):
        self.check_state(state)
        context = self.build_context(state, task)
        prediction = _attempt(state, context, self.question(task), "", self.gateway, self.templates)
        feedback = self.evaluate(prediction, task)
        new = state.copy()
        if feedback.correct:
            exp = _success(task, prediction, step, self.gateway)
            new.payload.recent_successes.append(exp)
            new.payload.pool.append(exp)
            _batch_refresh(new, self.config, self.gateway, self.templates)
        return StepOutcome(prediction, feedback, new, context)


class ExpeLMT(ExpeLST):
    """Up to `max_tries` attempts per task with self-reflection between them.

    Reflections are per-task scratch. A reflection is generated after every
    failed attempt, including the last. Hold-out and retrospective answers use
    a single attempt (inherited `answer`).
    """

    policy_id = "expel_mt"

    def step(self, state, task, step):
        self.check_state(state)
        question = self.question(task)
        context = self.build_context(state, task)
        new = state.copy()
        reflections: list[str] = []
        succ: Experience | None = None
        fail: Experience | None = None
        prediction, feedback, tries = "", None, 0
        for tries in range(1, self.config.max_tries + 1):
            prediction = _attempt(state, context, question, "\n".join(reflections),
                                  self.gateway, self.templates)
            feedback = self.evaluate(prediction, task)
            if feedback.correct:
                succ = _success(task, prediction, step, self.gateway)
                new.payload.pool.append(succ)
                break
            fail = Experience(step, task.id, task.prompt, prediction, 0)
            prompt = render(self.templates["expel_reflect"], question=question, prediction=prediction)
            reflections.append(self.gateway.generate(self.gateway.request(prompt), purpose="reflect").text.strip())
        if succ is not None:
            new.payload.recent_successes.append(succ)
        if succ is not None and fail is not None:
            prompt = render(
                self.templates["expel_insights_pair"],
                memory=_numbered(new.payload.insights),
                success=render_experience(self.templates, succ, 1),
                failure=render_experience(self.templates, fail, 1),
            )
            new.payload.insights = parse_rules(
                self.gateway.generate(self.gateway.request(prompt), purpose="insight").text,
                self.config.max_num_rules,
            )
        _batch_refresh(new, self.config, self.gateway, self.templates)
        return StepOutcome(prediction, feedback, new, context, tries_used=tries)
