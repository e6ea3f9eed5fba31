import json
import random

import pytest
from hypothesis import given, strategies as st

from seqmem.config import build_gateway, build_plan, parse_config
from seqmem.errors import GatewayError, InvariantViolation, RunAborted, ValidationError
from seqmem.gateway import Gateway, HashingEmbedder, UsageLedger, hint_model, scripted_policy_model
from seqmem.policies import PolicyConfig, make_policy
from seqmem.policies.retrieval import ExpRecent
from seqmem.runner import (
    RunLog,
    RunPlan,
    Snapshot,
    evaluate_holdout_at,
    evaluate_retrospective,
    execute,
    grid_horizons,
    make_schedule,
    replay_sample,
    resume,
    run_sequential,
)
from seqmem.stream import HoldoutSet, TaskStream

from conftest import make_tasks


def always(answer="42", **kw):
    return scripted_policy_model([], default=answer, **kw)


def plan_for(tasks, policy_id="memory_free", **kw):
    return RunPlan(TaskStream(tuple(tasks)), policy_id, **kw)


# -- schedule ----------------------------------------------------------------

def test_schedule_examples():
    assert make_schedule(100, 10) == list(range(10, 101, 10))
    assert make_schedule(7, 7) == [1, 2, 3, 4, 5, 6, 7]
    with pytest.raises(ValidationError):
        make_schedule(5, 6)
    with pytest.raises(ValidationError):
        make_schedule(5, 0)


@given(st.integers(1, 500), st.data())
def test_schedule_even_spacing(T, data):
    n = data.draw(st.integers(1, T))
    s = make_schedule(T, n)
    assert len(s) == n and s[-1] == T
    gaps = [b - a for a, b in zip([0] + s, s)]
    assert min(gaps) >= 1 and max(gaps) - min(gaps) <= 1


def test_schedule_97():
    s = make_schedule(97, 10)
    gaps = [b - a for a, b in zip([0] + s, s)]
    assert s[-1] == 97 and max(gaps) - min(gaps) <= 1


def test_grid_horizons():
    assert grid_horizons([10, 20, 30]) == [10, 20]
    assert grid_horizons([5]) == [1]


def test_plan_validation():
    tasks = make_tasks(5)
    with pytest.raises(ValidationError):
        plan_for(tasks, checkpoints=[2, 4])  # T missing
    with pytest.raises(ValidationError):
        plan_for(tasks, checkpoints=[5], horizons=[5])
    with pytest.raises(ValidationError):
        TaskStream(())
    assert plan_for(tasks).checkpoints == (1, 2, 3, 4, 5)


# -- online pass -------------------------------------------------------------

def test_memory_free_always_correct():
    log = run_sequential(plan_for(make_tasks(5)), always())
    assert log.online_trace == [1, 1, 1, 1, 1]
    assert len(log.snapshots) == 5


def test_hint_dependent_recency():
    # correct only when a past experience is in the context
    gw = hint_model("Past task", "42")
    log = run_sequential(plan_for(make_tasks(5), "exp_recent", policy_config=PolicyConfig(k=1)), gw)
    assert log.online_trace == [0, 1, 1, 1, 1]


def test_step_records_carry_ledger_deltas():
    gw = always(latency=2.0)
    log = run_sequential(plan_for(make_tasks(4)), gw)
    assert all(s.calls == 1 and s.latency == 2.0 for s in log.steps)
    assert sum(s.prompt_tokens + s.completion_tokens for s in log.steps) == gw.ledger("online").tokens_total
    assert log.runtime_ms == 8.0
    deltas = [s.ledger_delta.call_count for s in log.snapshots]
    assert deltas == [1, 1, 1, 1]


def test_runlog_jsonl_roundtrip(tmp_path):
    gw = always()
    hs = HoldoutSet(tuple(make_tasks(3, prefix="h")))
    plan = plan_for(make_tasks(6), "exp_rag", holdout_sets={"h": hs}, checkpoints=[3, 6])
    log = execute(plan, gw, tmp_path)
    text = (tmp_path / "events.jsonl").read_text()
    assert text == log.to_jsonl()
    again = RunLog.from_jsonl(text)
    assert again.to_jsonl() == text
    kinds = {json.loads(line)["event"] for line in text.splitlines()}
    assert {"run", "step", "snapshot", "holdout", "retro", "end"} == kinds


def test_runlog_rejects_bad_events():
    with pytest.raises(ValidationError):
        RunLog.from_jsonl('{"event": "step"}\n')
    with pytest.raises(ValidationError):
        RunLog.from_jsonl("not json\n")


def test_deterministic_runs(tmp_path):
    def go(d):
        gw = hint_model("Past task", "42")
        plan = plan_for(make_tasks(8), "expel_mt", checkpoints=[4, 8])
        execute(plan, gw, d)
        return (d / "events.jsonl").read_bytes()

    assert go(tmp_path / "a") == go(tmp_path / "b")


def test_evaluations_do_not_change_online_predictions():
    tasks = make_tasks(8)
    hs = HoldoutSet(tuple(make_tasks(4, prefix="h")))
    a = execute(plan_for(tasks, "dc_rs", holdout_sets={"h": hs}), hint_model("Past case", "42"))
    b = run_sequential(plan_for(tasks, "dc_rs"), hint_model("Past case", "42"))
    assert [s.prediction for s in a.steps] == [s.prediction for s in b.steps]
    assert [s.state for s in a.snapshots] == [s.state for s in b.snapshots]


# -- abort and resume ----------------------------------------------------------

class Flaky:
    """Backend wrapper that fails permanently on prompts containing `poison`."""

    def __init__(self, inner, poison):
        self.inner, self.poison = inner, poison
        self.kind, self.simulated_time = inner.kind, True

    def complete(self, request):
        if self.poison in request.full_text.split("\n")[-1]:
            raise GatewayError("endpoint down", retryable=False)
        return self.inner.complete(request)


def test_abort_then_resume_matches_uninterrupted(tmp_path):
    tasks = make_tasks(12)
    hs = HoldoutSet(tuple(make_tasks(2, prefix="h")))

    def plan():
        return plan_for(tasks, "exp_recent", holdout_sets={"h": hs}, checkpoints=[4, 8, 12])

    full = execute(plan(), hint_model("Past task", "42", latency=1.25), tmp_path / "full")

    good = hint_model("Past task", "42", latency=1.25)
    bad = Gateway(Flaky(good.backend, "prompt q7"), HashingEmbedder())
    with pytest.raises(RunAborted) as info:
        execute(plan(), bad, tmp_path / "cut")
    assert info.value.last_step == 6
    token = json.loads((tmp_path / "cut" / "resume.json").read_text())
    assert token["last_step"] == 6

    resumed = resume(plan(), hint_model("Past task", "42", latency=1.25), tmp_path / "cut")
    assert resumed.to_jsonl() == full.to_jsonl()
    assert (tmp_path / "cut" / "events.jsonl").read_bytes() == (tmp_path / "full" / "events.jsonl").read_bytes()


def test_resume_without_token(tmp_path):
    with pytest.raises(ValidationError):
        resume(plan_for(make_tasks(3)), always(), tmp_path)


# -- hold-out -------------------------------------------------------------------

def snapshot_of(policy, state, step=1):
    return Snapshot(step, state.serialize(), UsageLedger())


def test_holdout_values():
    hs = HoldoutSet(tuple(make_tasks(4, prefix="h")))
    for answer, expected in (("42", 1.0), ("nope", 0.0)):
        pol = make_policy("memory_free", always(answer))
        assert evaluate_holdout_at(snapshot_of(pol, pol.initial_state()), hs, pol) == expected
    gw = scripted_policy_model([{"match": "h1", "respond": "42"}, {"match": "h3", "respond": "42"}], default="x")
    pol = make_policy("memory_free", gw)
    assert evaluate_holdout_at(snapshot_of(pol, pol.initial_state()), hs, pol) == 0.5


def test_holdout_detects_mutation():
    class Leaky(ExpRecent):
        def answer(self, state, task):
            state.payload.experiences.clear()
            return super().answer(state, task)

    gw = always()
    pol = make_policy("exp_recent", gw)
    st = pol.initial_state()
    st = pol.step(st, make_tasks(1)[0], 1).state
    leaky = Leaky(gw)
    with pytest.raises(InvariantViolation):
        evaluate_holdout_at(snapshot_of(leaky, st), HoldoutSet(tuple(make_tasks(2, prefix="h"))), leaky)


# -- retrospective ------------------------------------------------------------------

def test_dense_when_budget_covers_all():
    gw = always()
    plan = plan_for(make_tasks(6), checkpoints=[2, 4, 6])
    log = run_sequential(plan, gw)
    m = evaluate_retrospective(log.snapshots, log, plan.stream, plan.make_policy(gw), replay_budget=10)
    assert set(m.entries) == {(tau, c) for c in (2, 4, 6) for tau in range(1, c)}


def test_memory_free_rows_constant():
    gw = scripted_policy_model([{"match": "q2", "respond": "42"}, {"match": "q5", "respond": "42"}], default="x")
    plan = plan_for(make_tasks(6))
    log = run_sequential(plan, gw)
    m = evaluate_retrospective(log.snapshots, log, plan.stream, plan.make_policy(gw))
    for tau in range(1, 6):
        assert {m.acc(tau, c) for c in range(tau + 1, 7)} == {log.online_trace[tau - 1]}


def test_replay_sample_is_paired_across_checkpoints():
    gw = always()
    plan = plan_for(make_tasks(5), checkpoints=[3, 5])
    log = run_sequential(plan, gw)
    m = evaluate_retrospective(log.snapshots, log, plan.stream, plan.make_policy(gw), replay_budget=2, seed=11)
    sample = replay_sample(5, 2, 11)
    assert sample == sorted(random.Random(11).sample([1, 2, 3, 4], 2))
    by_col = {c: sorted(tau for tau, cc in m.entries if cc == c) for c in (3, 5)}
    assert by_col[5] == sample
    assert by_col[3] == [tau for tau in sample if tau < 3]
    # baseline column = online trace restricted to replayed tasks
    assert m.online == {tau: log.online_trace[tau - 1] for tau in sample}


def test_post_update_mode_fills_diagonal():
    gw = always()
    plan = plan_for(make_tasks(4), baseline_mode="post_update")
    log = run_sequential(plan, gw)
    m = evaluate_retrospective(log.snapshots, log, plan.stream, plan.make_policy(gw), baseline_mode="post_update")
    assert all((tau, tau) in m.entries for tau in range(1, 5))


def test_parallel_evaluation_matches_sequential():
    tasks = make_tasks(10)
    hs = HoldoutSet(tuple(make_tasks(6, prefix="h")))
    runs = []
    for n in (1, 4):
        plan = plan_for(tasks, "exp_rag", holdout_sets={"h": hs}, max_in_flight=n)
        runs.append(execute(plan, hint_model("Past task", "42")))
    assert runs[0].retro == runs[1].retro
    assert [h.correct for h in runs[0].holdout] == [h.correct for h in runs[1].holdout]
    assert runs[0].ledgers["retro"].call_count == runs[1].ledgers["retro"].call_count


# -- golden scenario via config ------------------------------------------------------

def test_golden_trace_through_runner(golden_config):
    import sys
    from pathlib import Path

    sys.path.insert(0, str(Path(__file__).parent / "golden"))
    import scenario

    cfg = parse_config(golden_config)
    log = execute(build_plan(cfg), build_gateway(cfg.gateway))
    assert log.online_trace == scenario.hand_simulate()["online_trace"]
