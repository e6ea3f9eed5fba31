import itertools
import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from seqmem.diagnostics import (
    PATTERNS,
    PREFERENCE,
    DiagnosticReport,
    EvalMatrix,
    Thresholds,
    build_report,
    bwt,
    classify_trajectory,
    cumulative_curve,
    efficiency_summary,
    forgetting_approx,
    forgetting_exact,
    holdout_final,
    immediate_validity,
    mer,
    online_acc,
    oracle_metrics,
    pareto_filter,
    ped,
    r_min,
    rank_profiles,
    trend_ho,
)
from seqmem.diagnostics.classify import (
    DEGRADATION_FAMILY,
    EARLY_PEAK_THEN_DEGRADATION,
    GRADUAL_IMPROVEMENT,
    HIGHLY_FLUCTUATING,
    RAPID_DROP_THEN_STABILIZATION,
    STABLE_NON_IMPROVING,
)
from seqmem.diagnostics.compare import competition_ranks
from seqmem.errors import EmptyHorizonError, ValidationError

TOL = 1e-12


def random_matrix(rng: random.Random, T: int, mode="online") -> EvalMatrix:
    rows = {tau: {c: rng.randint(0, 1) for c in range(tau, T + 1)} for tau in range(1, T + 1)}
    online = {tau: rng.randint(0, 1) for tau in range(1, T + 1)}
    return EvalMatrix.dense(rows, online, T, mode)


# -- online utility -------------------------------------------------------

def test_cumulative_curve_example():
    assert list(cumulative_curve([1, 0, 0, 1, 1])) == pytest.approx([1, 0.5, 1 / 3, 0.5, 0.6], abs=TOL)
    assert list(cumulative_curve([1, 1, 1])) == [1, 1, 1]
    assert list(cumulative_curve([0])) == [0]


def test_online_metrics_example():
    c = cumulative_curve([1, 0, 0, 1, 1])
    assert online_acc(c) == pytest.approx(0.6)
    assert ped(c) == pytest.approx(0.4)
    assert mer(c) == pytest.approx(0.6 - 1 / 3)
    assert r_min(c) == pytest.approx(0.6)


def test_gradual_improvement_shape():
    c = cumulative_curve([0, 1, 1, 1])
    assert (online_acc(c), ped(c), mer(c), r_min(c)) == (0.75, 0.0, 0.75, 0.25)
    assert classify_trajectory(mer(c), ped(c), r_min(c)) == GRADUAL_IMPROVEMENT


def test_constant_curve_uses_earliest_minimum():
    c = cumulative_curve([1] * 8)
    assert ped(c) == 0 and mer(c) == 0
    assert r_min(c) == 1 / 8


def test_trace_must_be_binary_and_non_empty():
    with pytest.raises(ValidationError):
        cumulative_curve([])
    with pytest.raises(ValidationError):
        cumulative_curve([0, 2])


# -- hold-out ------------------------------------------------------------

def test_holdout_final():
    assert holdout_final([(50, 0.6), (100, 0.8)], 100) == 0.8
    assert holdout_final([(10, 0.3)], 10) == 0.3
    with pytest.raises(ValidationError):
        holdout_final([(45, 0.6), (90, 0.8)], 100)


def test_trend_examples():
    assert trend_ho([(50, 0.6), (100, 0.8)], 100) == pytest.approx(0.4, abs=TOL)
    assert trend_ho([(10, 0.5), (20, 0.5), (30, 0.5)], 30) == pytest.approx(0.0, abs=TOL)
    T = 37
    assert trend_ho([(s, s / T) for s in (3, 11, 20, 37)], T) == pytest.approx(1.0, abs=TOL)


def test_trend_errors():
    with pytest.raises(ValidationError):
        trend_ho([(10, 0.5)], 10)
    with pytest.raises(ValidationError):
        trend_ho([(10, 0.5), (10, 0.7)], 10)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=8), st.integers(1, 5))
def test_trend_invariant_under_reindexing(hs, scale):
    T = len(hs)
    pts = [(i + 1, h) for i, h in enumerate(hs)]
    scaled = [(s * scale, h) for s, h in pts]
    assert trend_ho(scaled, T * scale) == pytest.approx(trend_ho(pts, T), abs=1e-9)


# -- backward transfer and forgetting ------------------------------------

def example_matrix():
    # Acc(x1; M2)=1, Acc(x2; M3)=1; online A(1)=0, A(2)=1
    return EvalMatrix(3, (1, 2, 3), {(1, 2): 1, (2, 3): 1}, {1: 0, 2: 1, 3: 0})


def test_bwt_example():
    m = example_matrix()
    assert bwt(m, 1) == 0.5
    assert immediate_validity(m) == 0.5


def test_bwt_extremes():
    rows = {tau: {c: 0 for c in range(tau, 5)} for tau in range(1, 5)}
    m = EvalMatrix.dense(rows, {tau: 1 for tau in range(1, 5)}, 4)
    assert bwt(m, 1) == -1 and bwt(m, 3) == -1


def test_bwt_empty_horizon():
    with pytest.raises(EmptyHorizonError):
        bwt(example_matrix(), 2)


def test_forgetting_window_example():
    m = EvalMatrix(3, (1, 2, 3), {(1, 1): 0, (1, 2): 1, (1, 3): 0}, {1: 0, 2: 1, 3: 1})
    assert forgetting_exact(m, 2) == 1
    # grid {2} alone only sees the endpoint
    assert forgetting_approx(m, 2, [2]) == 0
    assert forgetting_approx(m, 2, [1, 2]) == 1


def test_constant_rows_have_no_forgetting():
    rows = {tau: {c: 1 for c in range(tau, 7)} for tau in range(1, 7)}
    m = EvalMatrix.dense(rows, {tau: 1 for tau in range(1, 7)}, 6)
    for t in range(1, 6):
        assert forgetting_exact(m, t) == 0
        assert forgetting_approx(m, t, [1, 2, 5]) == 0
        assert bwt(m, t) == 0


def test_post_update_baseline_switch():
    m = EvalMatrix(3, (1, 2, 3), {(1, 1): 1, (1, 2): 1, (2, 2): 0, (2, 3): 1}, {1: 0, 2: 1})
    assert bwt(m, 1) == 0.5
    assert bwt(m.with_baseline("post_update"), 1) == 0.5
    assert m.with_baseline("post_update").baseline(1) == 1


def test_matrix_roundtrip_and_validation():
    m = random_matrix(random.Random(3), 6)
    assert EvalMatrix.from_dict(m.to_dict()) == m
    with pytest.raises(ValidationError):
        EvalMatrix(3, (1, 2, 3), {(2, 1): 1})
    with pytest.raises(ValidationError):
        EvalMatrix(3, (1, 2, 3), {(1, 2): 2})


# -- oracle equivalence ----------------------------------------------------

def close(engine, ref):
    if ref is None:
        return engine is None
    return engine is not None and abs(engine - float(ref)) <= TOL


def engine_or_none(fn, *args):
    try:
        return fn(*args)
    except EmptyHorizonError:
        return None


def check_trace(trace):
    ref = oracle_metrics(trace)
    c = cumulative_curve(trace)
    assert all(close(a, b) for a, b in zip(c, ref["curve"]))
    assert close(online_acc(c), ref["online_acc"])
    assert close(ped(c), ref["ped"])
    assert close(mer(c), ref["mer"])
    # r_min is a pure index: it must agree exactly
    assert Fraction(r_min(c)).limit_denominator(len(trace)) == ref["r_min"]


def check_matrix(m, horizons):
    ref = oracle_metrics([m.online[t] for t in range(1, m.T + 1)], m, horizons)
    for t in horizons:
        assert close(engine_or_none(bwt, m, t), ref["bwt"][t])
        assert close(engine_or_none(forgetting_exact, m, t), ref["f_exact"][t])
        assert close(engine_or_none(forgetting_approx, m, t, horizons), ref["f_approx"][t])
    assert close(engine_or_none(immediate_validity, m), ref["iv"])


def test_engine_matches_oracle_on_seeded_traces():
    rng = random.Random(2024)
    for _ in range(200):
        T = rng.randint(1, 200)
        check_trace([rng.randint(0, 1) for _ in range(T)])


def test_engine_matches_oracle_on_seeded_matrices():
    rng = random.Random(7)
    for i in range(40):
        T = rng.randint(2, 30)
        m = random_matrix(rng, T, "post_update" if i % 2 else "online")
        check_matrix(m, sorted(rng.sample(range(1, T), rng.randint(1, T - 1))))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60))
def test_engine_matches_oracle_property(trace):
    check_trace(trace)


# -- identities --------------------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=80))
def test_online_identities(trace):
    c = cumulative_curve(trace)
    p, m = ped(c), mer(c)
    assert p >= 0 and m >= 0 and p <= 1 and m <= 1
    assert p + m == pytest.approx(c.max() - c.min(), abs=TOL)
    assert 0 < r_min(c) <= 1


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 14), st.integers(0, 10_000), st.sampled_from(["online", "post_update"]))
def test_matrix_identities(T, seed, mode):
    rng = random.Random(seed)
    m = random_matrix(rng, T, mode)
    for t in range(1, T):
        b, fe = bwt(m, t), forgetting_exact(m, t)
        assert -1 <= b <= 1
        assert fe >= 0
        assert fe + b >= -TOL
        for r in range(1, min(t, 3) + 1):
            for grid in itertools.combinations(range(1, t + 1), r):
                fa = forgetting_approx(m, t, grid)
                assert 0 <= fa <= fe + TOL


def test_efficiency_summary_sums_steps():
    class Step:
        def __init__(self, p, c):
            self.prompt_tokens, self.completion_tokens = p, c

    class Log:
        steps = [Step(10, 5), Step(7, 3)]
        runtime_ms = 1500.0

    assert efficiency_summary(Log()) == (25, 1.5)

    class Empty:
        steps = []
        runtime_ms = 0.0

    assert efficiency_summary(Empty()) == (0, 0.0)


# -- classifier --------------------------------------------------------------

def test_classifier_table_rows():
    assert classify_trajectory(0.10, 0.0, 0.1) == GRADUAL_IMPROVEMENT
    assert classify_trajectory(0.0, 0.0, 0.5) == STABLE_NON_IMPROVING
    assert classify_trajectory(0.01, 0.10, 0.9) in DEGRADATION_FAMILY
    assert classify_trajectory(0.10, 0.0, 0.5) == "drop-then-recover"


def test_classifier_exemplars():
    assert classify_trajectory(0.150, 0.122, 0.10) == GRADUAL_IMPROVEMENT
    assert classify_trajectory(0.000, 0.486, 1.00) in DEGRADATION_FAMILY


def test_classifier_both_high_and_inconsistent_is_fluctuating():
    assert classify_trajectory(0.2, 0.1, 0.9) == HIGHLY_FLUCTUATING
    assert classify_trajectory(0.1, 0.2, 0.1) == HIGHLY_FLUCTUATING


def test_degradation_subtypes_from_curve():
    drop_flat = cumulative_curve([1] * 5 + [0] * 45)
    assert drop_flat[-1] == pytest.approx(0.1)
    steady_fall = [1 - 0.5 * i / 49 for i in range(50)]
    c = list(drop_flat)
    lab = classify_trajectory(mer(c), ped(c), r_min(c), curve=c)
    assert lab in DEGRADATION_FAMILY
    assert classify_trajectory(0.0, 0.5, 1.0, curve=steady_fall) == EARLY_PEAK_THEN_DEGRADATION
    plateau = [1.0, 0.6] + [0.5] * 30
    assert classify_trajectory(0.0, 0.5, 1.0, curve=plateau) == RAPID_DROP_THEN_STABILIZATION


@given(st.floats(0, 1), st.floats(0, 1), st.floats(1e-6, 1))
def test_classifier_total(m, p, r):
    assert classify_trajectory(m, p, r) in PATTERNS


def test_every_pattern_has_a_preference():
    assert set(PREFERENCE) == set(PATTERNS)


def test_custom_thresholds():
    assert classify_trajectory(0.03, 0.0, 0.1) == STABLE_NON_IMPROVING
    assert classify_trajectory(0.03, 0.0, 0.1, Thresholds(high=0.025)) == GRADUAL_IMPROVEMENT


# -- reports, ranking, pareto -------------------------------------------------

def make_report(method, acc, tokens, runtime=1.0, holdout=None):
    r = build_report(method, "toy", [1, 0, 1, 1], tokens_total=tokens, runtime_s=runtime)
    r.online_acc = acc
    if holdout is not None:
        from seqmem.diagnostics import HoldoutSummary
        r.holdout = [HoldoutSummary("h", "in_distribution", [(4, holdout)], holdout, None)]
    return r


def test_report_roundtrip():
    m = random_matrix(random.Random(1), 6)
    r = build_report("m", "d", [m.online[t] for t in range(1, 7)], m, [1, 2, 5], tokens_total=9)
    again = DiagnosticReport.from_dict(r.to_dict())
    assert again == r
    assert r.iv == bwt(m, 1)


def test_rank_dominance():
    good = make_report("good", 0.9, 10, 0.5, holdout=0.9)
    bad = make_report("bad", 0.1, 100, 5.0, holdout=0.1)
    bad.mer, bad.ped, bad.r_min = 0.0, 0.5, 1.0
    good.mer, good.ped, good.r_min = 0.5, 0.0, 0.1
    profiles = rank_profiles([good, bad])
    for dim in ("online_utility", "holdout_generalization", "efficiency"):
        assert profiles[0].ranks[dim] == 1 and profiles[1].ranks[dim] == 2


def test_rank_identical_reports_tie():
    a, b = make_report("a", 0.5, 10), make_report("b", 0.5, 10)
    for p in rank_profiles([a, b]):
        assert set(p.scores.values()) == {0.5}
        assert set(p.ranks.values()) == {1}


def test_rank_three_methods_match_sort_oracle():
    reports = [make_report(n, acc, tok) for n, acc, tok in (("x", 0.2, 30), ("y", 0.8, 50), ("z", 0.5, 10))]
    for r, (m, p) in zip(reports, ((0.1, 0.2), (0.3, 0.0), (0.2, 0.1))):
        r.mer, r.ped, r.r_min = m, p, 0.5
    profiles = {p.method: p for p in rank_profiles(reports)}
    # efficiency: tokens normalised; runtimes equal -> 0.5 each
    eff = {r.method: ((max(x.tokens_total for x in reports) - r.tokens_total) / 40 + 0.5) / 2 for r in reports}
    order = sorted(eff, key=lambda k: -eff[k])
    assert [profiles[k].ranks["efficiency"] for k in order] == [1, 2, 3]
    for k in eff:
        assert profiles[k].scores["efficiency"] == pytest.approx(eff[k])


def test_rank_mode_and_tie_convention():
    assert competition_ranks([0.5, 0.9, 0.5, 0.1]) == [2, 1, 2, 4]
    a, b, c = make_report("a", 0.9, 10), make_report("b", 0.1, 20), make_report("c", 0.5, 15)
    profiles = rank_profiles([a, b, c], normalization="rank")
    assert [p.ranks["efficiency"] for p in profiles] == [1, 3, 2]


def test_rank_needs_two_methods():
    with pytest.raises(ValidationError):
        rank_profiles([make_report("a", 0.5, 1)])


def test_pareto_examples():
    best = make_report("best", 0.9, 5, holdout=0.9)
    worse = make_report("worse", 0.5, 50, holdout=0.4)
    assert pareto_filter([best, worse]) == ["best"]
    cheap = make_report("cheap", 0.4, 5, holdout=0.4)
    rich = make_report("rich", 0.9, 500, holdout=0.9)
    assert pareto_filter([cheap, rich]) == ["cheap", "rich"]
    assert pareto_filter([cheap, rich], {"OnlineAcc": "max"}) == ["rich"]
    assert pareto_filter([cheap, rich], ["token_total"]) == ["cheap"]
    with pytest.raises(ValidationError):
        pareto_filter([cheap, rich], {})


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5)), min_size=5, max_size=5))
def test_pareto_matches_pairwise_oracle(rows):
    reports = [make_report(f"m{i}", a / 5, tok, rt) for i, (a, tok, rt) in enumerate(rows)]
    obj = {"online_acc": "max", "tokens_total": "min", "runtime_s": "min"}
    vec = {r.method: (r.online_acc, -r.tokens_total, -r.runtime_s) for r in reports}

    def dominated(i):
        return any(all(x >= y for x, y in zip(vec[j], vec[i])) and vec[j] != vec[i] for j in vec if j != i)

    assert pareto_filter(reports, obj) == [r.method for r in reports if not dominated(r.method)]
