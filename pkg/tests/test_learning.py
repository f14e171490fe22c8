import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqm import kernels
from dqm.learning import (
    BoundNotApplicable,
    EwaState,
    MlewaState,
    RegretLedger,
    ewa_regret_bound,
    ewa_strategy,
    ewa_update,
    first_visit_bound_check,
    log_odds_against_zero,
    mlewa_step,
    mlewa_update,
    pref0_exact_holds,
    pref0_holds,
    pref0_lower_bound,
    record_exact_gaps,
    regret_per_level,
    sample_action,
)
from dqm.model import ModelParams, PenaltySchedule, State


def softmax(v):
    w = [math.exp(x) for x in v]
    s = sum(w)
    return [x / s for x in w]


def test_uniform_weights_give_uniform_strategy():
    assert np.allclose(ewa_strategy(EwaState.uniform(5)), 0.2)


def test_strategy_example():
    got = ewa_strategy(EwaState([0.0, -0.1, -0.2]))
    assert np.allclose(got, [0.36717, 0.33223, 0.30061], atol=1e-5)
    assert np.allclose(got, softmax([0.0, -0.1, -0.2]), atol=1e-15)


def test_update_example():
    ewa = ewa_update(EwaState.uniform(3, 0.1), [3, 2, 4])
    assert np.allclose(ewa.log_weights, [-0.3, -0.2, -0.4])
    assert np.allclose(ewa_strategy(ewa), [0.33223, 0.36717, 0.30061], atol=1e-5)


def test_zero_costs_leave_weights_unchanged():
    ewa = EwaState([0.5, -1.0, 2.0])
    assert np.array_equal(ewa_update(ewa, [0, 0, 0]).log_weights, ewa.log_weights)


def test_update_rejects_bad_costs():
    with pytest.raises(ValueError):
        ewa_update(EwaState.uniform(3), [1, 2])
    with pytest.raises(ValueError):
        ewa_update(EwaState.uniform(3), [1, np.inf, 2])


weights = st.lists(st.floats(-50, 50), min_size=2, max_size=6)


@given(weights, st.floats(-1e3, 1e3))
def test_strategy_is_shift_invariant(lw, shift):
    a = ewa_strategy(EwaState(lw))
    b = ewa_strategy(EwaState(np.array(lw) + shift))
    assert np.allclose(a, b, rtol=1e-9, atol=1e-12)
    assert abs(a.sum() - 1) < 1e-12


@given(weights.flatmap(lambda lw: st.tuples(
    st.just(lw),
    st.lists(st.floats(0, 1e3), min_size=len(lw), max_size=len(lw)),
    st.lists(st.floats(0, 1e3), min_size=len(lw), max_size=len(lw)),
)))
def test_two_updates_equal_one_summed_update(args):
    lw, c1, c2 = args
    two = ewa_update(ewa_update(EwaState(lw), c1), c2)
    one = ewa_update(EwaState(lw), np.add(c1, c2))
    assert np.allclose(two.log_weights, one.log_weights, rtol=1e-12, atol=1e-9)


def test_strategy_has_no_zeros_after_many_large_updates():
    ewa = EwaState.uniform(5, 0.1)
    costs = np.array([0.0, 1.0, 2.0, 3.0, 4.0]) * 321 * 8
    lw = ewa.log_weights
    for _ in range(10**6):
        lw -= ewa.eta * costs
    ewa = EwaState(lw, 0.1)
    p = ewa_strategy(ewa)
    assert np.all(p > 0) and np.all(np.isfinite(p))
    assert abs(p.sum() - 1) < 1e-12 and p[0] == pytest.approx(1.0)


def test_log_odds_matches_direct_formula():
    lw = np.array([0.3, -0.2, 1.1])
    x0 = softmax(lw)[0]
    assert log_odds_against_zero(lw) == pytest.approx(math.log(1 / x0 - 1))


@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.floats(0, 0.999999))
def test_sample_action_is_inverse_cdf(w, u):
    p = np.array(w) / sum(w)
    a = sample_action(p, u)
    cdf = np.cumsum(p)
    assert (a == 0 or u >= cdf[a - 1] - 1e-12) and (a == len(p) - 1 or u < cdf[a] + 1e-12)


def test_level_one_without_late_jobs_is_plain_ewa():
    rng = np.random.default_rng(0)
    ml = MlewaState.start(4, 0.1)
    plain = EwaState.uniform(4, 0.1)
    for _ in range(50):
        c = rng.uniform(0, 10, 4)
        mlewa_update(ml, 0, c, late_count=0)
        plain = ewa_update(plain, c)
    assert list(ml.levels) == [1]
    assert np.allclose(ml.levels[1].log_weights, plain.log_weights)


def test_new_level_copies_previous_weights():
    ml = MlewaState.start(3, 0.1)
    mlewa_update(ml, 0, [1.0, 2.0, 3.0], late_count=1)
    assert ml.current_level == 2
    assert np.array_equal(ml.levels[2].log_weights, ml.levels[1].log_weights)
    assert ml.levels[2].log_weights is not ml.levels[1].log_weights
    assert ml.first_visit == {1: 0, 2: 1}


def test_revisited_level_resumes_stored_weights():
    ml = MlewaState.start(3, 0.1)
    mlewa_update(ml, 0, [1.0, 2.0, 3.0], late_count=1)   # 1 -> 2
    stored = ml.levels[2].log_weights.copy()
    mlewa_update(ml, 1, [5.0, 0.0, 1.0], late_count=0)   # 2 -> 1, level 2 updated
    stored = stored - 0.1 * np.array([5.0, 0.0, 1.0])
    mlewa_update(ml, 2, [9.0, 9.0, 0.0], late_count=0)   # 1 -> 1
    mlewa_update(ml, 2, [9.0, 9.0, 0.0], late_count=1)   # 1 -> 2
    assert ml.current_level == 2
    assert np.allclose(ml.levels[2].log_weights, stored)
    assert ml.visits == {1: 3, 2: 1}


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 3)), min_size=1, max_size=40))
def test_only_current_level_changes(moves):
    ml = MlewaState.start(3, 0.1)
    for action, late in moves:
        before = {c: e.log_weights.copy() for c, e in ml.levels.items()}
        level = ml.current_level
        mlewa_update(ml, action, [float(action), 1.0, 2.0], late)
        for c, lw in before.items():
            if c != level:
                assert np.array_equal(ml.levels[c].log_weights, lw)
    assert sum(ml.visits.values()) == len(moves) == ml.t


def test_step_rejects_level_count_mismatch():
    params = ModelParams(3, 5, PenaltySchedule.constant(10))
    ml = MlewaState.start(5)
    with pytest.raises(ValueError):
        mlewa_step(ml, params, State((2, 1, 1)), 0, [0, 0, 0], np.random.default_rng(0))


def test_step_moves_to_late_count_plus_one():
    params = ModelParams(3, 3, PenaltySchedule.constant(10))
    ml = MlewaState.start(3)
    rng = np.random.default_rng(1)
    action, late, ml = mlewa_step(ml, params, State((1, 1, 1)), 0, [2, 2, 2], rng)
    assert ml.current_level == late + 1 and ml.t == 1


def test_regret_examples():
    ledger = RegretLedger()
    ledger.record(1, 1, np.array([0.5, 0.5]), np.array([3.0, 1.0]))
    assert regret_per_level(ledger, 1) == 0
    ledger = RegretLedger()
    for a in (0, 1, 0):
        ledger.record(2, a, np.array([0.5, 0.5]), np.array([4.0, 4.0]))
    assert regret_per_level(ledger, 2) == 0
    assert regret_per_level(ledger, 2, "expected") == 0
    with pytest.raises(ValueError):
        regret_per_level(ledger, 7)


@pytest.mark.parametrize("seed", range(5))
def test_frozen_opponent_regret_bound(seed):
    # opponents replay one random profile; the learner stays at level 1
    rng = np.random.default_rng(seed)
    period, eta, c = 5, 0.1, 61.0
    counts = np.array([1, 2, 1], dtype=np.int64)
    opp = rng.integers(0, period, 3)
    ml = MlewaState.start(period, eta)
    m = 2000
    for _ in range(m):
        a = sample_action(ml.strategy(), rng.random())
        prof = opp.copy()
        prof[0] = a
        costs = kernels.deviation_costs(counts, prof, period, c)[0]
        mlewa_update(ml, a, costs, late_count=0)
    entry = ml.ledger.levels[1]
    bound = ewa_regret_bound(period, eta, m, entry.max_range)
    assert regret_per_level(ml.ledger, 1, "expected") / m <= bound
    assert regret_per_level(ml.ledger, 1) / m <= bound


def high_level_game():
    return ModelParams(3, 2, PenaltySchedule.linear(8, 1), allow_short_period=True)


def test_pref0_bound_example():
    ml = MlewaState.start(2, 0.1, level=51)
    params = high_level_game()
    assert pref0_lower_bound(ml, 51, params) == pytest.approx(0.5)
    ml.visits[51] = 1
    got = pref0_lower_bound(ml, 51, params)
    assert got == pytest.approx(0.5 / (0.5 + 0.5 * math.exp(-5.1)), abs=1e-12)
    assert got == pytest.approx(0.993940, abs=1e-6)


def test_pref0_bound_monotone_in_visits():
    ml = MlewaState.start(2, 0.1, level=20)
    vals = []
    for n in range(6):
        ml.visits[20] = n
        vals.append(pref0_lower_bound(ml, 20, high_level_game()))
    assert vals == sorted(vals)


def test_pref0_bound_not_applicable():
    ml = MlewaState.start(2, 0.1, level=5)
    with pytest.raises(BoundNotApplicable):
        pref0_lower_bound(ml, 5, high_level_game())
    ml = MlewaState.start(2, 0.1, level=20)
    flat = ModelParams(3, 2, PenaltySchedule.constant(100), allow_short_period=True)
    with pytest.raises(BoundNotApplicable):
        pref0_lower_bound(ml, 20, flat)


def test_pref0_holds_along_a_high_level_sequence():
    from dqm.queueing import deviation_cost
    params = high_level_game()
    state = State((30, 1, 1))
    ml = MlewaState.start(2, 0.1, level=30)
    rng = np.random.default_rng(3)
    for _ in range(5):
        assert pref0_holds(ml, 30, params)
        prof = [sample_action(ml.strategy(), rng.random()), int(rng.integers(2)), int(rng.integers(2))]
        exact = [deviation_cost(params, state, prof, 0, b) for b in range(2)]
        record_exact_gaps(ml, 30, exact)
        mlewa_update(ml, prof[0], [float(x) for x in exact], late_count=29)
        assert pref0_exact_holds(ml, 30)
    assert pref0_holds(ml, 30, params)


def test_first_visit_bound_holds_from_uniform_start():
    ml = MlewaState.start(3, 0.1)
    rng = np.random.default_rng(0)
    for _ in range(200):
        mlewa_update(ml, 0, rng.uniform(0, 5, 3), late_count=int(rng.integers(0, 3)))
    ok, log_b = first_visit_bound_check(ml, 3)
    assert ok and math.isfinite(log_b)


def test_snapshot_round_trip_and_resume():
    rng = np.random.default_rng(4)
    ml = MlewaState.start(3, 0.2)
    for _ in range(30):
        mlewa_update(ml, int(rng.integers(3)), rng.uniform(0, 9, 3), int(rng.integers(0, 3)))
    doc = json.loads(json.dumps(ml.to_dict()))
    back = MlewaState.from_dict(doc)
    assert back.to_dict() == ml.to_dict()
    costs = [1.0, 0.0, 2.0]
    mlewa_update(ml, 1, costs, 0)
    mlewa_update(back, 1, costs, 0)
    assert back.to_dict() == ml.to_dict()
