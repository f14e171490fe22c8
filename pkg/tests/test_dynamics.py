from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqm.analysis import ThresholdError, verify_nash
from dqm.dynamics import (
    AllZero,
    FixedMixed,
    LastSlot,
    Mlewa,
    MyopicStage,
    PolicyError,
    myopic_policy,
    run,
    stability_report,
    step,
)
from dqm.model import MixedProfile, ModelParams, PenaltySchedule, State

from oracles import served_count


def game(n, period, c):
    return ModelParams(n, period, PenaltySchedule.constant(c))


def test_step_all_zero_clears_the_queue():
    res = step(game(3, 5, 10), State((1, 2, 1)), [0, 0, 0], np.random.default_rng(0))
    assert res.late == (0, 0, 0) and res.state.counts == (1, 1, 1)


def test_step_all_last_slot():
    res = step(game(3, 5, 10), State((1, 1, 1)), [4, 4, 4], np.random.default_rng(0))
    assert sum(res.late) == 2 and res.state.total == 5
    assert np.allclose(res.costs, 1 + 10 * 2 / 3)


@settings(max_examples=100)
@given(st.data())
def test_step_conserves_jobs(data):
    n = data.draw(st.integers(3, 4))
    period = data.draw(st.integers(n, 6))
    counts = tuple(data.draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)))
    actions = data.draw(st.lists(st.integers(0, period - 1), min_size=n, max_size=n))
    seed = data.draw(st.integers(0, 2**32))
    res = step(game(n, period, 5), State(counts), actions, np.random.default_rng(seed))
    assert res.state.total - sum(counts) == n - served_count(counts, actions, period)
    assert all(0 <= late <= c for late, c in zip(res.late, counts))


def test_myopic_above_period_plays_zero():
    p = game(3, 5, 321)
    prof, how = myopic_policy(p, State((2, 2, 2)))
    assert how == "all_zero" and prof.probs == MixedProfile.pure((0, 0, 0), 5).probs


def test_myopic_at_period_plays_two_point():
    p = ModelParams(3, 3, PenaltySchedule.constant(10))
    prof, how = myopic_policy(p, State.unit(3))
    assert how == "two_point"
    assert prof.support(0) == [0, 1]
    assert verify_nash(p, State.unit(3), prof).max_deviation_gain <= 1e-9


def test_myopic_threshold_errors():
    with pytest.raises(ThresholdError):
        myopic_policy(game(3, 5, 9), State.unit(3))
    with pytest.raises(ThresholdError):
        myopic_policy(game(3, 5, 6 * 6 * 5), State((2, 2, 2)))


def test_policy_error_carries_period():
    # C = 100 covers k = 3 but not k = 6 > T, so the first overloaded state fails
    p = game(3, 5, 100)
    with pytest.raises(PolicyError) as info:
        run(p, MyopicStage(), 50, 0, initial_counts=(2, 2, 2))
    assert info.value.period == 0


def test_myopic_stability_short():
    p = game(3, 5, 321)
    for seed in range(3):
        traj = run(p, MyopicStage(), 2000, seed, bound=8)
        assert traj.summary["max_k"] <= 8 and traj.summary["bound_violated"] is False


def test_myopic_alternation():
    p = game(3, 5, 321)
    traj = run(p, MyopicStage(), 3000, 7)
    k = np.append(traj.k, traj.final_k)
    over = k[:-1] > 5
    assert np.all(traj.actions[over] == 0)
    assert np.all(k[1:][over] <= k[:-1][over])


def test_last_slot_grows_linearly():
    p = ModelParams(3, 5, PenaltySchedule.constant("1/2"))
    traj = run(p, LastSlot(), 200, 0)
    assert np.array_equal(traj.k, 3 + 2 * np.arange(200))
    assert traj.final_k == 3 + 2 * 200 and traj.summary["linear_growth"]


def test_all_zero_keeps_unit_state():
    traj = run(game(3, 5, 1), AllZero(), 100, 0)
    assert np.all(traj.k == 3) and traj.final_k == 3


def test_fixed_mixed_runs_and_records_policy():
    prof = MixedProfile.symmetric([Fraction(1, 2), Fraction(1, 2), 0, 0, 0], 3)
    traj = run(game(3, 5, 50), FixedMixed(prof), 100, 2)
    assert set(np.unique(traj.actions)) <= {0, 1}
    assert traj.metadata["policy"]["kind"] == "fixed_mixed"


@pytest.mark.parametrize("policy", [MyopicStage(), Mlewa(0.1), LastSlot()])
def test_spillover_law(policy):
    p = ModelParams(3, 5, PenaltySchedule.linear(20, 321))
    traj = run(p, policy, 300, 11)
    nxt = np.vstack([traj.counts[1:], traj.final_counts])
    assert np.array_equal(nxt, traj.late + 1)
    assert np.array_equal(traj.k, traj.counts.sum(axis=1))


@pytest.mark.parametrize("policy", [MyopicStage(), Mlewa(0.1)])
def test_runs_are_deterministic(policy):
    p = ModelParams(3, 5, PenaltySchedule.linear(20, 321))
    a, b = run(p, policy, 500, 5), run(p, policy, 500, 5)
    assert list(a.rows()) == list(b.rows())
    assert a.summary == b.summary and a.metadata == b.metadata
    c = run(p, policy, 500, 6)
    assert list(a.rows()) != list(c.rows())


def test_mlewa_summary_fields():
    p = ModelParams(3, 5, PenaltySchedule.linear(20, 1))
    traj = run(p, Mlewa(0.1), 500, 0)
    s = traj.summary
    assert s["pref0_applicable"] and s["regret_within_bound"] and s["first_visit_bound_holds"]
    assert len(s["learners"]) == 3
    for pl in s["learners"]:
        assert str(pl["most_visited_level"]) in pl["levels"]


def test_mlewa_pref0_checks_fire_at_high_levels():
    p = ModelParams(3, 5, PenaltySchedule.linear(20, 1))
    traj = run(p, Mlewa(0.1), 300, 0, initial_counts=(60, 1, 1))
    s = traj.summary
    assert s["pref0_checks"] > 0
    assert s["pref0_violations"] == 0 and s["pref0_exact_violations"] == 0


def test_stability_report_trend():
    traj = run(ModelParams(3, 5, PenaltySchedule.constant("1/2")), LastSlot(), 10, 0)
    rep = stability_report(traj, bound=10)
    assert rep["max_k"] == 23 and rep["argmax_t"] == 10 and rep["bound_violated"]
    assert rep["first_half_max"] == 3 + 2 * 4 and rep["second_half_max"] == 23


def test_trajectory_columns():
    traj = run(game(3, 5, 1), AllZero(), 3, 0)
    cols = traj.columns()
    assert cols[:2] == ["t", "k"] and cols[-1] == "cost_3" and len(cols) == 2 + 4 * 3
    assert all(len(r) == len(cols) for r in traj.rows())


def test_run_rejects_bad_input():
    with pytest.raises(ValueError):
        run(game(3, 5, 1), AllZero(), 0, 0)
    with pytest.raises(ValueError):
        run(game(3, 5, 1), AllZero(), 5, 0, initial_counts=(1, 1))
