"""Both kernel backends against each other and against the exact module."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dqm import kernels
from dqm.model import ModelParams, PenaltySchedule, State
from dqm.queueing import deviation_cost, late_probabilities

BACKENDS = kernels.available_backends()


@st.composite
def profiles(draw):
    n = draw(st.integers(1, 6))
    period = draw(st.integers(1, 6))
    counts = draw(st.lists(st.integers(0, 40), min_size=n, max_size=n))
    actions = draw(st.lists(st.integers(0, period - 1), min_size=n, max_size=n))
    return np.array(counts, dtype=np.int64), np.array(actions, dtype=np.int64), period


def test_cython_backend_is_built():
    # the editable install compiles it; a silent fallback would hide a broken build
    assert "cython" in BACKENDS


@given(profiles(), st.floats(0, 1e4))
def test_backends_agree_bitwise(prof, penalty):
    counts, actions, period = prof
    outs = [(m.late_probabilities(counts, actions, period), m.deviation_costs(counts, actions, period, penalty))
            for m in BACKENDS.values()]
    for late, dev in outs[1:]:
        assert np.array_equal(late, outs[0][0])
        assert np.array_equal(dev, outs[0][1])


@given(profiles(), st.integers(0, 500))
def test_kernel_matches_exact(prof, penalty):
    counts, actions, period = prof
    n = len(counts)
    if n < 3 or counts.sum() == 0:
        return
    params = ModelParams(n, period, PenaltySchedule.constant(penalty), allow_short_period=True)
    state = State(counts)
    exact = late_probabilities(params, state, actions)
    got = kernels.late_probabilities(counts, actions, period)
    assert np.allclose(got, [float(x) for x in exact], rtol=0, atol=1e-15)
    dev = kernels.deviation_costs(counts, actions, period, float(penalty))
    for i in range(n):
        for b in range(period):
            assert dev[i, b] == pytest.approx(float(deviation_cost(params, state, list(actions), i, b)), rel=1e-12)


def _walk(mod, seed, table=None, steps=5000):
    rng = np.random.default_rng(seed)
    u = rng.random((3, steps))
    visits = np.zeros(1001, dtype=np.int64)
    trace = np.empty(steps, dtype=np.int64)
    tab = np.zeros((1, 1)) if table is None else table
    out = mod.walk_chunk(10, visits, 3.0, 3, 5.0, 0.1, 1, 0.5, tab, table is not None,
                         u[0], u[1], u[2], 1000, trace)
    return out, visits, trace


@pytest.mark.parametrize("seed", range(5))
def test_walk_backends_agree(seed):
    table = np.random.default_rng(seed).uniform(0, 0.5, size=(15, 6))
    for tab in (None, table):
        results = [_walk(m, seed, tab) for m in BACKENDS.values()]
        for out, visits, trace in results[1:]:
            assert out == results[0][0]
            assert np.array_equal(visits, results[0][1])
            assert np.array_equal(trace, results[0][2])


def test_walk_stops_at_cap():
    steps = 100
    u = np.zeros((3, steps))  # always move up by one
    visits = np.zeros(21, dtype=np.int64)
    for mod in BACKENDS.values():
        x, sup, done, escaped = mod.walk_chunk(15, visits.copy(), 3.0, 3, 5.0, 0.1, 1, 0.5, np.zeros((1, 1)), False,
                                               u[0], u[1], u[2], 20, np.empty(0, dtype=np.int64))
        assert (x, sup, done, escaped) == (20, 20, 5, True)
