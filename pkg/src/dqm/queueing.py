"""One period of the single-server deadline queue: lateness and costs.

Pure-profile quantities are exact ``Fraction``s. Jobs are served one per
unit time from time 0 in order of arrival, ties broken uniformly at random;
a job is late when it has not left the queue by time T.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np

from dqm import kernels
from dqm.model import (
    ArrivalGroupStats,
    MixedProfile,
    ModelParams,
    State,
    check_mixed,
    check_profile,
)

DEFAULT_ENUMERATION_CAP = 10**6


class SupportExplosionError(RuntimeError):
    """Exact enumeration of a mixed profile would exceed the configured cap."""


def _schedule(counts: Sequence[int], actions: Sequence[int], period: int) -> dict[int, tuple[int, int]]:
    hist: dict[int, int] = {}
    for n, a in zip(counts, actions):
        if n:
            hist[a] = hist.get(a, 0) + n
    groups = {}
    free = 0
    for a in sorted(hist):
        m = hist[a]
        start = max(free, a)
        groups[a] = (m, min(m, max(0, period - start)))
        free = start + m
    return groups


def service_schedule(params: ModelParams, state: State, actions: Sequence[int]) -> ArrivalGroupStats:
    """Group sizes and on-time counts per occupied arrival time."""
    actions = check_profile(params, state, actions)
    return ArrivalGroupStats(_schedule(state.counts, actions, params.period))


def late_probability(params: ModelParams, state: State, actions: Sequence[int], player: int) -> Fraction:
    """Probability that a given job of ``player`` misses the deadline."""
    actions = check_profile(params, state, actions)
    if state.counts[player] == 0:
        return Fraction(0)
    m, q = _schedule(state.counts, actions, params.period)[actions[player]]
    return Fraction(m - q, m)


def late_probabilities(params: ModelParams, state: State, actions: Sequence[int]) -> tuple[Fraction, ...]:
    actions = check_profile(params, state, actions)
    groups = _schedule(state.counts, actions, params.period)
    out = []
    for n, a in zip(state.counts, actions):
        if n == 0:
            out.append(Fraction(0))
        else:
            m, q = groups[a]
            out.append(Fraction(m - q, m))
    return tuple(out)


def cost_pure(params: ModelParams, state: State, actions: Sequence[int], player: int) -> Fraction:
    """Waiting cost n_i (T - a_i) plus penalty C_k times expected late jobs."""
    actions = check_profile(params, state, actions)
    n = state.counts[player]
    p = late_probability(params, state, actions, player)
    return n * (params.period - actions[player]) + params.penalty_at(state.total) * n * p


def costs_pure(params: ModelParams, state: State, actions: Sequence[int]) -> tuple[Fraction, ...]:
    actions = check_profile(params, state, actions)
    c = params.penalty_at(state.total)
    lates = late_probabilities(params, state, actions)
    return tuple(
        n * (params.period - a) + c * n * p for n, a, p in zip(state.counts, actions, lates)
    )


def deviation_cost(params: ModelParams, state: State, actions: Sequence[int], player: int, action: int) -> Fraction:
    """Exact cost of ``player`` playing ``action`` against the others' actions."""
    dev = list(actions)
    dev[player] = action
    return cost_pure(params, state, dev, player)


class MonteCarloEstimate(NamedTuple):
    value: float
    stderr: float
    samples: int


def _support_size(mixed: MixedProfile) -> int:
    return math.prod(len(mixed.support(i)) for i in range(len(mixed)))


def iter_support(mixed: MixedProfile, cap: int = DEFAULT_ENUMERATION_CAP):
    """Yield (probability, pure profile) over the product of the supports."""
    size = _support_size(mixed)
    if size > cap:
        raise SupportExplosionError(f"support product has {size} profiles, cap is {cap}")
    supports = [mixed.support(i) for i in range(len(mixed))]
    for actions in itertools.product(*supports):
        w = 1
        for i, a in enumerate(actions):
            w = w * mixed.probs[i][a]
        yield w, actions


def expected_cost_mixed(
    params: ModelParams,
    state: State,
    mixed: MixedProfile,
    player: int,
    mode: str = "exact",
    *,
    cap: int = DEFAULT_ENUMERATION_CAP,
    seed: int | None = None,
    samples: int = 10_000,
):
    """Expected cost of ``player`` under an independent mixed profile.

    ``mode="exact"`` enumerates the support product (a Fraction when all
    probabilities are rational, else a float). ``mode="monte-carlo"`` returns a
    seeded :class:`MonteCarloEstimate`.
    """
    check_mixed(params, state, mixed)
    if mode == "exact":
        total = 0
        for w, actions in iter_support(mixed, cap):
            total += w * cost_pure(params, state, actions, player)
        return total
    if mode == "monte-carlo":
        if seed is None:
            raise ValueError("monte-carlo mode needs an explicit seed")
        rng = np.random.default_rng(seed)
        probs = [np.asarray([float(x) for x in p]) for p in mixed.probs]
        draws = np.stack([rng.choice(params.period, size=samples, p=p / p.sum()) for p in probs], axis=1)
        vals = np.empty(samples)
        c = float(params.penalty_at(state.total))
        n = state.counts[player]
        counts = np.asarray(state.counts, dtype=np.int64)
        for s in range(samples):
            late = kernels.late_probabilities(counts, draws[s], params.period)[player]
            vals[s] = n * (params.period - draws[s, player]) + c * n * late
        return MonteCarloEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)), samples)
    raise ValueError(f"unknown mode {mode!r}")


def sample_late_counts(params: ModelParams, state: State, actions: Sequence[int], rng: np.random.Generator) -> tuple[int, ...]:
    """Draw the late jobs of each player under uniform tie-breaking."""
    actions = check_profile(params, state, actions)
    groups = _schedule(state.counts, actions, params.period)
    late = [0] * len(actions)
    for a, (m, q) in groups.items():
        if q == m:
            continue
        members = [i for i, b in enumerate(actions) if b == a and state.counts[i]]
        if q == 0:
            for i in members:
                late[i] = state.counts[i]
            continue
        owners = np.repeat(members, [state.counts[i] for i in members])
        on_time = rng.choice(m, size=q, replace=False)
        served = np.bincount(owners[on_time], minlength=len(actions))
        for i in members:
            late[i] = state.counts[i] - int(served[i])
    return tuple(late)
