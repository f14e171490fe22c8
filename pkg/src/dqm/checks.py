"""Self-check suites runnable from the command line.

Each suite compares library output against a direct recomputation: tie
orders enumerated one by one, the closed-form cost of the safe action, and
the dominance of action 0 for a player holding many jobs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from dqm.learning import large_level_violations
from dqm.model import ModelParams, PenaltySchedule, State
from dqm.queueing import cost_pure, late_probability


@dataclass
class SuiteResult:
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.cases > 0 and not self.failures

    def fail(self, msg: str) -> None:
        if len(self.failures) < 20:
            self.failures.append(msg)
        else:
            self.failures[-1] = "... more failures"

    def to_dict(self) -> dict:
        return {"name": self.name, "cases": self.cases, "passed": self.passed, "failures": self.failures}


def late_by_enumeration(counts, actions, period) -> list[Fraction]:
    """Late fraction of each player's jobs averaged over every order of tied jobs."""
    groups: dict[int, list[int]] = {}
    for i, (n, a) in enumerate(zip(counts, actions)):
        groups.setdefault(a, []).extend([i] * n)
    times = sorted(groups)
    orders = [list(set(itertools.permutations(groups[a]))) for a in times]
    late = [Fraction(0)] * len(counts)
    total = 0
    for combo in itertools.product(*orders):
        t_free = 0
        tally = [0] * len(counts)
        for a, order in zip(times, combo):
            for owner in order:
                t_free = max(t_free, a) + 1
                if t_free > period:
                    tally[owner] += 1
        total += 1
        for i, x in enumerate(tally):
            late[i] += x
    return [late[i] / (total * n) if n else Fraction(0) for i, n in enumerate(counts)]


def _job_holders(max_k: int):
    """Counts of the players holding jobs: every composition of 1..max_k into positive parts."""
    for active in range(1, max_k + 1):
        for counts in itertools.product(range(1, max_k + 1), repeat=active):
            if sum(counts) <= max_k:
                yield counts


def tie_order_suite(max_k: int = 6, max_period: int = 5) -> SuiteResult:
    """Every job configuration with k <= max_k and every profile, for T = 1..max_period.

    Players without jobs do not touch the queue, so each configuration is run
    once with them left out (padded with idle players up to three).
    """
    res = SuiteResult("tie_order")
    for held in _job_holders(max_k):
        n = max(3, len(held))
        counts = held + (0,) * (n - len(held))
        state = State(counts)
        for period in range(1, max_period + 1):
            params = ModelParams(n, period, PenaltySchedule.constant(0), allow_short_period=True)
            for sub in itertools.product(range(period), repeat=len(held)):
                actions = list(sub) + [0] * (n - len(held))
                want = late_by_enumeration(counts, actions, period)
                for i in range(len(held)):
                    res.cases += 1
                    got = late_probability(params, state, actions, i)
                    if got != want[i]:
                        res.fail(f"T={period} counts={counts} a={actions} i={i}: {got} != {want[i]}")
    return res


def safe_slot_suite(cases: int = 1000, seed: int = 0, periods=(3, 4, 5, 6)) -> SuiteResult:
    """Random states with k < T: playing T-k costs n_i k, anything earlier costs more."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("safe_slot")
    for _ in range(cases):
        period = int(rng.choice(periods))
        n = int(rng.integers(3, period + 1))
        k = int(rng.integers(1, period))
        counts = rng.multinomial(k - 1, np.ones(n) / n)
        player = int(rng.integers(n))
        counts[player] += 1
        c = Fraction(int(rng.integers(0, 200)), int(rng.integers(1, 5)))
        params = ModelParams(n, period, PenaltySchedule.constant(c))
        state = State(tuple(int(x) for x in counts))
        actions = [int(x) for x in rng.integers(0, period, size=n)]
        res.cases += 1
        safe = list(actions)
        safe[player] = period - k
        base = cost_pure(params, state, safe, player)
        if base != state.counts[player] * k:
            res.fail(f"{state.counts} {safe} C={c}: cost {base} != {state.counts[player] * k}")
        for b in range(period - k):
            dev = list(actions)
            dev[player] = b
            if not cost_pure(params, state, dev, player) > base:
                res.fail(f"{state.counts} {dev} C={c}: action {b} does not cost more")
    return res


def large_level_suite(cases: int = 1000, seed: int = 0, periods=(2, 3)) -> SuiteResult:
    """Random states where one player holds more than 2T^2 + 1 jobs and C_k = 4kT + 1."""
    rng = np.random.default_rng(seed)
    res = SuiteResult("large_level")
    for _ in range(cases):
        period = int(rng.choice(periods))
        n = int(rng.integers(3, 5))
        counts = [int(x) for x in rng.integers(0, 6, size=n)]
        player = int(rng.integers(n))
        counts[player] = int(rng.integers(2 * period**2 + 2, 2 * period**2 + 30))
        params = ModelParams(n, period, PenaltySchedule.linear(4 * period, 1), allow_short_period=True)
        res.cases += 1
        bad = large_level_violations(params, State(counts), player)
        if bad:
            res.fail(f"T={period} counts={counts} i={player}: fails at {bad[0]}")
    return res


SUITES = {"tie_order": tie_order_suite, "safe_slot": safe_slot_suite, "large_level": large_level_suite}


def run_suite(name: str, cases: int, seed: int) -> SuiteResult:
    if name == "tie_order":
        return tie_order_suite()
    return SUITES[name](cases, seed)
