"""Exponential weights and the multi-level variant indexed by the job count.

Weights are kept as log-weights. A multi-level learner runs one EWA copy per
level (its current job count), updates only the copy of the level it is
at, and seeds a newly reached level with the weights of the level it came
from.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from dqm import kernels
from dqm.queueing import cost_pure, sample_late_counts

_TINY = np.finfo(np.float64).tiny
DEFAULT_ETA = 0.1


class BoundNotApplicable(ValueError):
    """The preconditions of a lower bound are not met."""


@dataclass
class EwaState:
    log_weights: np.ndarray
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        self.log_weights = np.array(self.log_weights, dtype=np.float64)
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not np.all(np.isfinite(self.log_weights)):
            raise ValueError("log-weights must be finite")

    @classmethod
    def uniform(cls, n_actions: int, eta: float = DEFAULT_ETA) -> EwaState:
        return cls(np.zeros(n_actions), eta)

    def copy(self) -> EwaState:
        return EwaState(self.log_weights.copy(), self.eta)


def ewa_strategy(ewa: EwaState) -> np.ndarray:
    """Normalized exponentiated log-weights.

    Entries that would underflow are floored at the smallest normal double so
    every action keeps positive probability.
    """
    w = np.exp(ewa.log_weights - ewa.log_weights.max())
    p = w / w.sum()
    return np.maximum(p, _TINY)


def ewa_update(ewa: EwaState, costs: Sequence[float]) -> EwaState:
    """Full-information update: every action's log-weight drops by eta * cost."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.shape != ewa.log_weights.shape:
        raise ValueError(f"expected {ewa.log_weights.shape[0]} costs, got {costs.shape}")
    if not np.all(np.isfinite(costs)):
        raise ValueError("costs must be finite")
    return EwaState(ewa.log_weights - ewa.eta * costs, ewa.eta)


def log_odds_against_zero(log_weights: np.ndarray) -> float:
    """log(1/x(0) - 1), i.e. logsumexp over b != 0 of L(b) - L(0)."""
    d = log_weights[1:] - log_weights[0]
    top = d.max()
    return float(top + math.log(np.exp(d - top).sum()))


def ewa_regret_bound(n_actions: int, eta: float, visits: int, cost_range: float) -> float:
    """Average-regret guarantee of EWA after ``visits`` rounds with per-round cost spread ``cost_range``."""
    return math.log(n_actions) / (eta * visits) + eta * cost_range**2 / 8


@dataclass
class LevelLedger:
    visits: int = 0
    realized: float = 0.0
    expected: float = 0.0
    counterfactual: np.ndarray | None = None
    max_range: float = 0.0

    def record(self, action: int, strategy: np.ndarray, costs: np.ndarray) -> None:
        if self.counterfactual is None:
            self.counterfactual = np.zeros_like(costs)
        self.visits += 1
        self.realized += float(costs[action])
        self.expected += float(strategy @ costs)
        self.counterfactual += costs
        self.max_range = max(self.max_range, float(costs.max() - costs.min()))


@dataclass
class RegretLedger:
    """Per-level realized, expected and counterfactual cumulative costs."""

    levels: dict[int, LevelLedger] = field(default_factory=dict)

    def record(self, level: int, action: int, strategy: np.ndarray, costs: np.ndarray) -> None:
        self.levels.setdefault(level, LevelLedger()).record(action, strategy, costs)

    def most_visited(self) -> int:
        return max(self.levels, key=lambda c: (self.levels[c].visits, -c))


def regret_per_level(ledger: RegretLedger, level: int, kind: str = "realized") -> float:
    """Cumulative regret over the periods spent at ``level``.

    ``max_b sum_t (cost_t(played) - cost_t(b))``; with ``kind="expected"`` the
    played cost is replaced by the strategy-weighted cost of each round.
    """
    entry = ledger.levels.get(level)
    if entry is None or entry.visits == 0:
        raise ValueError(f"level {level} was never visited")
    if kind not in ("realized", "expected"):
        raise ValueError(f"unknown regret kind {kind!r}")
    own = entry.realized if kind == "realized" else entry.expected
    return float(own - entry.counterfactual.min())


@dataclass
class MlewaState:
    """Memory of one multi-level learner."""

    period: int
    eta: float = DEFAULT_ETA
    current_level: int = 1
    levels: dict[int, EwaState] = field(default_factory=dict)
    first_visit: dict[int, int] = field(default_factory=dict)
    first_log_weights: dict[int, np.ndarray] = field(default_factory=dict)
    visits: dict[int, int] = field(default_factory=dict)
    ledger: RegretLedger = field(default_factory=RegretLedger)
    t: int = 0
    # exact cumulative cost(b) - cost(0) per level, only tracked on demand
    exact_gaps: dict[int, list[Fraction]] = field(default_factory=dict)

    @classmethod
    def start(cls, period: int, eta: float = DEFAULT_ETA, level: int = 1) -> MlewaState:
        ml = cls(period=period, eta=eta, current_level=level)
        ml._open_level(level, EwaState.uniform(period, eta))
        return ml

    def _open_level(self, level: int, ewa: EwaState) -> None:
        self.levels[level] = ewa
        self.first_visit[level] = self.t
        self.first_log_weights[level] = ewa.log_weights.copy()
        self.visits[level] = 0

    def strategy(self) -> np.ndarray:
        return ewa_strategy(self.levels[self.current_level])

    def first_strategy_zero(self, level: int) -> float:
        return 1.0 / (1.0 + math.exp(log_odds_against_zero(self.first_log_weights[level])))

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "eta": self.eta,
            "t": self.t,
            "current_level": self.current_level,
            "levels": {
                str(c): {
                    "log_weights": e.log_weights.tolist(),
                    "first_visit": self.first_visit[c],
                    "first_log_weights": self.first_log_weights[c].tolist(),
                    "visits": self.visits[c],
                }
                for c, e in sorted(self.levels.items())
            },
            "ledger": {
                str(c): {
                    "visits": e.visits,
                    "realized": e.realized,
                    "expected": e.expected,
                    "counterfactual": e.counterfactual.tolist(),
                    "max_range": e.max_range,
                }
                for c, e in sorted(self.ledger.levels.items())
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> MlewaState:
        ml = cls(period=data["period"], eta=data["eta"], current_level=data["current_level"], t=data["t"])
        for key, lv in data["levels"].items():
            c = int(key)
            ml.levels[c] = EwaState(np.array(lv["log_weights"]), ml.eta)
            ml.first_visit[c] = lv["first_visit"]
            ml.first_log_weights[c] = np.array(lv["first_log_weights"])
            ml.visits[c] = lv["visits"]
        for key, e in data["ledger"].items():
            ml.ledger.levels[int(key)] = LevelLedger(
                e["visits"], e["realized"], e["expected"], np.array(e["counterfactual"]), e["max_range"]
            )
        return ml


def sample_action(strategy: np.ndarray, u: float) -> int:
    """Inverse-CDF draw from ``strategy`` given a uniform ``u`` in [0, 1)."""
    acc = 0.0
    last = len(strategy) - 1
    for a in range(last):
        acc += strategy[a]
        if u < acc:
            return a
    return last


def mlewa_act(ml: MlewaState, rng: np.random.Generator) -> int:
    return sample_action(ml.strategy(), rng.random())


def mlewa_update(ml: MlewaState, action: int, costs: Sequence[float], late_count: int) -> MlewaState:
    """Update the current level's weights, then move to level late_count + 1.

    A level reached for the first time starts from a copy of the (just
    updated) weights of the level being left.
    """
    costs = np.asarray(costs, dtype=np.float64)
    level = ml.current_level
    ewa = ml.levels[level]
    ml.ledger.record(level, action, ewa_strategy(ewa), costs)
    ewa.log_weights -= ewa.eta * costs
    ml.visits[level] += 1
    ml.t += 1
    nxt = int(late_count) + 1
    if nxt not in ml.levels:
        ml._open_level(nxt, ewa.copy())
    ml.current_level = nxt
    return ml


def mlewa_step(ml: MlewaState, params, state, player: int, opponent_actions: Sequence[int],
               rng: np.random.Generator) -> tuple[int, int, MlewaState]:
    """Play one period against fixed opponent actions.

    Returns (own action, own late count, updated state). ``opponent_actions``
    is a full profile whose ``player`` entry is ignored.
    """
    if state.counts[player] != ml.current_level:
        raise ValueError(
            f"player {player} holds {state.counts[player]} jobs but the learner is at level {ml.current_level}"
        )
    action = mlewa_act(ml, rng)
    profile = list(opponent_actions)
    profile[player] = action
    late = sample_late_counts(params, state, profile, rng)[player]
    costs = kernels.deviation_costs(
        np.asarray(state.counts, dtype=np.int64), np.asarray(profile, dtype=np.int64),
        params.period, float(params.penalty_at(state.total)),
    )[player]
    mlewa_update(ml, action, costs, late)
    return action, late, ml


def _check_pref0(ml: MlewaState, level: int, params) -> None:
    threshold = 2 * params.period**2
    if level <= threshold:
        raise BoundNotApplicable(f"level {level} <= 2T^2 = {threshold}")
    if not params.penalty.exceeds_linear(4 * params.period):
        raise BoundNotApplicable("penalty schedule does not satisfy C_k > 4kT for all k")
    if level not in ml.levels:
        raise BoundNotApplicable(f"level {level} never reached")


def pref0_lower_bound(ml: MlewaState, level: int, params) -> float:
    """Lower bound on the probability of action 0 at ``level`` given its visit count.

    x(0) >= x_phi(0) / (x_phi(0) + (1 - x_phi(0)) exp(-eta * c * n)), with x_phi
    the strategy when the level was first reached and n its visit count.
    """
    _check_pref0(ml, level, params)
    r = log_odds_against_zero(ml.first_log_weights[level]) - ml.eta * level * ml.visits[level]
    return 1.0 / (1.0 + math.exp(r)) if r < 700 else 0.0


def pref0_holds(ml: MlewaState, level: int, params, slack: float = 1e-9) -> bool:
    """Compare the learner's x(0) at ``level`` with the bound, in log-odds form."""
    _check_pref0(ml, level, params)
    now = log_odds_against_zero(ml.levels[level].log_weights)
    bound = log_odds_against_zero(ml.first_log_weights[level]) - ml.eta * level * ml.visits[level]
    return now <= bound + slack * max(1.0, abs(bound))


def record_exact_gaps(ml: MlewaState, level: int, exact_costs: Sequence[Fraction]) -> None:
    gaps = ml.exact_gaps.setdefault(level, [Fraction(0)] * (len(exact_costs) - 1))
    for b in range(1, len(exact_costs)):
        gaps[b - 1] += exact_costs[b] - exact_costs[0]


def pref0_exact_holds(ml: MlewaState, level: int) -> bool:
    """Exact termwise form: every action's cost gap to 0 accumulated at ``level`` exceeds c * n.

    Requires the gaps to have been recorded on every visit since the level
    was first reached (see :func:`record_exact_gaps`).
    """
    n = ml.visits[level]
    if n == 0:
        return True
    return all(g > level * n for g in ml.exact_gaps.get(level, []))


def first_visit_bound_check(ml: MlewaState, period: int) -> tuple[bool, float]:
    """Check (1/x_phi_c(0) - 1) e^{eta c} <= B for every reached level c.

    B = Z e^{eta 2T^2} with Z the largest 1/x_phi_c(0) - 1 over reached levels
    c <= 2T^2. Returns (holds, log B).
    """
    cut = 2 * period**2
    low = [log_odds_against_zero(ml.first_log_weights[c]) for c in ml.levels if c <= cut]
    if not low:
        return True, math.inf
    log_b = max(low) + ml.eta * cut
    ok = all(
        log_odds_against_zero(ml.first_log_weights[c]) + ml.eta * c <= log_b + 1e-9 * max(1.0, abs(log_b))
        for c in ml.levels
    )
    return ok, log_b


def large_level_violations(params, state, player: int) -> list[tuple[int, ...]]:
    """Pure profiles a with a_i != 0 where cost_i(0, a_-i) < cost_i(a) - n_i fails.

    Exact arithmetic. Needs n_i > 2T^2 and C_k > 4kT at the state's k.
    """
    n_i, period, k = state.counts[player], params.period, state.total
    if n_i <= 2 * period**2:
        raise BoundNotApplicable(f"n_i={n_i} <= 2T^2 = {2 * period**2}")
    if params.penalty_at(k) <= 4 * k * period:
        raise BoundNotApplicable(f"penalty at k={k} does not exceed 4kT = {4 * k * period}")
    bad = []
    for prof in itertools.product(range(period), repeat=params.players):
        if prof[player] == 0:
            continue
        zero = list(prof)
        zero[player] = 0
        if not cost_pure(params, state, zero, player) < cost_pure(params, state, prof, player) - n_i:
            bad.append(prof)
    return bad
