"""Repeated play with spillover: late jobs return to their owner next period."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np

from dqm import kernels
from dqm.analysis import (
    ThresholdError,
    brute_force_nash,
    solve_two_point_equilibrium,
    verify_nash,
)
from dqm.learning import (
    DEFAULT_ETA,
    MlewaState,
    ewa_regret_bound,
    first_visit_bound_check,
    mlewa_update,
    pref0_exact_holds,
    pref0_holds,
    record_exact_gaps,
    regret_per_level,
    sample_action,
)
from dqm.model import MixedProfile, ModelError, ModelParams, State
from dqm.queueing import SupportExplosionError, deviation_cost, sample_late_counts

NASH_EPS = 1e-9


class NoEquilibriumFound(RuntimeError):
    pass


class PolicyError(RuntimeError):
    """A policy failed at a given period."""

    def __init__(self, period: int, cause: Exception):
        super().__init__(f"period {period}: {cause}")
        self.period = period
        self.cause = cause


@dataclass(frozen=True)
class Mlewa:
    eta: float = DEFAULT_ETA
    name = "mlewa"

    def to_dict(self):
        return {"kind": self.name, "eta": self.eta}


@dataclass(frozen=True)
class MyopicStage:
    grid_step: float = 0.1
    name = "myopic"

    def to_dict(self):
        return {"kind": self.name, "grid_step": self.grid_step}


@dataclass(frozen=True)
class AllZero:
    name = "all_zero"

    def to_dict(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class LastSlot:
    name = "last_slot"

    def to_dict(self):
        return {"kind": self.name}


@dataclass(frozen=True)
class FixedMixed:
    profile: MixedProfile
    name = "fixed_mixed"

    def to_dict(self):
        return {"kind": self.name, "profile": self.profile.to_list()}


PolicyKind = Union[Mlewa, MyopicStage, AllZero, LastSlot, FixedMixed]


class StepResult(NamedTuple):
    state: State
    late: tuple[int, ...]
    costs: np.ndarray


def _realized_costs(counts: np.ndarray, actions: np.ndarray, period: int, penalty: float) -> np.ndarray:
    late = kernels.late_probabilities(counts, actions, period)
    return counts * (period - actions) + penalty * counts * late


def step(params: ModelParams, state: State, actions: Sequence[int], rng: np.random.Generator) -> StepResult:
    """Serve one period, draw who is late, and roll late jobs over with one new job each."""
    late = sample_late_counts(params, state, actions, rng)
    counts = np.asarray(state.counts, dtype=np.int64)
    costs = _realized_costs(counts, np.asarray(actions, dtype=np.int64), params.period,
                            float(params.penalty_at(state.total)))
    return StepResult(State(tuple(x + 1 for x in late)), late, costs)


def myopic_policy(params: ModelParams, state: State, grid_step: float = 0.1) -> tuple[MixedProfile, str]:
    """A stage equilibrium for the current state and how it was selected.

    k > T: everyone plays 0 (needs C_k > k^2 T). k <= T (needs C_k > k^2):
    the symmetric profile on T-k, T-k+1, accepted only if it verifies as a
    Nash equilibrium; otherwise the lexicographically smallest grid-oracle
    equilibrium.
    """
    n, period, k = params.players, params.period, state.total
    c = params.penalty_at(k)
    if k > period:
        if c <= k * k * period:
            raise ThresholdError(f"k={k} > T: penalty {c} must exceed k^2 T = {k * k * period}")
        return MixedProfile.pure((0,) * n, period), "all_zero"
    if c <= k * k:
        raise ThresholdError(f"k={k} <= T: penalty {c} must exceed k^2 = {k * k}")
    unit = all(x == 1 for x in state.counts)
    candidate = solve_two_point_equilibrium(params, state, allow_nonunit=not unit)
    if verify_nash(params, state, candidate).max_deviation_gain <= NASH_EPS:
        return candidate, "two_point" if unit else "two_point_nonunit"
    if n <= 4 and period <= 4:
        try:
            found = brute_force_nash(params, state, grid_step)
        except SupportExplosionError as exc:
            raise NoEquilibriumFound(str(exc)) from exc
        if found:
            return MixedProfile(found[0].profile), "grid"
    raise NoEquilibriumFound(f"no equilibrium found for state {state.counts}")


@dataclass
class Trajectory:
    params: ModelParams
    policy: PolicyKind
    seed: int
    k: np.ndarray
    counts: np.ndarray
    actions: np.ndarray
    late: np.ndarray
    costs: np.ndarray
    final_counts: tuple[int, ...]
    metadata: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    learners: list[MlewaState] | None = None

    @property
    def horizon(self) -> int:
        return len(self.k)

    @property
    def final_k(self) -> int:
        return sum(self.final_counts)

    def columns(self) -> list[str]:
        n = self.params.players
        cols = ["t", "k"]
        for prefix in ("n", "a", "late", "cost"):
            cols += [f"{prefix}_{i + 1}" for i in range(n)]
        return cols

    def rows(self):
        for t in range(self.horizon):
            yield (
                [t, int(self.k[t])]
                + [int(x) for x in self.counts[t]]
                + [int(x) for x in self.actions[t]]
                + [int(x) for x in self.late[t]]
                + [float(x) for x in self.costs[t]]
            )


def stability_report(traj: Trajectory, bound: int | None = None) -> dict:
    """Max k_t, bound violations and a first-half / second-half trend statistic."""
    k = np.append(traj.k, traj.final_k)
    half = max(1, len(k) // 2)
    first, second = int(k[:half].max()), int(k[half:].max()) if len(k) > half else int(k[:half].max())
    report = {
        "max_k": int(k.max()),
        "argmax_t": int(k.argmax()),
        "final_k": int(k[-1]),
        "first_half_max": first,
        "second_half_max": second,
        "trend": second - first,
        "bound": bound,
        "bound_violated": None if bound is None else bool(k.max() > bound),
    }
    return report


def run(params: ModelParams, policy: PolicyKind, horizon: int, seed: int,
        initial_counts: Sequence[int] | None = None, bound: int | None = None) -> Trajectory:
    """Simulate ``horizon`` periods; deterministic in (params, policy, horizon, seed, initial_counts)."""
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n, period = params.players, params.period
    counts = np.asarray(initial_counts if initial_counts is not None else [1] * n, dtype=np.int64)
    if counts.shape != (n,) or np.any(counts < 0):
        raise ModelError(f"bad initial counts {counts.tolist()}")
    rng = np.random.default_rng(seed)
    ks = np.empty(horizon, dtype=np.int64)
    rec_counts = np.empty((horizon, n), dtype=np.int64)
    rec_actions = np.empty((horizon, n), dtype=np.int64)
    rec_late = np.empty((horizon, n), dtype=np.int64)
    rec_costs = np.empty((horizon, n), dtype=np.float64)

    learners = None
    diag = {}
    myopic_cache: dict[tuple[int, ...], tuple[MixedProfile, str]] = {}
    selections: dict[str, int] = {}
    fixed_cdf = None
    if isinstance(policy, Mlewa):
        learners = [MlewaState.start(period, policy.eta, level=int(c)) for c in counts]
        pref0_ok = params.penalty.exceeds_linear(4 * period)
        high = 2 * period**2
        diag = {"pref0_checks": 0, "pref0_violations": 0, "pref0_exact_violations": 0,
                "pref0_applicable": pref0_ok}
    elif isinstance(policy, FixedMixed):
        if len(policy.profile) != n:
            raise ModelError("fixed profile has the wrong number of players")
        fixed_cdf = [np.array([float(x) for x in row]) for row in policy.profile.probs]

    for t in range(horizon):
        state = State(tuple(int(c) for c in counts))
        k = state.total
        c = float(params.penalty_at(k))
        try:
            if learners is not None:
                actions = []
                for i, ml in enumerate(learners):
                    if pref0_ok and ml.current_level > high:
                        diag["pref0_checks"] += 1
                        if not pref0_holds(ml, ml.current_level, params):
                            diag["pref0_violations"] += 1
                    actions.append(sample_action(ml.strategy(), rng.random()))
            elif isinstance(policy, MyopicStage):
                if state.counts not in myopic_cache:
                    myopic_cache[state.counts] = myopic_policy(params, state, policy.grid_step)
                profile, how = myopic_cache[state.counts]
                selections[how] = selections.get(how, 0) + 1
                actions = [sample_action(np.array([float(x) for x in row]), rng.random())
                           for row in profile.probs]
            elif isinstance(policy, AllZero):
                actions = [0] * n
            elif isinstance(policy, LastSlot):
                actions = [period - 1] * n
            elif isinstance(policy, FixedMixed):
                actions = [sample_action(row, rng.random()) for row in fixed_cdf]
            else:
                raise TypeError(f"unknown policy {policy!r}")
        except (ThresholdError, NoEquilibriumFound, ModelError) as exc:
            raise PolicyError(t, exc) from exc

        act = np.asarray(actions, dtype=np.int64)
        late = sample_late_counts(params, state, actions, rng)
        if learners is not None:
            matrix = kernels.deviation_costs(counts, act, period, c)
            costs = matrix[np.arange(n), act]
            for i, ml in enumerate(learners):
                level = ml.current_level
                if pref0_ok and level > high:
                    exact = [deviation_cost(params, state, actions, i, b) for b in range(period)]
                    record_exact_gaps(ml, level, exact)
                mlewa_update(ml, actions[i], matrix[i], late[i])
                if pref0_ok and level > high and not pref0_exact_holds(ml, level):
                    diag["pref0_exact_violations"] += 1
        else:
            costs = _realized_costs(counts, act, period, c)

        ks[t] = k
        rec_counts[t] = counts
        rec_actions[t] = act
        rec_late[t] = late
        rec_costs[t] = costs
        counts = np.asarray(late, dtype=np.int64) + 1

    traj = Trajectory(
        params=params, policy=policy, seed=seed, k=ks, counts=rec_counts, actions=rec_actions,
        late=rec_late, costs=rec_costs, final_counts=tuple(int(x) for x in counts), learners=learners,
    )
    traj.metadata = {
        "seed": seed,
        "horizon": horizon,
        "players": n,
        "period": period,
        "penalty": params.penalty.to_dict(),
        "allow_short_period": params.allow_short_period,
        "policy": policy.to_dict(),
        "initial_counts": [int(x) for x in rec_counts[0]],
    }
    if selections:
        traj.metadata["myopic_selection"] = dict(sorted(selections.items()))
    summary = stability_report(traj, bound)
    full = np.append(ks, traj.final_k)
    summary["linear_growth"] = bool(np.array_equal(full, full[0] + (n - 1) * np.arange(horizon + 1)))
    if learners is not None:
        summary.update(_learning_summary(learners, period))
        summary.update(diag)
    traj.summary = summary
    return traj


def _learning_summary(learners: list[MlewaState], period: int) -> dict:
    per_player = []
    worst = 0.0
    init_ok = regret_ok = True
    for ml in learners:
        levels = {}
        for c, entry in sorted(ml.ledger.levels.items()):
            r = regret_per_level(ml.ledger, c)
            levels[str(c)] = {
                "visits": entry.visits,
                "regret": r,
                "regret_expected": regret_per_level(ml.ledger, c, "expected"),
                "max_range": entry.max_range,
                "avg_bound": ewa_regret_bound(period, ml.eta, entry.visits, entry.max_range),
            }
            worst = max(worst, r)
        ok, _ = first_visit_bound_check(ml, period)
        init_ok = init_ok and ok
        top = ml.ledger.most_visited() if ml.ledger.levels else None
        entry = {"most_visited_level": top, "max_level": max(ml.levels), "levels": levels}
        if top is not None:
            info = levels[str(top)]
            entry["avg_regret"] = info["regret"] / info["visits"]
            entry["regret_within_bound"] = entry["avg_regret"] <= info["avg_bound"]
            regret_ok = regret_ok and entry["regret_within_bound"]
        per_player.append(entry)
    return {"max_level_regret": worst, "regret_within_bound": regret_ok,
            "first_visit_bound_holds": init_ok, "learners": per_player}
