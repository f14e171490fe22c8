"""One-shot game solvers and equilibrium certificates.

Nash checks work on independent mixed profiles; the coarse correlated
equilibrium certificate enumerates pure profiles in exact arithmetic.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from dqm.model import MixedProfile, ModelError, ModelParams, State, check_mixed
from dqm.queueing import (
    DEFAULT_ENUMERATION_CAP,
    SupportExplosionError,
    _schedule,
    costs_pure,
    deviation_cost,
    iter_support,
    late_probabilities,
)

FLAG_TOL = 1e-12
EQUAL_MIX_TOL = 1e-9
SOCIAL_COST_TOL = 1e-9


class ThresholdError(ValueError):
    """The penalty is too small for the requested construction."""


def _is_exact(x) -> bool:
    return isinstance(x, (int, Fraction))


def deviation_costs_mixed(params: ModelParams, state: State, mixed: MixedProfile, player: int,
                          cap: int = DEFAULT_ENUMERATION_CAP) -> list:
    """Expected cost of each pure action of ``player`` against the others' mixed actions."""
    check_mixed(params, state, mixed)
    others = list(mixed.probs)
    # the player's own row is irrelevant; pin it to a point mass
    others[player] = tuple(1 if a == 0 else 0 for a in range(params.period))
    fixed = MixedProfile(tuple(others))
    out = [0] * params.period
    for w, actions in iter_support(fixed, cap):
        for b in range(params.period):
            out[b] += w * deviation_cost(params, state, actions, player, b)
    return out


def best_response(params: ModelParams, state: State, opponents: MixedProfile, player: int,
                  tol: float | None = None, cap: int = DEFAULT_ENUMERATION_CAP) -> set[int]:
    """All minimizers of the player's expected cost; ties are kept.

    With exact (rational) inputs ties are exact; otherwise actions within
    ``tol`` (default 1e-12, relative to max(1, |min|)) of the minimum count.
    """
    costs = deviation_costs_mixed(params, state, opponents, player, cap)
    best = min(costs)
    if tol is None:
        tol = 0 if all(_is_exact(c) for c in costs) else 1e-12 * max(1.0, abs(float(best)))
    return {b for b, c in enumerate(costs) if c - best <= tol}


@dataclass
class NashCertificate:
    profile: MixedProfile
    max_deviation_gain: float
    gains: list[float]
    social_cost: float
    structure_flags: dict[str, bool] | None
    designated_player: int | None
    above_threshold: bool

    def is_nash(self, eps: float) -> bool:
        return self.max_deviation_gain <= eps

    def to_dict(self) -> dict:
        return {
            "profile": self.profile.to_list(),
            "max_deviation_gain": float(self.max_deviation_gain),
            "gains": [float(g) for g in self.gains],
            "social_cost": float(self.social_cost),
            "flags": self.structure_flags,
            "designated_player": self.designated_player,
            "above_threshold": self.above_threshold,
        }


def verify_nash(params: ModelParams, state: State, profile: MixedProfile, eps: float = 1e-9,
                cap: int = DEFAULT_ENUMERATION_CAP) -> NashCertificate:
    """Deviation gains of every player plus the k <= T structure checks (i)-(v).

    The flags are only filled in when k <= T; ``above_threshold`` records
    whether C_k > k^2, under which every Nash equilibrium has all flags set.
    """
    check_mixed(params, state, profile)
    n_players, period, k = params.players, params.period, state.total
    gains, costs = [], []
    for i in range(n_players):
        dev = deviation_costs_mixed(params, state, profile, i, cap)
        expected = sum(p * c for p, c in zip(profile.probs[i], dev))
        costs.append(expected)
        gains.append(expected - min(dev))
    social = sum(costs)
    flags = None
    designated = None
    if k <= period:
        flags, designated = _structure_flags(profile, k, period, social)
    c = params.penalty_at(k)
    return NashCertificate(
        profile=profile,
        max_deviation_gain=max(gains),
        gains=gains,
        social_cost=social,
        structure_flags=flags,
        designated_player=designated,
        above_threshold=bool(k <= period and c > k * k),
    )


def _structure_flags(profile: MixedProfile, k: int, period: int, social) -> tuple[dict[str, bool], int | None]:
    base = period - k
    x = [[float(p) for p in row] for row in profile.probs]
    n = len(x)
    flag_i = all(row[a] <= FLAG_TOL for row in x for a in range(base))
    candidates = [
        i for i in range(n)
        if x[i][base] > FLAG_TOL and all(x[i][a] <= FLAG_TOL for a in range(base + 2, period))
    ]
    designated = None
    for i in candidates:
        if base + 1 < period and all(x[j][base + 1] > FLAG_TOL for j in range(n) if j != i):
            designated = i
            break
    flag_iii = designated is not None
    if designated is None and candidates:
        designated = candidates[0]
    flag_iv = designated is not None and all(
        max(abs(p - q) for p, q in zip(x[j], x[designated])) <= EQUAL_MIX_TOL
        for j in range(n) if x[j][base] > FLAG_TOL
    )
    sc = float(social)
    flag_v = k * k - k + 1 - SOCIAL_COST_TOL <= sc <= k * k + SOCIAL_COST_TOL
    flags = {"i": flag_i, "ii": bool(candidates), "iii": flag_iii, "iv": flag_iv, "v": flag_v}
    return flags, designated


def solve_two_point_equilibrium(params: ModelParams, state: State, allow_nonunit: bool = False) -> MixedProfile:
    """Symmetric equilibrium mixing on T-k and T-k+1.

    Every player puts (k / C_k) ** (1 / (N - 1)) on T-k+1, which makes each
    player indifferent between the two actions. Defined for unit jobs; with
    ``allow_nonunit`` the same candidate is returned for any counts, and the
    caller must confirm it with :func:`verify_nash`.
    """
    n, period, k = params.players, params.period, state.total
    if len(state) != n:
        raise ModelError("state / model dimension mismatch")
    if not allow_nonunit and any(c != 1 for c in state.counts):
        raise ModelError(f"two-point equilibrium needs unit jobs, got {state.counts}")
    if not 2 <= k <= period:
        raise ModelError(f"two-point equilibrium needs 2 <= k <= T, got k={k}, T={period}")
    c = params.penalty_at(k)
    if c <= k * k:
        raise ThresholdError(f"penalty {c} <= k^2 = {k * k}: indifference has no solution in [0, 1]")
    x1 = (k / float(c)) ** (1.0 / (n - 1))
    row = [0.0] * period
    row[period - k] = 1.0 - x1
    row[period - k + 1] = x1
    return MixedProfile.symmetric(row, n)


@dataclass
class CceDeviationReport:
    penalty: Fraction
    total: int
    margins: dict[tuple[int, ...], Fraction]
    deviation_sums: dict[tuple[int, ...], Fraction]
    top_slot_gap_holds: bool
    deviation_sum_holds: bool
    crude_bound: Fraction
    crude_bound_holds: bool
    above_threshold: bool
    failures: list[str] = field(default_factory=list)

    @property
    def all_negative(self) -> bool:
        return all(m < 0 for m in self.margins.values())

    @property
    def status(self) -> str:
        return "certified" if self.all_negative else "inconclusive"

    def to_dict(self) -> dict:
        return {
            "penalty": str(self.penalty),
            "total": self.total,
            "status": self.status,
            "margins": [
                {"profile": list(a), "margin": str(m), "margin_float": float(m),
                 "deviation_sum": str(self.deviation_sums[a])}
                for a, m in sorted(self.margins.items())
            ],
            "flags": {
                "all_negative": self.all_negative,
                "top_slot_gap_holds": self.top_slot_gap_holds,
                "deviation_sum_holds": self.deviation_sum_holds,
                "crude_bound_holds": self.crude_bound_holds,
                "above_threshold": self.above_threshold,
            },
            "crude_bound": str(self.crude_bound),
            "failures": self.failures,
        }


def cce_zero_support_certificate(params: ModelParams, state: State,
                                 cap: int = DEFAULT_ENUMERATION_CAP) -> CceDeviationReport:
    """Exact per-profile deviation margins for the 'everyone plays 0' CCE argument.

    For each pure profile a != 0 the margin is
    sum_i n_i [(late_i(0, a_-i) - late_i(a)) C_k + a_i]; if every margin is
    negative no coarse correlated equilibrium can put mass on a.
    """
    n, period, k = params.players, params.period, state.total
    if len(state) != n:
        raise ModelError("state / model dimension mismatch")
    if k <= period:
        raise ModelError(f"certificate needs k > T, got k={k}, T={period}")
    if period**n - 1 > cap:
        raise SupportExplosionError(f"{period**n - 1} profiles exceed cap {cap}")
    c = params.penalty_at(k)
    counts = state.counts
    margins, sums, failures = {}, {}, []
    gap_ok = sum_ok = crude_ok = True
    crude = -c / k + period * k
    for a in itertools.product(range(period), repeat=n):
        if not any(a):
            continue
        late = late_probabilities(params, state, a)
        late0 = []
        for i in range(n):
            dev = list(a)
            dev[i] = 0
            late0.append(late_probabilities(params, state, dev)[i])
        s = sum(counts[i] * (late0[i] - late[i]) for i in range(n))
        margin = s * c + sum(counts[i] * a[i] for i in range(n))
        margins[a], sums[a] = margin, s
        if s > Fraction(-1, k):
            sum_ok = False
            failures.append(f"deviation sum {a}: sum {s} > -1/{k}")
        top = max(a)
        groups = _schedule(counts, a, period)
        for j in range(n):
            if a[j] == top and counts[j]:
                m = groups[top][0]
                if late[j] - late0[j] < Fraction(1, m * k):
                    gap_ok = False
                    failures.append(f"top-slot gap {a}: player {j} gap {late[j] - late0[j]} < 1/({m}*{k})")
        if margin > crude:
            crude_ok = False
            failures.append(f"crude bound {a}: margin {margin} > {crude}")
    return CceDeviationReport(
        penalty=c,
        total=k,
        margins=margins,
        deviation_sums=sums,
        top_slot_gap_holds=gap_ok,
        deviation_sum_holds=sum_ok,
        crude_bound=crude,
        crude_bound_holds=crude_ok,
        above_threshold=c > k * k * period,
        failures=failures,
    )


class LateExpectation(NamedTuple):
    value: float
    positive: bool


def expected_late_jobs(params: ModelParams, state: State, profile: MixedProfile,
                       cap: int = DEFAULT_ENUMERATION_CAP):
    check_mixed(params, state, profile)
    total = 0
    for w, actions in iter_support(profile, cap):
        late = sum(m - q for m, q in _schedule(state.counts, actions, params.period).values())
        total += w * late
    return total


def expected_late_positive(params: ModelParams, state: State, profile: MixedProfile,
                           cap: int = DEFAULT_ENUMERATION_CAP) -> LateExpectation:
    """Expected number of late jobs and whether it is strictly positive."""
    value = expected_late_jobs(params, state, profile, cap)
    return LateExpectation(value, value > 0)


class GridEquilibrium(NamedTuple):
    profile: tuple[tuple[float, ...], ...]
    gain: float


def _simplex_grid(steps: int, dim: int) -> np.ndarray:
    pts = [
        c for c in itertools.product(range(steps + 1), repeat=dim - 1) if sum(c) <= steps
    ]
    grid = np.array([list(c) + [steps - sum(c)] for c in pts], dtype=np.float64) / steps
    return grid


def default_grid_eps(params: ModelParams, state: State, step: float) -> float:
    """Half a grid step times the largest spread of any player's pure costs."""
    tensor = _cost_tensor(params, state)
    spread = max(float(t.max() - t.min()) for t in tensor)
    return 0.5 * step * spread


def _cost_tensor(params: ModelParams, state: State) -> list[np.ndarray]:
    n, period = params.players, params.period
    tensors = [np.empty((period,) * n) for _ in range(n)]
    for a in itertools.product(range(period), repeat=n):
        for i, c in enumerate(costs_pure(params, state, a)):
            tensors[i][a] = float(c)
    return tensors


def brute_force_nash(params: ModelParams, state: State, step: float, eps: float | None = None,
                     cap: int = 10**7, chunk: int = 200_000) -> list[GridEquilibrium]:
    """Grid search for approximate Nash equilibria (a test oracle for small games).

    Scans every profile on the product of simplex grids with the given step
    and returns those whose largest deviation gain is at most ``eps``
    (default :func:`default_grid_eps`), sorted lexicographically.
    """
    n, period = params.players, params.period
    if n > 4 or period > 4:
        raise ModelError("grid oracle is limited to N <= 4 and T <= 4")
    if step < 0.02:
        raise ModelError("grid step must be at least 0.02")
    steps = round(1 / step)
    if abs(steps * step - 1) > 1e-9:
        raise ModelError(f"grid step {step} must divide 1")
    grid = _simplex_grid(steps, period)
    g = len(grid)
    if g**n > cap:
        raise SupportExplosionError(f"{g}^{n} = {g**n} grid profiles exceed cap {cap}")
    if eps is None:
        eps = default_grid_eps(params, state, step)
    tensors = _cost_tensor(params, state)
    letters = "ABCD"[:n]
    found = []
    for start in range(0, g**n, chunk):
        idx = np.arange(start, min(start + chunk, g**n))
        coords = np.unravel_index(idx, (g,) * n)
        probs = [grid[c] for c in coords]
        worst = np.zeros(len(idx))
        for i in range(n):
            others = [j for j in range(n) if j != i]
            expr = letters + "," + ",".join("z" + letters[j] for j in others) + "->z" + letters[i]
            dev = np.einsum(expr, tensors[i], *(probs[j] for j in others), optimize=True)
            expected = np.einsum("zb,zb->z", probs[i], dev)
            worst = np.maximum(worst, expected - dev.min(axis=1))
        for h in np.nonzero(worst <= eps)[0]:
            profile = tuple(tuple(float(v) for v in probs[j][h]) for j in range(n))
            found.append(GridEquilibrium(profile, float(worst[h])))
    found.sort(key=lambda e: e.profile)
    return found


def pure_nash_equilibria(params: ModelParams, state: State) -> list[tuple[int, ...]]:
    """All pure Nash equilibria by exhaustive enumeration (exact)."""
    out = []
    for a in itertools.product(range(params.period), repeat=params.players):
        costs = costs_pure(params, state, a)
        if all(costs[i] <= deviation_cost(params, state, a, i, b)
               for i in range(params.players) for b in range(params.period)):
            out.append(a)
    return out


def grid_size(period: int, step: float) -> int:
    steps = round(1 / step)
    return math.comb(steps + period - 1, period - 1)
