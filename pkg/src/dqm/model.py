"""Model parameters, penalty schedules, states and action profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Sequence


class ModelError(ValueError):
    """Invalid model parameters, state or profile."""


def as_rational(x) -> Fraction:
    """Convert ints, Fractions, decimal strings ("0.5", "3/2") or floats to a Fraction.

    Floats go through ``repr`` so that ``0.1`` means one tenth, not its binary
    expansion.
    """
    if isinstance(x, bool):
        raise ModelError(f"expected a number, got {x!r}")
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ModelError(f"non-finite value {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        try:
            return Fraction(x.strip())
        except ValueError as exc:
            raise ModelError(f"not a rational number: {x!r}") from exc
    raise ModelError(f"expected a number, got {type(x).__name__}")


@dataclass(frozen=True)
class PenaltySchedule:
    """Per-late-job penalty as a function of the total job count k.

    ``kind`` is one of ``"constant"`` (``value``), ``"linear"``
    (``slope * k + intercept``) or ``"table"``: a sorted tuple of
    ``(k_from, value)`` steps, where the value of the last step with
    ``k_from <= k`` applies (the first step also covers smaller k).
    """

    kind: str
    value: Fraction = Fraction(0)
    slope: Fraction = Fraction(0)
    intercept: Fraction = Fraction(0)
    table: tuple[tuple[int, Fraction], ...] = ()

    def __post_init__(self):
        if self.kind == "constant":
            if self.value < 0:
                raise ModelError("constant penalty must be nonnegative")
        elif self.kind == "linear":
            if self.slope < 0 or self.intercept < 0:
                raise ModelError("linear penalty needs nonnegative slope and intercept")
        elif self.kind == "table":
            if not self.table:
                raise ModelError("penalty table is empty")
            ks = [k for k, _ in self.table]
            if ks != sorted(set(ks)):
                raise ModelError("penalty table thresholds must be strictly increasing")
            if any(v < 0 for _, v in self.table):
                raise ModelError("penalty table values must be nonnegative")
        else:
            raise ModelError(f"unknown penalty kind {self.kind!r}")

    @classmethod
    def constant(cls, c) -> PenaltySchedule:
        return cls("constant", value=as_rational(c))

    @classmethod
    def linear(cls, slope, intercept=0) -> PenaltySchedule:
        return cls("linear", slope=as_rational(slope), intercept=as_rational(intercept))

    @classmethod
    def from_table(cls, steps: Sequence[tuple[int, object]]) -> PenaltySchedule:
        return cls("table", table=tuple((int(k), as_rational(v)) for k, v in steps))

    def __call__(self, k: int) -> Fraction:
        if self.kind == "constant":
            return self.value
        if self.kind == "linear":
            return self.slope * k + self.intercept
        value = self.table[0][1]
        for k_from, v in self.table:
            if k_from > k:
                break
            value = v
        return value

    def exceeds_linear(self, slope) -> bool:
        """True iff ``C(k) > slope * k`` for every k >= 1."""
        slope = as_rational(slope)
        if self.kind == "linear":
            return self.slope > slope or (self.slope == slope and self.intercept > 0)
        # bounded schedules lose to any positive slope eventually
        if slope > 0:
            return False
        return all(self(k) > 0 for k in self._breakpoints())

    def infimum(self) -> Fraction:
        """Infimum of C(k) over k >= 0."""
        if self.kind == "constant":
            return self.value
        if self.kind == "linear":
            return self.intercept
        return min(v for _, v in self.table)

    def _breakpoints(self):
        if self.kind == "table":
            return [max(k, 1) for k, _ in self.table]
        return [1]

    def to_dict(self) -> dict:
        if self.kind == "constant":
            return {"kind": "constant", "value": str(self.value)}
        if self.kind == "linear":
            return {"kind": "linear", "slope": str(self.slope), "intercept": str(self.intercept)}
        return {"kind": "table", "table": [[k, str(v)] for k, v in self.table]}


@dataclass(frozen=True)
class ModelParams:
    """Number of players N, period length T and the penalty schedule.

    T >= N is required (otherwise no strategy can be stable); pass
    ``allow_short_period=True`` to build the unstable T < N instances.
    """

    players: int
    period: int
    penalty: PenaltySchedule
    allow_short_period: bool = False

    def __post_init__(self):
        if int(self.players) != self.players or self.players < 3:
            raise ModelError(f"need at least 3 players, got {self.players}")
        if int(self.period) != self.period or self.period < 1:
            raise ModelError(f"period must be a positive integer, got {self.period}")
        if self.period < self.players and not self.allow_short_period:
            raise ModelError(
                f"period T={self.period} < players N={self.players} violates the "
                "need T >= N (set allow_short_period to override)"
            )

    def penalty_at(self, k: int) -> Fraction:
        return self.penalty(k)

    @property
    def actions(self) -> range:
        return range(self.period)


@dataclass(frozen=True)
class State:
    """Job counts held by each player at the start of a period."""

    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ModelError(f"negative job count in {counts}")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def unit(cls, players: int) -> State:
        return cls((1,) * players)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __len__(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class ArrivalGroupStats:
    """Per arrival time a: (jobs joining at a, jobs of that group served by T)."""

    groups: dict[int, tuple[int, int]] = field(default_factory=dict)

    @property
    def late_total(self) -> int:
        return sum(m - q for m, q in self.groups.values())


@dataclass(frozen=True)
class MixedProfile:
    """One probability vector over the T actions per player."""

    probs: tuple[tuple, ...]

    def __post_init__(self):
        probs = tuple(tuple(p) for p in self.probs)
        for i, p in enumerate(probs):
            if any(x < 0 for x in p):
                raise ModelError(f"player {i}: negative probability")
            if abs(float(sum(p)) - 1.0) > 1e-12:
                raise ModelError(f"player {i}: probabilities sum to {float(sum(p))!r}")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def pure(cls, actions: Sequence[int], period: int) -> MixedProfile:
        rows = []
        for a in actions:
            row = [Fraction(0)] * period
            row[a] = Fraction(1)
            rows.append(tuple(row))
        return cls(tuple(rows))

    @classmethod
    def symmetric(cls, probs: Sequence, players: int) -> MixedProfile:
        return cls((tuple(probs),) * players)

    def support(self, player: int) -> list[int]:
        return [a for a, p in enumerate(self.probs[player]) if p > 0]

    def __len__(self) -> int:
        return len(self.probs)

    def to_list(self) -> list[list[float]]:
        return [[float(x) for x in p] for p in self.probs]


def check_profile(params: ModelParams, state: State, actions: Sequence[int]) -> tuple[int, ...]:
    actions = tuple(int(a) for a in actions)
    if len(state) != params.players:
        raise ModelError(f"state has {len(state)} players, model has {params.players}")
    if len(actions) != params.players:
        raise ModelError(f"profile has {len(actions)} actions, model has {params.players}")
    for i, a in enumerate(actions):
        if not 0 <= a < params.period:
            raise ModelError(f"player {i}: action {a} outside 0..{params.period - 1}")
    return actions


def check_mixed(params: ModelParams, state: State, mixed: MixedProfile) -> None:
    if len(state) != params.players or len(mixed) != params.players:
        raise ModelError("mixed profile / state dimension mismatch")
    for i, p in enumerate(mixed.probs):
        if len(p) != params.period:
            raise ModelError(f"player {i}: expected {params.period} probabilities, got {len(p)}")
