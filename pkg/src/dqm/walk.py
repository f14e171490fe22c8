"""Reinforced random walk harness.

X moves down by one unless a reinforcement event fires, in which case it
jumps up by 1..M. The chance of that event is r(Z, m), where Z is drawn
uniformly from the integers in [X/d, X] and m counts the visits to Z so far
(the current one included). Upward moves at a site become rarer the more
often the site is revisited, which is what keeps X bounded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from dqm import kernels


class WalkParamsError(ValueError):
    pass


@dataclass(frozen=True)
class WalkParams:
    """Reinforcement r(z, m) = scale * exp(-eta * ceil(z / divisor) * (m + 1)), capped at p_max.

    Passing ``table`` (rows z, columns m) replaces the formula; entries
    outside the table count as zero.
    """

    scale: float = 5.0
    eta: float = 0.1
    divisor: int = 1
    d: float = 3.0
    max_jump: int = 3
    z0: int = 10
    x0: int | None = None
    p_max: float = 0.5
    sum_bound: float | None = None
    table: tuple[tuple[float, ...], ...] | None = None
    scan_limit: int = 10_000

    def __post_init__(self):
        problems = []
        if not self.d > 1:
            problems.append("d must exceed 1")
        if self.max_jump < 1:
            problems.append("max_jump must be at least 1")
        if self.z0 < 1:
            problems.append("z0 must be at least 1")
        if not 0 <= self.p_max < 1:
            problems.append("p_max must lie in [0, 1)")
        if self.divisor < 1:
            problems.append("divisor must be at least 1")
        if self.table is None:
            if self.scale < 0 or self.eta <= 0:
                problems.append("need scale >= 0 and eta > 0")
        else:
            arr = np.asarray(self.table, dtype=np.float64)
            if arr.ndim != 2 or arr.size == 0:
                problems.append("table must be a non-empty 2-d array")
            elif np.any(arr < 0) or np.any(arr > self.p_max) or not np.all(np.isfinite(arr)):
                problems.append("table entries must lie in [0, p_max]")
        if self.x0 is not None and self.x0 < 0:
            problems.append("x0 must be nonnegative")
        if problems:
            raise WalkParamsError("; ".join(problems))
        if self.sum_bound is not None:
            worst = max(z * row_sum(self, z) for z in range(self.z0, self.scan_limit + 1))
            if worst > self.sum_bound:
                raise WalkParamsError(
                    f"sum_m r(z, m) exceeds A/z for some z >= z0 (need A >= {worst:.6g})"
                )

    @property
    def start(self) -> int:
        return self.z0 if self.x0 is None else self.x0

    def table_array(self) -> np.ndarray:
        if self.table is None:
            return np.zeros((1, 1))
        return np.ascontiguousarray(self.table, dtype=np.float64)

    @property
    def constant(self) -> float:
        """A: supplied, or the smallest value with z * sum_m r(z, m) <= A for every z >= 1."""
        if self.sum_bound is not None:
            return self.sum_bound
        return sum_bound_constant(self)


def reinforcement(wp: WalkParams, z: int, m: int) -> float:
    if wp.table is not None:
        tab = wp.table
        return tab[z][m] if z < len(tab) and m < len(tab[z]) else 0.0
    r = wp.scale * math.exp(-wp.eta * ((z + wp.divisor - 1) // wp.divisor) * (m + 1))
    return min(r, wp.p_max)


def _terms(wp: WalkParams, z: int):
    """Yield r(z, m) for m = 0, 1, ... until the remainder is a geometric tail.

    Returns the ratio of that tail through StopIteration's value, or None when
    the row is finite (table mode).
    """
    if wp.table is not None:
        if z < len(wp.table):
            yield from wp.table[z]
        return None
    q = math.exp(-wp.eta * ((z + wp.divisor - 1) // wp.divisor))
    m = 0
    while True:
        r = reinforcement(wp, z, m)
        yield r
        if r < wp.p_max and r < 1e-18:
            return q
        m += 1


def row_sum(wp: WalkParams, z: int) -> float:
    """sum over m >= 0 of the (capped) r(z, m)."""
    total = 0.0
    gen = _terms(wp, z)
    last = 0.0
    try:
        while True:
            last = next(gen)
            total += last
    except StopIteration as stop:
        q = stop.value
    if q is not None:
        total += last * q / (1 - q)
    return total


def row_log_product(wp: WalkParams, z: int) -> float:
    """log of prod over m >= 0 of (1 - r(z, m))."""
    total = 0.0
    gen = _terms(wp, z)
    last = 0.0
    try:
        while True:
            last = next(gen)
            total += math.log1p(-last)
    except StopIteration as stop:
        q = stop.value
    if q is not None:
        # log(1 - r) = -r to double precision once r < 1e-18
        total -= last * q / (1 - q)
    return total


def sum_bound_constant(wp: WalkParams) -> float:
    return max(z * row_sum(wp, z) for z in range(1, wp.scan_limit + 1))


class ProductBound(NamedTuple):
    x: int
    log_product: float
    bound: float
    holds: bool


def product_bound_check(wp: WalkParams, xs: Sequence[int]) -> list[ProductBound]:
    """Compare prod over z in [(x-M)/d, x], m >= 0 of (1 - r(z, m)) with exp(-B(x)).

    B(x) = A / (1 - p_max) * ((d - 1) x + M + d) / (x - M).
    """
    a, d, big_m = wp.constant, wp.d, wp.max_jump
    xs = list(xs)
    if not xs:
        return []
    if min(xs) <= big_m:
        raise WalkParamsError(f"x={min(xs)} must exceed M={big_m}")
    top = max(xs)
    # prefix[z] = sum of row_log_product over 1..z-1
    prefix = np.concatenate(([0.0, 0.0], np.cumsum([row_log_product(wp, z) for z in range(1, top + 1)])))
    out = []
    for x in xs:
        lo = math.ceil((x - big_m) / d)
        logp = float(prefix[x + 1] - prefix[lo])
        b = a / (1 - wp.p_max) * ((d - 1) * x + big_m + d) / (x - big_m)
        out.append(ProductBound(x, logp, b, logp >= -b))
    return out


@dataclass
class WalkResult:
    seed: int
    steps: int
    start: int
    final: int
    sup: int
    escaped: bool
    trace: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "steps": self.steps,
            "start": self.start,
            "final": self.final,
            "sup": self.sup,
            "escaped": self.escaped,
        }


def reinforced_walk_run(wp: WalkParams, horizon: int, seed: int, cap: int = 10_000,
                        record_trace: bool = False, chunk: int = 1 << 16) -> WalkResult:
    """Run the default coupling for ``horizon`` steps, stopping early if X reaches ``cap``."""
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    x = wp.start
    if x >= cap:
        raise ValueError("start must be below cap")
    rng = np.random.default_rng(seed)
    visits = np.zeros(cap + 1, dtype=np.int64)
    table = wp.table_array()
    use_table = wp.table is not None
    trace = np.empty(horizon, dtype=np.int64) if record_trace else None
    sup, done, escaped = x, 0, False
    while done < horizon and not escaped:
        n = min(chunk, horizon - done)
        u = rng.random((3, n))
        buf = trace[done:done + n] if record_trace else np.empty(0, dtype=np.int64)
        x, s, used, escaped = kernels.walk_chunk(
            x, visits, float(wp.d), wp.max_jump, float(wp.scale), float(wp.eta), wp.divisor,
            float(wp.p_max), table, use_table, u[0], u[1], u[2], cap, buf,
        )
        sup = max(sup, s)
        done += used
    if trace is not None:
        trace = trace[:done]
    return WalkResult(seed, done, wp.start, int(x), int(sup), bool(escaped), trace)
