"""Experiment configuration: a flat namespace of dotted keys, read from TOML.

Both ``model.players = 3`` and a ``[model]`` table with ``players = 3`` give
the same flat key. ``grid.<key> = [v1, v2, ...]`` sweeps a key over values.
"""

from __future__ import annotations

import itertools
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Callable

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from dqm.model import MixedProfile, ModelError, ModelParams, PenaltySchedule, as_rational
from dqm.walk import WalkParams, WalkParamsError

EXPERIMENTS = ("game", "walk", "certify", "suite")
POLICIES = ("mlewa", "myopic", "all_zero", "last_slot", "fixed_mixed")
SUITES = ("tie_order", "safe_slot", "large_level")


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        super().__init__("\n".join(problems))
        self.problems = problems


def _int(v):
    if isinstance(v, bool) or not isinstance(v, int):
        raise TypeError("expected an integer")
    return v


def _pos_int(v):
    if _int(v) < 1:
        raise ValueError("must be a positive integer")
    return v


def _bool(v):
    if not isinstance(v, bool):
        raise TypeError("expected true or false")
    return v


def _number(v):
    # ints, floats and rational strings like "1/2"; kept as given for round-trips
    if isinstance(v, bool) or not isinstance(v, (int, float, str)):
        raise TypeError("expected a number or a rational string")
    as_rational(v)
    return v


def _float(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError("expected a number")
    return v


def _str(*choices):
    def check(v):
        if not isinstance(v, str):
            raise TypeError("expected a string")
        if choices and v not in choices:
            raise ValueError(f"must be one of {', '.join(choices)}")
        return v
    return check


def _int_list(v):
    if not isinstance(v, list):
        raise TypeError("expected a list of integers")
    for x in v:
        _int(x)
    return v


def _matrix(v):
    if not isinstance(v, list) or not all(isinstance(row, list) for row in v):
        raise TypeError("expected a list of lists")
    for row in v:
        for x in row:
            _number(x)
    return v


def parse_seeds(v) -> list[int]:
    """Seeds as an int, a list of ints, or an inclusive range string "a..b"."""
    if isinstance(v, str):
        lo, sep, hi = v.partition("..")
        if not sep:
            raise ValueError("seed range must look like 'a..b'")
        try:
            lo, hi = int(lo), int(hi)
        except ValueError:
            raise ValueError("seed range bounds must be integers") from None
        if hi < lo:
            raise ValueError("empty seed range")
        return list(range(lo, hi + 1))
    if isinstance(v, list):
        seeds = _int_list(v)
        if not seeds:
            raise ValueError("no seeds given")
        return list(seeds)
    return [_int(v)]


def _seeds(v):
    seeds = parse_seeds(v)
    if any(s < 0 for s in seeds):
        raise ValueError("seeds must be nonnegative")
    return v


# key -> (checker, default); a default of None means optional / absent
SCHEMA: dict[str, tuple[Callable[[Any], Any], Any]] = {
    "experiment": (_str(*EXPERIMENTS), "game"),
    "model.players": (_int, None),
    "model.period": (_int, None),
    "model.allow_short_period": (_bool, False),
    "model.initial_counts": (_int_list, None),
    "penalty.kind": (_str("constant", "linear", "table"), "constant"),
    "penalty.value": (_number, None),
    "penalty.slope": (_number, None),
    "penalty.intercept": (_number, 0),
    "penalty.table": (_matrix, None),
    "policy.kind": (_str(*POLICIES), "myopic"),
    "policy.eta": (_float, 0.1),
    "policy.grid_step": (_float, 0.1),
    "policy.profile": (_matrix, None),
    "run.horizon": (_pos_int, 1000),
    "run.seeds": (_seeds, None),
    "run.bound": (_int, None),
    "run.max_runs": (_pos_int, 1000),
    "output.dir": (_str(), "out"),
    "output.format": (_str("csv", "json"), "csv"),
    "caps.enumeration": (_pos_int, 10**6),
    "walk.scale": (_float, 5.0),
    "walk.eta": (_float, 0.1),
    "walk.divisor": (_pos_int, 1),
    "walk.d": (_float, 3.0),
    "walk.max_jump": (_pos_int, 3),
    "walk.z0": (_pos_int, 10),
    "walk.x0": (_int, None),
    "walk.p_max": (_float, 0.5),
    "walk.cap": (_pos_int, 10_000),
    "walk.check_to": (_pos_int, 1000),
    "certify.counts": (_int_list, None),
    "suite.name": (_str(*SUITES), "safe_slot"),
    "suite.cases": (_pos_int, 1000),
    "checks.bound": (_bool, False),
    "checks.linear_growth": (_bool, False),
    "checks.pref0": (_bool, False),
    "checks.first_visit_bound": (_bool, False),
    "checks.regret": (_bool, False),
    "checks.non_divergence": (_float, None),
    "checks.walk_bounded": (_bool, False),
    "checks.product_bound": (_bool, False),
    "checks.certificate": (_bool, False),
    "checks.suite": (_bool, False),
}
REQUIRED = ("run.seeds",)
GRID_PREFIX = "grid."


def _flatten(tree: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, name + "."))
        else:
            flat[name] = value
    return flat


def _unflatten(flat: dict) -> dict:
    tree: dict = {}
    for key, value in flat.items():
        *parents, leaf = key.split(".")
        node = tree
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return tree


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration: ``values`` holds every schema key that is set."""

    values: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values.get(key, SCHEMA[key][1])

    def get(self, key, default=None):
        v = self[key]
        return default if v is None else v

    @property
    def experiment(self) -> str:
        return self["experiment"]

    @property
    def seeds(self) -> list[int]:
        return parse_seeds(self["run.seeds"])

    def model_params(self) -> ModelParams:
        return ModelParams(self["model.players"], self["model.period"], penalty_from(self),
                           self["model.allow_short_period"])

    def variants(self) -> list[RunConfig]:
        """One config per grid point, in key-sorted product order."""
        if not self.grid:
            return [self]
        keys = sorted(self.grid)
        out = []
        for combo in itertools.product(*(self.grid[k] for k in keys)):
            vals = dict(self.values)
            vals.update(zip(keys, combo))
            out.append(RunConfig(vals))
        return out

    def with_seed(self, seed: int) -> RunConfig:
        vals = dict(self.values)
        vals["run.seeds"] = [seed]
        return RunConfig(vals)

    def flat(self) -> dict:
        out = dict(self.values)
        out.update({GRID_PREFIX + k: v for k, v in self.grid.items()})
        return out


def penalty_from(cfg: RunConfig) -> PenaltySchedule:
    kind = cfg["penalty.kind"]
    if kind == "constant":
        if cfg["penalty.value"] is None:
            raise ModelError("penalty.value is required for a constant penalty")
        return PenaltySchedule.constant(cfg["penalty.value"])
    if kind == "linear":
        if cfg["penalty.slope"] is None:
            raise ModelError("penalty.slope is required for a linear penalty")
        return PenaltySchedule.linear(cfg["penalty.slope"], cfg["penalty.intercept"])
    if cfg["penalty.table"] is None:
        raise ModelError("penalty.table is required for a table penalty")
    rows = cfg["penalty.table"]
    if any(len(r) != 2 for r in rows):
        raise ModelError("penalty.table rows must be [k_from, value]")
    return PenaltySchedule.from_table([(r[0], r[1]) for r in rows])


def _check_values(flat: dict, problems: list[str], where: str = "") -> dict:
    """Record problems for unknown or ill-typed keys; return the entries that passed."""
    good = {}
    for key, value in flat.items():
        if key not in SCHEMA:
            problems.append(f"{where}unknown key '{key}'")
            continue
        try:
            SCHEMA[key][0](value)
        except (TypeError, ValueError) as exc:
            problems.append(f"{where}{key}: {exc}")
            continue
        good[key] = value
    return good


def _semantic(cfg: RunConfig, problems: list[str], where: str = "") -> None:
    exp = cfg.experiment
    if exp == "walk":
        _check_walk(cfg, problems, where)
        return
    missing = [key for key in ("model.players", "model.period") if cfg[key] is None]
    if missing:
        problems.extend(f"{where}{key} is required" for key in missing)
        return
    bad = False
    try:
        penalty_from(cfg)
    except ModelError as exc:
        problems.append(f"{where}{exc}")
        bad = True
    try:
        ModelParams(cfg["model.players"], cfg["model.period"], PenaltySchedule.constant(0),
                    cfg["model.allow_short_period"])
    except ModelError as exc:
        problems.append(f"{where}{exc}")
        bad = True
    if bad:
        return
    params = cfg.model_params()
    n, period = params.players, params.period
    if exp == "certify":
        counts = cfg["certify.counts"] or [1] * n
        if len(counts) != n or any(c < 0 for c in counts):
            problems.append(f"{where}certify.counts must hold {n} nonnegative integers")
        return
    if exp == "suite":
        return
    init = cfg["model.initial_counts"]
    if init is not None and (len(init) != n or any(c < 0 for c in init)):
        problems.append(f"{where}model.initial_counts must hold {n} nonnegative integers")
    kind = cfg["policy.kind"]
    if kind == "mlewa" and cfg["policy.eta"] <= 0:
        problems.append(f"{where}policy.eta must be positive")
    if kind == "fixed_mixed":
        prof = cfg["policy.profile"]
        if prof is None:
            problems.append(f"{where}policy.profile is required for fixed_mixed")
        else:
            try:
                mixed = MixedProfile(tuple(tuple(as_rational(x) for x in row) for row in prof))
                if len(mixed.probs) != n or any(len(r) != period for r in mixed.probs):
                    problems.append(f"{where}policy.profile must be {n} rows of {period} probabilities")
            except ModelError as exc:
                problems.append(f"{where}policy.profile: {exc}")
    if kind == "myopic":
        # the stage game must be solvable on every state the run can reach
        top = period + n if cfg["run.bound"] is None else max(cfg["run.bound"], period + n)
        for k in range(n, top + 1):
            c = params.penalty_at(k)
            need = k * k * period if k > period else k * k
            if c <= need:
                problems.append(f"{where}myopic policy needs penalty > {need} at k={k}, got {c}")
                break
    if cfg["checks.bound"] and cfg["run.bound"] is None:
        problems.append(f"{where}checks.bound needs run.bound")


def _check_walk(cfg: RunConfig, problems: list[str], where: str) -> None:
    try:
        walk_params(cfg)
    except WalkParamsError as exc:
        problems.append(f"{where}{exc}")
    if cfg["checks.product_bound"] and cfg["walk.check_to"] <= cfg["walk.z0"] + cfg["walk.max_jump"]:
        problems.append(f"{where}walk.check_to must exceed z0 + max_jump")


def walk_params(cfg: RunConfig):
    return WalkParams(
        scale=cfg["walk.scale"], eta=cfg["walk.eta"], divisor=cfg["walk.divisor"], d=cfg["walk.d"],
        max_jump=cfg["walk.max_jump"], z0=cfg["walk.z0"], x0=cfg["walk.x0"], p_max=cfg["walk.p_max"],
    )


def build_config(flat: dict) -> RunConfig:
    """Validate a flat key -> value mapping; raises ConfigError listing every problem."""
    problems: list[str] = []
    values, grid = {}, {}
    for key, value in flat.items():
        if key.startswith(GRID_PREFIX):
            target = key[len(GRID_PREFIX):]
            if target not in SCHEMA or target in ("experiment", "run.seeds"):
                problems.append(f"cannot sweep over '{target}'")
            elif not isinstance(value, list) or not value:
                problems.append(f"{key} must be a non-empty list")
            else:
                grid[target] = value
        else:
            values[key] = value
    values = _check_values(values, problems)
    for key in REQUIRED:
        if key not in values and key not in flat:
            problems.append(f"{key} is required")
    for target in list(grid):
        for i, v in enumerate(grid[target]):
            if not _check_values({target: v}, problems, f"{GRID_PREFIX}{target}[{i}]: "):
                grid.pop(target, None)
    if "run.seeds" not in values:
        raise ConfigError(problems)
    cfg = RunConfig(values, grid)
    variants = cfg.variants()
    for i, variant in enumerate(variants):
        _semantic(variant, problems, f"grid point {i}: " if grid else "")
    total = len(variants) * len(cfg.seeds)
    if total > cfg["run.max_runs"]:
        problems.append(f"{total} runs exceed run.max_runs = {cfg['run.max_runs']}")
    if problems:
        raise ConfigError(problems)
    return cfg


def parse_config(text: str, overrides: dict | None = None) -> RunConfig:
    try:
        tree = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"not valid TOML: {exc}"]) from None
    flat = _flatten(tree)
    flat.update(overrides or {})
    return build_config(flat)


def load_config(path, overrides: dict | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    return parse_config(text, overrides)


def serialize_config(cfg: RunConfig) -> str:
    """TOML text with one table per key prefix; parse_config(serialize_config(c)) == c."""
    return tomli_w.dumps(_unflatten(dict(sorted(cfg.flat().items()))))


def parse_override(item: str) -> tuple[str, Any]:
    """``key=value`` with the value read as TOML, falling back to a bare string."""
    key, sep, raw = item.partition("=")
    if not sep or not key.strip():
        raise ConfigError([f"override '{item}' is not key=value"])
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key.strip(), value


def as_fraction_list(rows) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(tuple(as_rational(x) for x in row) for row in rows)
