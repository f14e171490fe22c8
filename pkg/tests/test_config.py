import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dqm.cli import preset_names, preset_text
from dqm.config import (
    ConfigError,
    RunConfig,
    build_config,
    parse_config,
    parse_override,
    parse_seeds,
    serialize_config,
)

MINIMAL = """
[model]
players = 3
period = 5

[penalty]
kind = "constant"
value = 321

[policy]
kind = "myopic"

[run]
horizon = 10000
seeds = 1
"""


def problems_of(text, overrides=None):
    with pytest.raises(ConfigError) as info:
        parse_config(text, overrides)
    return info.value.problems


def test_minimal_config_accepted():
    cfg = parse_config(MINIMAL)
    assert cfg["model.players"] == 3 and cfg.seeds == [1]
    assert cfg["output.format"] == "csv" and cfg["policy.eta"] == 0.1
    p = cfg.model_params()
    assert p.period == 5 and p.penalty_at(8) == 321


def test_short_period_rejected_unless_allowed():
    probs = problems_of(MINIMAL, {"model.period": 2})
    assert any("T >= N" in p for p in probs)
    cfg = parse_config(MINIMAL, {"model.period": 2, "model.allow_short_period": True,
                                 "policy.kind": "all_zero"})
    assert cfg.model_params().period == 2


def test_negative_slope_rejected():
    probs = problems_of(MINIMAL, {"penalty.kind": "linear", "penalty.slope": -1, "policy.kind": "all_zero"})
    assert len(probs) == 1 and "slope" in probs[0]


def test_all_problems_reported_together():
    probs = problems_of(MINIMAL, {"model.bogus": 1, "run.horizon": "long", "output.format": "xml",
                                  "penalty.value": 1})
    text = "\n".join(probs)
    assert "unknown key 'model.bogus'" in text
    assert "run.horizon" in text and "output.format" in text
    assert "myopic policy needs penalty" in text
    assert len(probs) == 4


def test_seeds_are_mandatory():
    probs = problems_of(MINIMAL.replace("seeds = 1", ""))
    assert probs == ["run.seeds is required"]


@pytest.mark.parametrize("raw, want", [
    (4, [4]), ([3, 1], [3, 1]), ("0..3", [0, 1, 2, 3]), ("5..5", [5]),
])
def test_parse_seeds(raw, want):
    assert parse_seeds(raw) == want


@pytest.mark.parametrize("raw", ["3..1", "a..b", "7", [], [1.5], True])
def test_bad_seeds(raw):
    with pytest.raises((ValueError, TypeError)):
        parse_seeds(raw)


def test_max_runs_cap():
    probs = problems_of(MINIMAL, {"run.seeds": "0..9", "run.max_runs": 5})
    assert any("exceed run.max_runs" in p for p in probs)


def test_grid_variants_and_bad_grid():
    cfg = parse_config(MINIMAL + "\n[grid.penalty]\nvalue = [800, 900]\n[grid.model]\nperiod = [5, 6]\n")
    vs = cfg.variants()
    assert [(v["model.period"], v["penalty.value"]) for v in vs] == [(5, 800), (5, 900), (6, 800), (6, 900)]
    probs = problems_of(MINIMAL + "\n[grid.run]\nseeds = [1, 2]\n")
    assert any("cannot sweep" in p for p in probs)
    probs = problems_of(MINIMAL + "\n[grid.penalty]\nvalue = [400, 20]\n")
    assert any(p.startswith("grid point 1:") for p in probs)


def test_overrides():
    assert parse_override("run.horizon=50") == ("run.horizon", 50)
    assert parse_override("penalty.value=1/2") == ("penalty.value", "1/2")
    assert parse_override("run.seeds=[1, 2]") == ("run.seeds", [1, 2])
    assert parse_override("model.allow_short_period=true") == ("model.allow_short_period", True)
    with pytest.raises(ConfigError):
        parse_override("nonsense")


def test_fixed_profile_validation():
    base = {"model.players": 3, "model.period": 3, "penalty.value": 5, "run.seeds": 0,
            "policy.kind": "fixed_mixed"}
    with pytest.raises(ConfigError):
        build_config(base)
    with pytest.raises(ConfigError):
        build_config(dict(base, **{"policy.profile": [[1, 0, 0]] * 2}))
    cfg = build_config(dict(base, **{"policy.profile": [["1/2", "1/2", 0]] * 3}))
    assert cfg["policy.profile"][0][0] == "1/2"


def test_walk_config_validation():
    base = {"experiment": "walk", "run.seeds": 0}
    assert build_config(base)["walk.d"] == 3.0
    with pytest.raises(ConfigError):
        build_config(dict(base, **{"walk.d": 1.0}))


@pytest.mark.parametrize("name", preset_names())
def test_presets_parse_and_round_trip(name):
    cfg = parse_config(preset_text(name))
    again = parse_config(serialize_config(cfg))
    assert again == cfg


numbers = st.one_of(st.integers(0, 10**6), st.sampled_from(["1/2", "321", "7/3"]))


@settings(max_examples=60)
@given(
    n=st.integers(3, 5), extra=st.integers(0, 3), c=st.integers(0, 10**4),
    policy=st.sampled_from(["mlewa", "all_zero", "last_slot"]),
    eta=st.floats(0.001, 5, allow_nan=False), horizon=st.integers(1, 10**6),
    seeds=st.one_of(st.integers(0, 99), st.lists(st.integers(0, 99), min_size=1, max_size=5)),
    fmt=st.sampled_from(["csv", "json"]), slope=st.one_of(st.none(), numbers),
)
def test_round_trip_property(n, extra, c, policy, eta, horizon, seeds, fmt, slope):
    flat = {"model.players": n, "model.period": n + extra, "penalty.value": c, "policy.kind": policy,
            "policy.eta": eta, "run.horizon": horizon, "run.seeds": seeds, "output.format": fmt}
    if slope is not None:
        flat.update({"penalty.kind": "linear", "penalty.slope": slope})
    cfg = build_config(flat)
    assert parse_config(serialize_config(cfg)) == cfg


def test_runconfig_defaults():
    cfg = RunConfig({"run.seeds": 3})
    assert cfg["run.horizon"] == 1000 and cfg.get("run.bound", 7) == 7
    assert cfg.with_seed(9).seeds == [9]
