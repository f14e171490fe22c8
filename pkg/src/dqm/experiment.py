"""Run configured experiments, write per-run files and an aggregate table."""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from dqm import dynamics
from dqm.analysis import (
    ThresholdError,
    cce_zero_support_certificate,
    expected_late_positive,
    solve_two_point_equilibrium,
    verify_nash,
)
from dqm.checks import run_suite
from dqm.config import RunConfig, as_fraction_list, build_config, walk_params
from dqm.model import MixedProfile, State
from dqm.walk import product_bound_check, reinforced_walk_run

TRAJECTORY_SCHEMA = "dqm.trajectory/1"
SUMMARY_SCHEMA = "dqm.summary/1"


def make_policy(cfg: RunConfig):
    kind = cfg["policy.kind"]
    if kind == "mlewa":
        return dynamics.Mlewa(cfg["policy.eta"])
    if kind == "myopic":
        return dynamics.MyopicStage(cfg["policy.grid_step"])
    if kind == "all_zero":
        return dynamics.AllZero()
    if kind == "last_slot":
        return dynamics.LastSlot()
    return dynamics.FixedMixed(MixedProfile(as_fraction_list(cfg["policy.profile"])))


def embedded_config(cfg: RunConfig) -> dict:
    """The flat config that reproduces one run; the output directory is left out."""
    vals = {k: v for k, v in sorted(cfg.values.items()) if k != "output.dir"}
    return vals


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n"


def write_trajectory(traj: dynamics.Trajectory, path: Path, fmt: str, config: dict) -> None:
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(traj.columns())
            w.writerows(traj.rows())
        return
    doc = {
        "schema": TRAJECTORY_SCHEMA,
        "metadata": dict(traj.metadata, config=config),
        "columns": traj.columns(),
        "rows": list(traj.rows()),
        "final_counts": list(traj.final_counts),
    }
    path.write_text(json.dumps(doc, sort_keys=True, allow_nan=False) + "\n")


def _game(cfg: RunConfig, seed: int) -> tuple[dict, dict, dynamics.Trajectory]:
    params = cfg.model_params()
    traj = dynamics.run(params, make_policy(cfg), cfg["run.horizon"], seed,
                        initial_counts=cfg["model.initial_counts"], bound=cfg["run.bound"])
    return dict(traj.metadata), traj.summary, traj


def _walk(cfg: RunConfig, seed: int) -> tuple[dict, dict]:
    wp = walk_params(cfg)
    res = reinforced_walk_run(wp, cfg["run.horizon"], seed, cap=cfg["walk.cap"])
    summary = res.to_dict()
    checks = {}
    if cfg["checks.walk_bounded"]:
        checks["walk_bounded"] = not res.escaped and res.sup < cfg["walk.cap"]
    if cfg["checks.product_bound"]:
        xs = range(wp.z0 + wp.max_jump, cfg["walk.check_to"] + 1)
        rows = product_bound_check(wp, xs)
        bad = [r.x for r in rows if not r.holds]
        summary["product_bound"] = {"from": xs.start, "to": xs.stop - 1, "A": wp.constant,
                                    "failing_x": bad[:20], "worst_slack": min(r.log_product + r.bound for r in rows)}
        checks["product_bound"] = not bad
    meta = {"seed": seed, "horizon": cfg["run.horizon"], "walk": {
        "scale": wp.scale, "eta": wp.eta, "divisor": wp.divisor, "d": wp.d, "max_jump": wp.max_jump,
        "z0": wp.z0, "x0": wp.start, "p_max": wp.p_max, "cap": cfg["walk.cap"]}}
    return meta, summary, checks


def certificate(cfg: RunConfig) -> tuple[dict, bool]:
    """Equilibrium evidence for one state: Nash check below the threshold, zero-support CCE above."""
    params = cfg.model_params()
    state = State(tuple(cfg["certify.counts"] or [1] * params.players))
    cap = cfg["caps.enumeration"]
    if state.total > params.period:
        report = cce_zero_support_certificate(params, state, cap=cap)
        out = {"regime": "k>T", "certificate": report.to_dict()}
        ok = report.status == "certified" and report.all_negative and report.top_slot_gap_holds and report.deviation_sum_holds
        return out, ok
    try:
        profile = solve_two_point_equilibrium(params, state, allow_nonunit=any(c != 1 for c in state.counts))
    except ThresholdError as exc:
        return {"regime": "k<=T", "error": str(exc)}, False
    cert = verify_nash(params, state, profile, cap=cap)
    late = expected_late_positive(params, state, profile, cap=cap)
    out = {"regime": "k<=T", "nash": cert.to_dict(), "expected_late": float(late.value),
           "expected_late_positive": bool(late.positive)}
    flags = cert.structure_flags or {}
    ok = cert.is_nash(1e-9) and bool(flags) and all(flags.values()) and late.positive
    return out, ok


@dataclass
class RunResult:
    tag: str
    seed: int
    row: dict
    checks: dict
    files: list[str]


def execute(values: dict, tag: str, seed: int, out_dir: str | None) -> RunResult:
    """One run of one grid point; writes its files when ``out_dir`` is given."""
    cfg = RunConfig(values).with_seed(seed)
    exp = cfg.experiment
    fmt = cfg["output.format"]
    config = embedded_config(cfg)
    traj = None
    if exp == "game":
        meta, summary, traj = _game(cfg, seed)
        checks = _game_checks(cfg, summary)
    elif exp == "walk":
        meta, summary, checks = _walk(cfg, seed)
    elif exp == "certify":
        summary, ok = certificate(cfg)
        meta = {"seed": seed}
        checks = {"certificate": ok} if cfg["checks.certificate"] else {}
    else:
        res = run_suite(cfg["suite.name"], cfg["suite.cases"], seed)
        summary = res.to_dict()
        meta = {"seed": seed}
        checks = {"suite": res.passed} if cfg["checks.suite"] else {}

    files = []
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{tag}_seed{seed}"
        if traj is not None:
            tpath = out / f"{stem}.{fmt}"
            write_trajectory(traj, tpath, fmt, config)
            files.append(str(tpath))
        spath = out / f"{stem}.summary.json"
        spath.write_text(_dump({"schema": SUMMARY_SCHEMA, "tag": tag, "config": config, "metadata": meta,
                                "summary": summary, "checks": checks}))
        files.append(str(spath))
    return RunResult(tag, seed, _row(cfg, tag, seed, summary), checks, files)


def _game_checks(cfg: RunConfig, s: dict) -> dict:
    checks = {}
    if cfg["checks.bound"]:
        checks["bound"] = s["bound_violated"] is False
    if cfg["checks.linear_growth"]:
        checks["linear_growth"] = s["linear_growth"]
    if "pref0_checks" in s:
        if cfg["checks.pref0"]:
            checks["pref0"] = s["pref0_violations"] == 0 and s["pref0_exact_violations"] == 0
        if cfg["checks.first_visit_bound"]:
            checks["first_visit_bound"] = s["first_visit_bound_holds"]
        if cfg["checks.regret"]:
            checks["regret"] = s["regret_within_bound"]
    return checks


def _row(cfg: RunConfig, tag: str, seed: int, summary: dict) -> dict:
    exp = cfg.experiment
    row = {"run": tag, "seed": seed, "experiment": exp}
    if exp == "walk":
        row.update(params=f"B={cfg['walk.scale']} eta={cfg['walk.eta']} d={cfg['walk.d']} "
                          f"M={cfg['walk.max_jump']} z0={cfg['walk.z0']}",
                   sup=summary["sup"], escaped=summary["escaped"])
        return row
    params = cfg.model_params()
    pen = params.penalty.to_dict()
    row["params"] = (f"N={params.players} T={params.period} "
                     + "C=" + ",".join(f"{k}:{v}" for k, v in pen.items() if k != "kind") + f"({pen['kind']})")
    if exp == "game":
        row.update(policy=cfg["policy.kind"], horizon=cfg["run.horizon"], max_k=summary["max_k"],
                   final_k=summary["final_k"], bound_violated=summary["bound_violated"],
                   max_level_regret=summary.get("max_level_regret"),
                   _first_half_max=summary["first_half_max"], _second_half_max=summary["second_half_max"])
    return row


@dataclass
class SweepResult:
    results: list[RunResult]
    sweep_checks: dict
    aggregate: str | None

    @property
    def failed_checks(self) -> list[str]:
        bad = [f"{r.tag} seed {r.seed}: {name}" for r in self.results for name, ok in r.checks.items() if not ok]
        bad += [f"sweep: {name}" for name, ok in self.sweep_checks.items() if not ok]
        return bad


def sweep(cfg: RunConfig, out_dir: str | None = None, jobs: int = 1) -> SweepResult:
    """Every grid point times every seed; results come back in (grid point, seed) order."""
    variants = cfg.variants()
    tasks = []
    for i, variant in enumerate(variants):
        tag = "run" if len(variants) == 1 else f"grid{i:03d}"
        for seed in cfg.seeds:
            tasks.append((variant.values, tag, seed, out_dir))
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(execute, *zip(*tasks)))
    else:
        results = [execute(*t) for t in tasks]

    sweep_checks = {}
    frac = cfg["checks.non_divergence"]
    if frac is not None:
        for i, variant in enumerate(variants):
            tag = "run" if len(variants) == 1 else f"grid{i:03d}"
            n = variant["model.players"]
            mine = [r for r in results if r.tag == tag]
            ok = sum(1 for r in mine if _non_divergent(r, n))
            sweep_checks[f"non_divergence[{tag}]"] = ok >= math.ceil(frac * len(mine) - 1e-9)
    aggregate = None
    if out_dir is not None:
        aggregate = str(Path(out_dir) / "aggregate.csv")
        write_aggregate(results, aggregate)
    return SweepResult(results, sweep_checks, aggregate)


def _non_divergent(r: RunResult, players: int) -> bool:
    return r.row.get("_second_half_max", 0) <= r.row.get("_first_half_max", 0) + players


def write_aggregate(results: list[RunResult], path: str) -> None:
    fields = []
    for r in results:
        for key in r.row:
            if not key.startswith("_") and key not in fields:
                fields.append(key)
    names = sorted({name for r in results for name in r.checks})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields + [f"check_{n}" for n in names])
        for r in results:
            w.writerow([_cell(r.row.get(f)) for f in fields] + [_cell(r.checks.get(n)) for n in names])


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return v


def rerun(summary_path, out_dir: str, jobs: int = 1) -> SweepResult:
    """Reproduce one run from the config embedded in its summary file."""
    doc = json.loads(Path(summary_path).read_text())
    if doc.get("schema") != SUMMARY_SCHEMA:
        raise ValueError(f"{summary_path} is not a run summary")
    cfg = build_config(dict(doc["config"]))
    tag = doc["tag"]
    res = execute(cfg.values, tag, cfg.seeds[0], out_dir)
    return SweepResult([res], {}, None)


def default_jobs() -> int:
    return max(1, (os.cpu_count() or 1))
