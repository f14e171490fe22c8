"""Command line front end.

    dqm run CONFIG [key=value ...] [-o DIR] [-f csv|json] [-j JOBS] [--no-assert]
    dqm presets [NAME]
    dqm certify -n 3 -T 2 -C 19 --allow-short-period
    dqm rerun SUMMARY.json -o DIR

CONFIG is a TOML file or the name of a shipped preset. Exit status: 0 on
success, 1 if an enabled check fails, 2 for configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

from dqm import kernels
from dqm.config import ConfigError, build_config, load_config, parse_config, parse_override
from dqm.experiment import certificate, rerun, sweep

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def preset_names() -> list[str]:
    root = resources.files("dqm") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def preset_text(name: str) -> str:
    path = resources.files("dqm") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError([f"no config file or preset named '{name}'"])
    return path.read_text()


def _load(source: str, overrides: dict):
    if Path(source).is_file():
        return load_config(source, overrides)
    return parse_config(preset_text(source), overrides)


def cmd_run(args) -> int:
    try:
        overrides = dict(parse_override(item) for item in args.overrides)
        if args.out:
            overrides["output.dir"] = args.out
        if args.format:
            overrides["output.format"] = args.format
        cfg = _load(args.config, overrides)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = cfg["output.dir"]
    res = sweep(cfg, out_dir, jobs=args.jobs)
    for r in res.results:
        line = " ".join(f"{k}={v}" for k, v in r.row.items() if not k.startswith("_"))
        marks = " ".join(f"{k}:{'ok' if v else 'FAIL'}" for k, v in r.checks.items())
        print(f"{line} {marks}".rstrip())
    for name, ok in res.sweep_checks.items():
        print(f"{name}: {'ok' if ok else 'FAIL'}")
    print(f"wrote {res.aggregate} (kernels: {kernels.BACKEND})")
    failed = res.failed_checks
    if failed and not args.no_assert:
        for f in failed:
            print(f"check failed: {f}", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        try:
            print(preset_text(args.name), end="")
        except ConfigError as exc:
            print(exc, file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    for name in preset_names():
        first = preset_text(name).splitlines()[0].lstrip("# ")
        print(f"{name:20s} {first}")
    return EXIT_OK


def cmd_certify(args) -> int:
    flat = {
        "experiment": "certify",
        "model.players": args.players,
        "model.period": args.period,
        "model.allow_short_period": args.allow_short_period,
        "penalty.kind": "constant",
        "penalty.value": args.penalty,
        "run.seeds": [0],
    }
    if args.counts:
        flat["certify.counts"] = args.counts
    try:
        cfg = build_config(flat)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    out, ok = certificate(cfg)
    print(json.dumps(out, indent=1, sort_keys=True))
    return EXIT_OK if ok else EXIT_CHECK


def cmd_rerun(args) -> int:
    try:
        res = rerun(args.summary, args.out)
    except (ConfigError, ValueError, OSError, KeyError) as exc:
        print(f"cannot rerun: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in res.results[0].files:
        print(f"wrote {path}")
    return EXIT_CHECK if res.failed_checks else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dqm", description="Deadline queue game experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    for name in ("run", "sweep"):
        p = sub.add_parser(name, help="run a config or preset over its seeds and grid")
        p.add_argument("config", help="TOML file or preset name")
        p.add_argument("overrides", nargs="*", metavar="key=value", help="config overrides")
        p.add_argument("-o", "--out", help="output directory (output.dir)")
        p.add_argument("-f", "--format", choices=("csv", "json"), help="trajectory format")
        p.add_argument("-j", "--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument("--no-assert", action="store_true", help="report failed checks but exit 0")
        p.set_defaults(func=cmd_run)

    p = sub.add_parser("presets", help="list presets or print one")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("certify", help="equilibrium certificate for one state")
    p.add_argument("-n", "--players", type=int, required=True)
    p.add_argument("-T", "--period", type=int, required=True)
    p.add_argument("-C", "--penalty", required=True, help="constant penalty, e.g. 19 or 1/2")
    p.add_argument("--counts", type=int, nargs="+", help="job counts (default: one each)")
    p.add_argument("--allow-short-period", action="store_true")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("rerun", help="reproduce a run from its summary file")
    p.add_argument("summary")
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # overrides may come after options; argparse leaves those behind
    stray = [x for x in extra if x.startswith("-") or "=" not in x]
    if stray or (extra and not hasattr(args, "overrides")):
        parser.error(f"unrecognized arguments: {' '.join(stray or extra)}")
    if extra:
        args.overrides = list(args.overrides) + extra
    if getattr(args, "jobs", 1) < 1:
        print("config error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
