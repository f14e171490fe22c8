"""Time the compiled and pure-Python kernels on identical inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--walk-steps 200000]

Each kernel is run on the same pre-drawn data under both backends; the
outputs are compared before any timing is reported.
"""

import argparse
import timeit

import numpy as np

from dqm.kernels import available_backends


def cost_case(seed, players=3, period=5, games=2000):
    rng = np.random.default_rng(seed)
    counts = rng.integers(0, 8, size=(games, players)).astype(np.int64)
    actions = rng.integers(0, period, size=(games, players)).astype(np.int64)
    return counts, actions, period


def run_costs(mod, case):
    counts, actions, period = case
    return [mod.deviation_costs(c, a, period, 161.0) for c, a in zip(counts, actions)]


def walk_case(seed, steps):
    u = np.random.default_rng(seed).random((3, steps))
    return u


def run_walk(mod, u, cap=10_000):
    visits = np.zeros(cap + 1, dtype=np.int64)
    return mod.walk_chunk(10, visits, 3.0, 3, 5.0, 0.1, 1, 0.5, np.zeros((1, 1)), False,
                          u[0], u[1], u[2], cap, np.empty(0, dtype=np.int64))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--walk-steps", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the pure-Python timings are shown")
    case = cost_case(args.seed)
    u = walk_case(args.seed, args.walk_steps)

    outputs = {name: (run_costs(mod, case), run_walk(mod, u)) for name, mod in backends.items()}
    ref_costs, ref_walk = outputs["python"]
    for name, (costs, walk) in outputs.items():
        same = all(np.array_equal(a, b) for a, b in zip(costs, ref_costs)) and walk == ref_walk
        if not same:
            raise SystemExit(f"{name} output differs from the pure-Python kernels")

    rows = []
    for name, mod in backends.items():
        t_cost = min(timeit.repeat(lambda: run_costs(mod, case), number=1, repeat=args.repeat))
        t_walk = min(timeit.repeat(lambda: run_walk(mod, u), number=1, repeat=args.repeat))
        rows.append((name, t_cost, t_walk))

    print(f"{'backend':8s} {'deviation_costs x2000':>22s} {f'walk {args.walk_steps} steps':>20s}")
    for name, t_cost, t_walk in rows:
        print(f"{name:8s} {t_cost * 1e3:19.2f} ms {t_walk * 1e3:17.2f} ms")
    if len(rows) == 2:
        (_, pc, pw), (_, cc, cw) = rows
        print(f"speed-up: deviation_costs {pc / cc:.1f}x, walk {pw / cw:.1f}x")


if __name__ == "__main__":
    main()
