"""Reference computations written independently of the package.

They trade speed for obviousness: the queue is simulated job by job over
every tie order, and equilibrium quantities come from closed forms.
"""

import itertools
from fractions import Fraction
from math import factorial


def exit_times(arrivals):
    """Exit time of each job when served in the given order, one per unit time from 0."""
    out, free = [], 0
    for a in arrivals:
        free = max(free, a) + 1
        out.append(free)
    return out


def late_by_permutations(counts, actions, period):
    """Per-player late probability of one job, averaged over all tie orders.

    Jobs are labelled by owner. Every group of simultaneous arrivals is
    permuted in all m! ways (labels repeat, which keeps the weights right).
    """
    jobs_at = {}
    for owner, (n, a) in enumerate(zip(counts, actions)):
        jobs_at.setdefault(a, []).extend([owner] * n)
    slots = sorted(jobs_at)
    late = [0] * len(counts)
    total = 0
    for orders in itertools.product(*(itertools.permutations(jobs_at[a]) for a in slots)):
        arrivals, owners = [], []
        for a, order in zip(slots, orders):
            arrivals.extend([a] * len(order))
            owners.extend(order)
        total += 1
        for owner, e in zip(owners, exit_times(arrivals)):
            if e > period:
                late[owner] += 1
    assert total == prod_factorials(len(v) for v in jobs_at.values())
    return [Fraction(late[i], total * n) if n else Fraction(0) for i, n in enumerate(counts)]


def prod_factorials(sizes):
    out = 1
    for m in sizes:
        out *= factorial(m)
    return out


def cost_oracle(counts, actions, period, penalty, player):
    p = late_by_permutations(counts, actions, period)[player]
    n = counts[player]
    return n * (period - actions[player]) + Fraction(penalty) * n * p


def two_point_weight(k, penalty, players):
    """Mass on T-k+1 that makes every unit-job player indifferent: x^(N-1) C = k."""
    return (k / penalty) ** (1 / (players - 1))


def served_count(counts, actions, period):
    """Number of jobs that leave by T (tie order does not matter for the count)."""
    arrivals = sorted(a for n, a in zip(counts, actions) for _ in range(n))
    return sum(1 for e in exit_times(arrivals) if e <= period)


def late_by_symmetry(counts, actions, period):
    """Late probability from the sorted queue alone.

    The number of late jobs in each arrival group does not depend on the tie
    order, and every job in a group is equally likely to hold any position.
    """
    arrivals = sorted(a for n, a in zip(counts, actions) for _ in range(n))
    late_at, size_at = {}, {}
    for a, e in zip(arrivals, exit_times(arrivals)):
        size_at[a] = size_at.get(a, 0) + 1
        late_at[a] = late_at.get(a, 0) + (e > period)
    return [Fraction(late_at[a], size_at[a]) if n else Fraction(0) for n, a in zip(counts, actions)]
