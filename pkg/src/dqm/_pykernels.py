"""Pure-Python versions of the hot kernels.

Same signatures and the same floating-point operation order as
``_ckernels.pyx``, so both backends produce bit-identical results.
"""

import math

import numpy as np

BACKEND = "python"


def _group_on_time(hist, period, target):
    # FIFO server from time 0, one job per unit: returns (m, q) of the group at `target`
    free = 0
    for a in range(period):
        m = hist[a]
        if m == 0:
            continue
        start = free if free > a else a
        if a == target:
            q = period - start
            if q < 0:
                q = 0
            elif q > m:
                q = m
            return m, q
        free = start + m
    return 0, 0


def late_probabilities(counts, actions, period):
    """Late probability of each player's jobs under a pure profile (float64[N])."""
    n = len(counts)
    hist = [0] * period
    for i in range(n):
        hist[int(actions[i])] += int(counts[i])
    out = np.zeros(n, dtype=np.float64)
    cache = {}
    for i in range(n):
        a = int(actions[i])
        if a not in cache:
            cache[a] = _group_on_time(hist, period, a)
        m, q = cache[a]
        out[i] = (m - q) / m if m > 0 and int(counts[i]) > 0 else 0.0
    return out


def deviation_costs(counts, actions, period, penalty):
    """float64[N, T]: cost of player i playing b while the others keep their actions."""
    n = len(counts)
    hist = [0] * period
    for i in range(n):
        hist[int(actions[i])] += int(counts[i])
    out = np.zeros((n, period), dtype=np.float64)
    for i in range(n):
        ni = int(counts[i])
        if ni == 0:
            continue
        ai = int(actions[i])
        hist[ai] -= ni
        for b in range(period):
            hist[b] += ni
            m, q = _group_on_time(hist, period, b)
            hist[b] -= ni
            late = (m - q) / m
            out[i, b] = ni * (period - b) + penalty * ni * late
        hist[ai] += ni
    return out


def _reinforcement(z, m, scale, eta, divisor, p_max, table, use_table):
    if use_table:
        if z < table.shape[0] and m < table.shape[1]:
            r = table[z, m]
        else:
            r = 0.0
    else:
        r = scale * math.exp(-eta * ((z + divisor - 1) // divisor) * (m + 1))
    return p_max if r > p_max else r


def walk_chunk(x, visits, d, max_jump, scale, eta, divisor, p_max, table, use_table,
               u_z, u_move, u_jump, cap, trace):
    """Advance the reinforced walk over one chunk of pre-drawn uniforms.

    ``visits`` (int64[cap + 1]) is updated in place; ``trace`` is either empty
    or as long as the chunk. Returns (x, sup over chunk, steps done, escaped).
    """
    steps = len(u_z)
    sup = x
    record = len(trace) > 0
    for t in range(steps):
        lo = int(math.ceil(x / d))
        z = lo + int(u_z[t] * (x - lo + 1))
        if z > x:
            z = x
        visits[z] += 1
        p = _reinforcement(z, int(visits[z]), scale, eta, divisor, p_max, table, use_table)
        if u_move[t] < p:
            jump = 1 + int(u_jump[t] * max_jump)
            if jump > max_jump:
                jump = max_jump
            x += jump
        elif x > 0:
            x -= 1
        if record:
            trace[t] = x
        if x > sup:
            sup = x
        if x >= cap:
            return x, sup, t + 1, True
    return x, sup, steps, False
