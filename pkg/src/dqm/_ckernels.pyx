# cython: language_level=3
"""Compiled hot kernels; see ``_pykernels.py`` for the reference versions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport ceil, exp

cnp.import_array()

BACKEND = "cython"


cdef inline void _group_on_time(long[::1] hist, long period, long target,
                                long* m_out, long* q_out) noexcept nogil:
    cdef long free = 0, a, m, start, q
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
            m_out[0] = m
            q_out[0] = q
            return
        free = start + m
    m_out[0] = 0
    q_out[0] = 0


def late_probabilities(counts, actions, long period):
    cdef long[::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef long[::1] act = np.ascontiguousarray(actions, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0], i
    cdef long[::1] hist = np.zeros(period, dtype=np.int64)
    cdef long m, q
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] o = out
    for i in range(n):
        hist[act[i]] += c[i]
    for i in range(n):
        _group_on_time(hist, period, act[i], &m, &q)
        o[i] = (<double>(m - q)) / (<double>m) if m > 0 and c[i] > 0 else 0.0
    return out


def deviation_costs(counts, actions, long period, double penalty):
    cdef long[::1] c = np.ascontiguousarray(counts, dtype=np.int64)
    cdef long[::1] act = np.ascontiguousarray(actions, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0], i
    cdef long[::1] hist = np.zeros(period, dtype=np.int64)
    cdef long m, q, ni, ai, b
    cdef double late
    out = np.zeros((n, period), dtype=np.float64)
    cdef double[:, ::1] o = out
    for i in range(n):
        hist[act[i]] += c[i]
    with nogil:
        for i in range(n):
            ni = c[i]
            if ni == 0:
                continue
            ai = act[i]
            hist[ai] -= ni
            for b in range(period):
                hist[b] += ni
                _group_on_time(hist, period, b, &m, &q)
                hist[b] -= ni
                late = (<double>(m - q)) / (<double>m)
                o[i, b] = <double>(ni * (period - b)) + penalty * <double>ni * late
            hist[ai] += ni
    return out


cdef inline double _reinforcement(long z, long m, double scale, double eta, long divisor,
                                  double p_max, double[:, ::1] table,
                                  bint use_table) noexcept nogil:
    cdef double r
    if use_table:
        if z < table.shape[0] and m < table.shape[1]:
            r = table[z, m]
        else:
            r = 0.0
    else:
        r = scale * exp(-eta * <double>((z + divisor - 1) // divisor) * <double>(m + 1))
    return p_max if r > p_max else r


def walk_chunk(long x, long[::1] visits, double d, long max_jump, double scale, double eta,
               long divisor, double p_max, double[:, ::1] table, bint use_table,
               double[::1] u_z, double[::1] u_move, double[::1] u_jump, long cap,
               long[::1] trace):
    cdef Py_ssize_t steps = u_z.shape[0], t
    cdef long sup = x, lo, z, jump
    cdef double p
    cdef bint record = trace.shape[0] > 0
    with nogil:
        for t in range(steps):
            lo = <long>ceil(x / d)
            z = lo + <long>(u_z[t] * <double>(x - lo + 1))
            if z > x:
                z = x
            visits[z] += 1
            p = _reinforcement(z, visits[z], scale, eta, divisor, p_max, table, use_table)
            if u_move[t] < p:
                jump = 1 + <long>(u_jump[t] * <double>max_jump)
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
                with gil:
                    return x, sup, t + 1, True
    return x, sup, steps, False
