# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Signatures mirror ``_fallback`` exactly."""

import numpy as np

from libc.math cimport isnan, fabs


def asof_index(const long long[::1] starts, const long long[::1] dates,
               const long long[::1] groups, const long long[::1] targets,
               const long long[::1] lower_bounds):
    cdef Py_ssize_t n = targets.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t i, lo, hi, mid, first
    cdef long long g, t
    for i in range(n):
        g = groups[i]
        if g < 0:
            o[i] = -1
            continue
        first = starts[g]
        lo = first
        hi = starts[g + 1]
        t = targets[i]
        while lo < hi:
            mid = (lo + hi) >> 1
            if dates[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        if lo == first or dates[lo - 1] < lower_bounds[i]:
            o[i] = -1
        else:
            o[i] = lo - 1
    return out


def fill_index(const long long[::1] starts, const unsigned char[::1] valid, bint backward):
    cdef Py_ssize_t n = valid.shape[0]
    cdef Py_ssize_t ngroups = starts.shape[0] - 1
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    cdef Py_ssize_t g, i
    cdef long long last
    for g in range(ngroups):
        last = -1
        if backward:
            i = starts[g + 1] - 1
            while i >= starts[g]:
                if valid[i]:
                    last = i
                o[i] = last
                i -= 1
        else:
            for i in range(starts[g], starts[g + 1]):
                if valid[i]:
                    last = i
                o[i] = last
    return out


def simulate(const double[:, ::1] targets, const unsigned char[::1] rebalance,
             const double[:, ::1] returns, double fee_rate, double capital0):
    cdef Py_ssize_t T = targets.shape[0]
    cdef Py_ssize_t N = targets.shape[1]
    capital = np.zeros(T, dtype=np.float64)
    turnover = np.zeros(T, dtype=np.float64)
    fees = np.zeros(T, dtype=np.float64)
    cdef double[::1] cap = capital
    cdef double[::1] turn = turnover
    cdef double[::1] fee = fees
    held_arr = np.zeros(N, dtype=np.float64)
    cdef double[::1] held = held_arr
    cdef Py_ssize_t t, i
    cdef double c = capital0, tv, growth, r, f
    cdef long long null_hits = 0
    if T == 0:
        return capital, turnover, fees, 0
    cap[0] = c
    for t in range(1, T):
        if c <= 0.0:
            cap[t] = 0.0
            continue
        if rebalance[t - 1]:
            tv = 0.0
            for i in range(N):
                tv += fabs(targets[t - 1, i] - held[i])
                held[i] = targets[t - 1, i]
            f = c * tv * fee_rate
            c -= f
            turn[t] = tv
            fee[t] = f
        growth = 1.0
        for i in range(N):
            if held[i] != 0.0:
                r = returns[t, i]
                if isnan(r):
                    null_hits += 1
                else:
                    growth += held[i] * r
        c = c * growth
        if c <= 0.0:
            c = 0.0
            for i in range(N):
                held[i] = 0.0
        else:
            for i in range(N):
                if held[i] != 0.0:
                    r = returns[t, i]
                    if isnan(r):
                        r = 0.0
                    held[i] = held[i] * (1.0 + r) / growth
        cap[t] = c
    return capital, turnover, fees, null_hits
