# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: xoshiro256** streams, Box-Muller normals, robust flagging.

Mirrors ``_pykernels`` function for function.
"""

from libc.math cimport sqrt, log, cos, sin, fabs, NAN, M_PI
from libc.stdint cimport uint64_t, uint8_t
from libc.stdlib cimport malloc, free
from libc.string cimport memmove

import numpy as np

cdef double INV_2_53 = 1.0 / 9007199254740992.0


cdef inline uint64_t rotl(uint64_t x, int k) nogil:
    return (x << k) | (x >> (64 - k))


cdef inline uint64_t next_u64(uint64_t* s) nogil:
    cdef uint64_t result = rotl(s[1] * 5, 7) * 9
    cdef uint64_t t = s[1] << 17
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = rotl(s[3], 45)
    return result


def splitmix64_seed(seed):
    cdef uint64_t x = (<object>seed) & 0xFFFFFFFFFFFFFFFF
    cdef uint64_t z
    out = np.empty(4, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef int i
    for i in range(4):
        x += 0x9E3779B97F4A7C15ULL
        z = x
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
        o[i] = z ^ (z >> 31)
    return out


def fill_u64(uint64_t[::1] state, uint64_t[::1] out):
    cdef uint64_t s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    for i in range(4):
        s[i] = state[i]
    with nogil:
        for i in range(n):
            out[i] = next_u64(s)
    for i in range(4):
        state[i] = s[i]


def fill_uniform(uint64_t[::1] state, double[::1] out):
    cdef uint64_t s[4]
    cdef Py_ssize_t i, n = out.shape[0]
    for i in range(4):
        s[i] = state[i]
    with nogil:
        for i in range(n):
            out[i] = (next_u64(s) >> 11) * INV_2_53
    for i in range(4):
        state[i] = s[i]


def fill_normal(uint64_t[::1] state, double[::1] out):
    cdef uint64_t s[4]
    cdef Py_ssize_t i = 0, n = out.shape[0]
    cdef double u1, u2, rad, theta
    for i in range(4):
        s[i] = state[i]
    i = 0
    with nogil:
        while i < n:
            u1 = (next_u64(s) >> 11) * INV_2_53
            u2 = (next_u64(s) >> 11) * INV_2_53
            rad = sqrt(-2.0 * log(1.0 - u1))
            theta = 2.0 * M_PI * u2
            out[i] = rad * cos(theta)
            if i + 1 < n:
                out[i + 1] = rad * sin(theta)
            i += 2
    for i in range(4):
        state[i] = s[i]


cdef Py_ssize_t _lower_bound(double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef void _sorted_insert(double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t p = _lower_bound(a, n, v)
    memmove(a + p + 1, a + p, (n - p) * sizeof(double))
    a[p] = v


cdef void _sorted_remove(double* a, Py_ssize_t n, double v) noexcept nogil:
    cdef Py_ssize_t p = _lower_bound(a, n, v)
    memmove(a + p, a + p + 1, (n - p - 1) * sizeof(double))


cdef double _kth_deviation(double* a, Py_ssize_t n, double med, Py_ssize_t split, Py_ssize_t k) noexcept nogil:
    # Deviations left of `split` grow leftwards, right of it rightwards; merge both runs.
    cdef Py_ssize_t l = split - 1, r = split, c
    cdef double d
    for c in range(k + 1):
        if l >= 0 and (r >= n or fabs(a[l] - med) <= fabs(a[r] - med)):
            d = fabs(a[l] - med)
            l -= 1
        else:
            d = fabs(a[r] - med)
            r += 1
    return d


def robust_flags(double[::1] x, uint8_t[::1] usable, double k, Py_ssize_t baseline,
                 double mad_scale, double floor, uint8_t[::1] flags,
                 double[::1] center, double[::1] spread):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, split, half = baseline // 2, filled = 0, head = 0
    cdef double med, mad
    cdef double* ring
    cdef double* srt
    if baseline < 1:
        raise ValueError("baseline must be >= 1")
    ring = <double*>malloc(baseline * sizeof(double))
    srt = <double*>malloc(baseline * sizeof(double))
    if ring == NULL or srt == NULL:
        free(ring)
        free(srt)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n):
                flags[i] = 0
                center[i] = NAN
                spread[i] = NAN
                if not usable[i]:
                    continue
                if filled >= baseline:
                    # ring keeps arrival order for eviction, srt the same values sorted
                    if baseline % 2:
                        med = srt[half]
                    else:
                        med = 0.5 * (srt[half - 1] + srt[half])
                    split = _lower_bound(srt, baseline, med)
                    if baseline % 2:
                        mad = _kth_deviation(srt, baseline, med, split, half)
                    else:
                        mad = 0.5 * (_kth_deviation(srt, baseline, med, split, half - 1)
                                     + _kth_deviation(srt, baseline, med, split, half))
                    mad = mad * mad_scale
                    if mad < floor:
                        mad = floor
                    center[i] = med
                    spread[i] = mad
                    if fabs(x[i] - med) > k * mad:
                        flags[i] = 1
                        continue
                    _sorted_remove(srt, baseline, ring[head])
                    _sorted_insert(srt, baseline - 1, x[i])
                else:
                    _sorted_insert(srt, filled, x[i])
                    filled += 1
                ring[head] = x[i]
                head = (head + 1) % baseline
    finally:
        free(ring)
        free(srt)
