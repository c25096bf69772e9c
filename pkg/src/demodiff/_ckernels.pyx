# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; mirror of ``demodiff._pykernels``."""

import math

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, log1p, fabs, NAN
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

cdef extern from *:
    """
    static inline void dd_mulhilo(unsigned long long a, unsigned long long b,
                                  unsigned long long *hi, unsigned long long *lo) {
        unsigned __int128 p = (unsigned __int128)a * (unsigned __int128)b;
        *hi = (unsigned long long)(p >> 64);
        *lo = (unsigned long long)p;
    }
    static inline long long dd_mulhi_bound(unsigned long long w, unsigned long long bound) {
        return (long long)(((unsigned __int128)w * (unsigned __int128)bound) >> 64);
    }
    """
    void dd_mulhilo(unsigned long long a, unsigned long long b,
                    unsigned long long *hi, unsigned long long *lo) nogil
    long long dd_mulhi_bound(unsigned long long w, unsigned long long bound) nogil

cdef unsigned long long PHILOX_M0 = 0xD2E7470EE14C6C93ULL
cdef unsigned long long PHILOX_M1 = 0xCA5A826395121157ULL
cdef unsigned long long PHILOX_W0 = 0x9E3779B97F4A7C15ULL
cdef unsigned long long PHILOX_W1 = 0xBB67AE8584CAA73BULL

cdef double BETA_EPS = 1e-16
cdef double BETA_FPMIN = 1e-300
cdef int BETA_MAXIT = 100000

_py_lgamma = math.lgamma


cdef inline void _philox(unsigned long long *c, unsigned long long k0,
                         unsigned long long k1) nogil:
    cdef unsigned long long hi0, lo0, hi1, lo1
    cdef int r
    for r in range(10):
        if r:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        dd_mulhilo(PHILOX_M0, c[0], &hi0, &lo0)
        dd_mulhilo(PHILOX_M1, c[2], &hi1, &lo1)
        c[0] = hi1 ^ c[1] ^ k0
        c[1] = lo1
        c[2] = hi0 ^ c[3] ^ k1
        c[3] = lo0


def philox4x64(c0, c1, c2, c3, k0, k1):
    cdef unsigned long long c[4]
    c[0] = c0; c[1] = c1; c[2] = c2; c[3] = c3
    _philox(c, k0, k1)
    return c[0], c[1], c[2], c[3]


def random_words(unsigned long long k0, unsigned long long k1, start, Py_ssize_t n):
    cdef cnp.ndarray[cnp.uint64_t, ndim=1] out = np.empty(n, dtype=np.uint64)
    cdef unsigned long long s = start
    cdef unsigned long long i, b, block = 0
    cdef unsigned long long c[4]
    cdef bint have = False
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            i = s + j
            b = i >> 2
            if not have or b != block:
                c[0] = b; c[1] = 0; c[2] = 0; c[3] = 0
                _philox(c, k0, k1)
                block = b
                have = True
            out[j] = c[i & 3]
    return out


def uniform_indices(unsigned long long k0, unsigned long long k1, start,
                    Py_ssize_t n, bound):
    if bound <= 0:
        raise ValueError("bound must be positive")
    cdef unsigned long long ub = bound
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef unsigned long long s = start
    cdef unsigned long long i, b, block = 0
    cdef unsigned long long c[4]
    cdef bint have = False
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            i = s + j
            b = i >> 2
            if not have or b != block:
                c[0] = b; c[1] = 0; c[2] = 0; c[3] = 0
                _philox(c, k0, k1)
                block = b
                have = True
            out[j] = dd_mulhi_bound(c[i & 3], ub)
    return out


cdef double _betacf(double x, double a, double b) nogil:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, m2, delta
    cdef int m
    if fabs(d) < BETA_FPMIN:
        d = BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, BETA_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < BETA_FPMIN:
            d = BETA_FPMIN
        c = 1.0 + aa / c
        if fabs(c) < BETA_FPMIN:
            c = BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < BETA_FPMIN:
            d = BETA_FPMIN
        c = 1.0 + aa / c
        if fabs(c) < BETA_FPMIN:
            c = BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < BETA_EPS:
            return h
    return NAN


cdef double LOG_2PI = math.log(2.0 * math.pi)
cdef double STIRLING_MIN = 10.0


cdef inline double _stirling_delta(double z) nogil:
    cdef double zi = 1.0 / z
    cdef double z2 = zi * zi
    return zi * (1.0 / 12.0 - z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 * (
        1.0 / 1680.0 - z2 * (1.0 / 1188.0 - z2 * (691.0 / 360360.0 - z2 / 156.0))))))


cdef inline double _log_ratio_term(double big, double small, double lx_big) nogil:
    cdef double s = big + small
    return (big * lx_big + (big - 0.5) * log1p(small / big)
            + small * log(s) - small
            - _stirling_delta(big) + _stirling_delta(s))


cdef double _log_front(double x, double y, double a, double b):
    cdef double lx = log1p(-y) if y < 0.5 else log(x)
    cdef double ly = log1p(-x) if x < 0.5 else log(y)
    cdef double s, u, ta, tb
    if a >= STIRLING_MIN and b >= STIRLING_MIN:
        s = a + b
        u = x * b - y * a
        # 1 + u/a == x*s/a and 1 - u/b == y*s/b; log1p only helps near 0
        ta = a * log1p(u / a) if fabs(u) < 0.5 * a else a * (lx + log(s / a))
        tb = b * log1p(-u / b) if fabs(u) < 0.5 * b else b * (ly + log(s / b))
        return (ta + tb
                + 0.5 * (log(a / s * b) - LOG_2PI)
                - (_stirling_delta(a) + _stirling_delta(b) - _stirling_delta(s)))
    if a >= STIRLING_MIN:
        return _log_ratio_term(a, b, lx) + b * ly - <double>_py_lgamma(b)
    if b >= STIRLING_MIN:
        return _log_ratio_term(b, a, ly) + a * lx - <double>_py_lgamma(a)
    return a * lx + b * ly - (<double>_py_lgamma(a) + <double>_py_lgamma(b)
                              - <double>_py_lgamma(a + b))


def betainc(double x, double y, double a, double b):
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    cdef double front = exp(_log_front(x, y, a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(y, b, a) / b


def top_r(scores, Py_ssize_t r):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef Py_ssize_t n_rows = s.shape[0]
    cdef Py_ssize_t n_cols = s.shape[1]
    cdef Py_ssize_t k = min(r, n_cols)
    cdef cnp.ndarray[cnp.int64_t, ndim=2] out = np.empty((n_rows, k), dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] best = np.empty(max(k, 1), dtype=np.float64)
    cdef Py_ssize_t i, j, p, filled
    cdef double v
    if k == 0:
        return out
    with nogil:
        for i in range(n_rows):
            filled = 0
            for j in range(n_cols):
                v = s[i, j]
                if filled == k and not (v > best[k - 1]):
                    continue
                # equal scores keep earlier columns ahead
                p = filled if filled < k else k - 1
                while p > 0 and best[p - 1] < v:
                    if p < k:
                        best[p] = best[p - 1]
                        out[i, p] = out[i, p - 1]
                    p -= 1
                best[p] = v
                out[i, p] = j
                if filled < k:
                    filled += 1
    return out
