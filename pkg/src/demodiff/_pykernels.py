"""Pure-Python implementations of the hot kernels.

This module is the reference behaviour: the compiled ``_ckernels`` extension
must return bit-identical results for every function here.
"""

import math

import numpy as np

MASK64 = (1 << 64) - 1

PHILOX_M0 = 0xD2E7470EE14C6C93
PHILOX_M1 = 0xCA5A826395121157
PHILOX_W0 = 0x9E3779B97F4A7C15
PHILOX_W1 = 0xBB67AE8584CAA73B
PHILOX_ROUNDS = 10

BETA_EPS = 1e-16
BETA_FPMIN = 1e-300
BETA_MAXIT = 100000


def philox4x64(c0, c1, c2, c3, k0, k1):
    """One Philox4x64-10 block: 4 counter words + 2 key words -> 4 words."""
    for r in range(PHILOX_ROUNDS):
        if r:
            k0 = (k0 + PHILOX_W0) & MASK64
            k1 = (k1 + PHILOX_W1) & MASK64
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        c0, c1, c2, c3 = (
            (p1 >> 64) ^ c1 ^ k0,
            p1 & MASK64,
            (p0 >> 64) ^ c3 ^ k1,
            p0 & MASK64,
        )
    return c0, c1, c2, c3


def random_words(k0, k1, start, n):
    """Words ``start .. start+n-1`` of the stream keyed by ``(k0, k1)``.

    Word ``i`` is lane ``i % 4`` of the block with counter ``(i // 4, 0, 0, 0)``.
    """
    out = np.empty(n, dtype=np.uint64)
    block = -1
    words = None
    for j in range(n):
        i = start + j
        b = i >> 2
        if b != block:
            words = philox4x64(b & MASK64, b >> 64, 0, 0, k0, k1)
            block = b
        out[j] = words[i & 3]
    return out


def uniform_indices(k0, k1, start, n, bound):
    """Integers in ``[0, bound)`` from the high half of ``word * bound``."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    out = np.empty(n, dtype=np.int64)
    block = -1
    words = None
    for j in range(n):
        i = start + j
        b = i >> 2
        if b != block:
            words = philox4x64(b & MASK64, b >> 64, 0, 0, k0, k1)
            block = b
        out[j] = (words[i & 3] * bound) >> 64
    return out


def _betacf(x, a, b):
    # modified Lentz evaluation of the incomplete-beta continued fraction
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < BETA_FPMIN:
        d = BETA_FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, BETA_MAXIT + 1):
        m2 = 2.0 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < BETA_FPMIN:
            d = BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < BETA_FPMIN:
            c = BETA_FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < BETA_FPMIN:
            d = BETA_FPMIN
        c = 1.0 + aa / c
        if abs(c) < BETA_FPMIN:
            c = BETA_FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < BETA_EPS:
            return h
    return math.nan


LOG_2PI = math.log(2.0 * math.pi)
STIRLING_MIN = 10.0


def _stirling_delta(z):
    # lgamma(z) minus its Stirling approximation, z >= STIRLING_MIN
    zi = 1.0 / z
    z2 = zi * zi
    return zi * (1.0 / 12.0 - z2 * (1.0 / 360.0 - z2 * (1.0 / 1260.0 - z2 * (
        1.0 / 1680.0 - z2 * (1.0 / 1188.0 - z2 * (691.0 / 360360.0 - z2 / 156.0))))))


def _log_ratio_term(big, small, lx_big):
    # big*log(x_big) - lgamma(big) + lgamma(big + small), without cancellation
    s = big + small
    return (big * lx_big + (big - 0.5) * math.log1p(small / big)
            + small * math.log(s) - small
            - _stirling_delta(big) + _stirling_delta(s))


def _log_front(x, y, a, b):
    """log of x**a * y**b / B(a, b)."""
    lx = math.log1p(-y) if y < 0.5 else math.log(x)
    ly = math.log1p(-x) if x < 0.5 else math.log(y)
    if a >= STIRLING_MIN and b >= STIRLING_MIN:
        s = a + b
        u = x * b - y * a
        # 1 + u/a == x*s/a and 1 - u/b == y*s/b; log1p only helps near 0
        ta = a * math.log1p(u / a) if abs(u) < 0.5 * a else a * (lx + math.log(s / a))
        tb = b * math.log1p(-u / b) if abs(u) < 0.5 * b else b * (ly + math.log(s / b))
        return (ta + tb
                + 0.5 * (math.log(a / s * b) - LOG_2PI)
                - (_stirling_delta(a) + _stirling_delta(b) - _stirling_delta(s)))
    if a >= STIRLING_MIN:
        return _log_ratio_term(a, b, lx) + b * ly - math.lgamma(b)
    if b >= STIRLING_MIN:
        return _log_ratio_term(b, a, ly) + a * lx - math.lgamma(a)
    return a * lx + b * ly - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def betainc(x, y, a, b):
    """Regularized incomplete beta ``I_x(a, b)`` with ``y = 1 - x`` supplied.

    Passing the complement separately keeps precision when ``x`` is close to 1.
    Returns NaN if the continued fraction fails to converge.
    """
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    front = math.exp(_log_front(x, y, a, b))
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(x, a, b) / a
    return 1.0 - front * _betacf(y, b, a) / b


def top_r(scores, r):
    """Row-wise top-``r`` column indices of a 2-D score matrix.

    Order is score descending, then column index ascending.
    """
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    n_rows, n_cols = scores.shape
    k = min(r, n_cols)
    out = np.empty((n_rows, k), dtype=np.int64)
    if k == 0:
        return out
    for i in range(n_rows):
        row = scores[i]
        kth = np.partition(row, n_cols - k)[n_cols - k]
        cand = np.flatnonzero(row >= kth)
        order = np.lexsort((cand, -row[cand]))
        out[i] = cand[order[:k]]
    return out
