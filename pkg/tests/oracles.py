"""Independent reference implementations used as test oracles.

CDFs integrate the densities with mpmath's adaptive quadrature at 40 digits;
nothing here shares code with demodiff.
"""

import mpmath as mp

mp.mp.dps = 40


def normal_cdf(x):
    return float(mp.ncdf(mp.mpf(x)))


def t_cdf(x, df):
    nu = mp.mpf(df)
    c = mp.gamma((nu + 1) / 2) / (mp.sqrt(nu * mp.pi) * mp.gamma(nu / 2))
    dens = lambda t: c * (1 + t * t / nu) ** (-(nu + 1) / 2)
    x = mp.mpf(x)
    if x < 0:
        return float(mp.quad(dens, [-mp.inf, x]))
    return float(mp.mpf(1) - mp.quad(dens, [x, mp.inf]))


def f_cdf(x, d1, d2):
    d1, d2, x = mp.mpf(d1), mp.mpf(d2), mp.mpf(x)
    if x <= 0:
        return 0.0
    c = (d1 / d2) ** (d1 / 2) / mp.beta(d1 / 2, d2 / 2)
    dens = lambda f: c * f ** (d1 / 2 - 1) * (1 + d1 * f / d2) ** (-(d1 + d2) / 2)
    mode = max(mp.mpf(0), (d1 - 2) / d1 * d2 / (d2 + 2))
    pts = [0, x] if x <= mode or mode == 0 else [0, mode, x]
    lower = mp.quad(dens, pts)
    if lower < 0.5:
        return float(lower)
    return float(mp.mpf(1) - mp.quad(dens, [x, mp.inf]))


def betainc(x, a, b):
    """Regularized incomplete beta I_x(a, b)."""
    return float(mp.betainc(mp.mpf(a), mp.mpf(b), 0, mp.mpf(x), regularized=True))
