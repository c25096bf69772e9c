"""Distribution functions and the two-group / k-group rate tests.

t and F distributions accept non-integer degrees of freedom; Welch's
approximation produces them routinely and they are used without rounding.
Two-sample tests are two-sided, the F test is upper-tailed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from . import kernels
from .errors import ConfigError, DegenerateStatisticError, NumericError

SQRT2 = math.sqrt(2.0)

QUANTILE_MAXIT = 400


def reg_incomplete_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not (a > 0 and b > 0) or math.isinf(a) or math.isinf(b):
        raise ValueError(f"I_x(a, b) needs finite a, b > 0, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"I_x(a, b) needs x in [0, 1], got {x}")
    return _betainc(x, 1.0 - x, a, b)


def _betainc(x, y, a, b):
    value = kernels.betainc(float(x), float(y), float(a), float(b))
    if math.isnan(value):
        raise NumericError(f"incomplete beta did not converge (x={x}, a={a}, b={b})")
    return min(1.0, max(0.0, value))


def _check_df(*dfs):
    for df in dfs:
        if not df > 0:
            raise ValueError(f"degrees of freedom must be positive, got {df}")


def normal_cdf(z: float) -> float:
    return 0.5 * math.erfc(-z / SQRT2)


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / SQRT2)


def _t_tail(t: float, df: float) -> float:
    # P(T > |t|)
    if math.isinf(df):
        return normal_sf(abs(t))
    t2 = t * t
    if math.isinf(t2):
        return 0.0
    denom = df + t2
    return 0.5 * _betainc(df / denom, t2 / denom, 0.5 * df, 0.5)


def t_cdf(t: float, df: float) -> float:
    _check_df(df)
    if math.isnan(t):
        raise ValueError("t is NaN")
    tail = _t_tail(t, df)
    return 1.0 - tail if t > 0 else tail


def t_sf(t: float, df: float) -> float:
    _check_df(df)
    tail = _t_tail(t, df)
    return tail if t > 0 else 1.0 - tail


def f_cdf(f: float, df1: float, df2: float) -> float:
    _check_df(df1, df2)
    if f < 0:
        raise ValueError(f"F statistic must be non-negative, got {f}")
    if f == 0:
        return 0.0
    if math.isinf(f):
        return 1.0
    denom = df1 * f + df2
    return _betainc(df1 * f / denom, df2 / denom, 0.5 * df1, 0.5 * df2)


def f_sf(f: float, df1: float, df2: float) -> float:
    _check_df(df1, df2)
    if f < 0:
        raise ValueError(f"F statistic must be non-negative, got {f}")
    if f == 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    denom = df1 * f + df2
    return _betainc(df2 / denom, df1 * f / denom, 0.5 * df2, 0.5 * df1)


class Dist(str, Enum):
    NORMAL = "normal"
    T = "t"
    F = "f"


def cdf(dist: Dist | str, x: float, *df: float) -> float:
    dist = Dist(dist)
    if dist is Dist.NORMAL:
        return normal_cdf(x)
    if dist is Dist.T:
        return t_cdf(x, *df)
    return f_cdf(x, *df)


def quantile(dist: Dist | str, gamma: float, *df: float) -> float:
    """Inverse CDF by bracketing then Illinois false position.

    Raises :class:`NumericError` if the iteration cap is hit.
    """
    dist = Dist(dist)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if dist is Dist.NORMAL and df:
        raise ValueError("normal distribution takes no degrees of freedom")
    if dist is Dist.T and len(df) != 1 or dist is Dist.F and len(df) != 2:
        raise ValueError(f"wrong number of degrees of freedom for {dist.value}: {df}")
    _check_df(*df)
    if dist is not Dist.F and gamma == 0.5:
        return 0.0

    def g(x):
        return cdf(dist, x, *df) - gamma

    # bracket
    if dist is Dist.F:
        lo, hi = 0.0, 1.0
        while g(hi) < 0:
            lo, hi = hi, hi * 2.0
            if hi > 1e300:
                raise NumericError("could not bracket F quantile")
    else:
        step = 1.0
        if gamma > 0.5:
            lo, hi = 0.0, step
            while g(hi) < 0:
                lo, hi = hi, hi * 2.0
                if hi > 1e300:
                    raise NumericError("could not bracket quantile")
        else:
            lo, hi = -step, 0.0
            while g(lo) > 0:
                lo, hi = lo * 2.0, lo
                if lo < -1e300:
                    raise NumericError("could not bracket quantile")
    glo, ghi = g(lo), g(hi)
    if glo == 0:
        return lo
    if ghi == 0:
        return hi
    side = 0
    for _ in range(QUANTILE_MAXIT):
        x = (lo * ghi - hi * glo) / (ghi - glo)
        if not lo < x < hi:
            x = 0.5 * (lo + hi)
        gx = g(x)
        if gx == 0:
            return x
        if gx < 0:
            lo, glo = x, gx
            if side == -1:
                ghi *= 0.5
            side = -1
        else:
            hi, ghi = x, gx
            if side == 1:
                glo *= 0.5
            side = 1
        if hi - lo <= 4.0 * math.ulp(max(abs(lo), abs(hi), 1e-300)):
            break
    else:
        raise NumericError(f"{dist.value} quantile did not converge for gamma={gamma}, df={df}")
    return lo if abs(glo) <= abs(ghi) else hi


class TestKind(str, Enum):
    __test__ = False

    TWO_PROP_Z = "two_prop_z"
    WELCH_T = "welch_t"
    ANOVA_F = "anova_f"


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test.

    ``reject`` is ``p_value < alpha``. ``critical_value`` is the quantile the
    statistic is compared against (absolute value for the two-sided tests).
    ``degenerate`` marks zero-variance inputs where the statistic is infinite
    or conventionally zero.
    """

    __test__ = False

    test_kind: TestKind
    statistic: float
    df: float | tuple[float, float] | None
    p_value: float
    alpha: float
    reject: bool
    critical_value: float
    degenerate: bool = False

    @property
    def reject_by_critical(self) -> bool:
        if self.test_kind is TestKind.ANOVA_F:
            return self.statistic > self.critical_value
        return abs(self.statistic) > self.critical_value


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


@dataclass(frozen=True)
class ProportionSummary:
    p_hat: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("proportion needs n >= 1 trials")
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError(f"proportion {self.p_hat} outside [0, 1]")

    @classmethod
    def from_counts(cls, successes: int, n: int) -> ProportionSummary:
        return cls(successes / n, n)


def two_prop_z(g0: ProportionSummary, g1: ProportionSummary, alpha: float = 0.05) -> TestResult:
    """Pooled two-proportion z test of H0: p0 == p1."""
    _check_alpha(alpha)
    n0, n1 = g0.n, g1.n
    pooled = (n0 * g0.p_hat + n1 * g1.p_hat) / (n0 + n1)
    var = pooled * (1.0 - pooled) * (1.0 / n0 + 1.0 / n1)
    if not var > 0:
        raise DegenerateStatisticError(
            f"degenerate pooled proportion {pooled}: the z statistic is 0/0"
        )
    z = (g0.p_hat - g1.p_hat) / math.sqrt(var)
    p = min(1.0, 2.0 * normal_sf(abs(z)))
    return TestResult(TestKind.TWO_PROP_Z, z, None, p, alpha, p < alpha,
                      quantile(Dist.NORMAL, 1.0 - alpha / 2.0))


UNITS = ("fraction", "percent")


@dataclass(frozen=True)
class GroupSummary:
    """Mean and sample std of ``m`` bootstrap replicates of a rate."""

    mean: float
    std: float
    m: int
    unit: str = "fraction"

    def __post_init__(self):
        if self.std < 0 or math.isnan(self.std):
            raise ValueError(f"std must be >= 0, got {self.std}")
        if self.m < 2:
            raise ValueError(f"need m >= 2 replicates, got {self.m}")
        if self.unit not in UNITS:
            raise ValueError(f"unit must be one of {UNITS}, got {self.unit!r}")

    @classmethod
    def from_replicates(cls, values: Sequence[float], unit: str = "fraction") -> GroupSummary:
        vals = [float(v) for v in values]
        m = len(vals)
        if m < 2:
            raise ValueError(f"need m >= 2 replicates, got {m}")
        mean = math.fsum(vals) / m
        var = math.fsum((v - mean) ** 2 for v in vals) / (m - 1)
        return cls(mean, math.sqrt(var), m, unit)


def welch_t(
    g0: GroupSummary, g1: GroupSummary, alpha: float = 0.05, *, degenerate: str = "raise"
) -> TestResult:
    """Welch's unequal-variance t test on two bootstrap summaries.

    With both stds zero the statistic is undefined; ``degenerate="flag"``
    returns an infinite statistic (or 0 for equal means) marked degenerate
    instead of raising.
    """
    _check_alpha(alpha)
    if g0.unit != g1.unit:
        raise ConfigError(f"unit mismatch: {g0.unit} vs {g1.unit}")
    v0 = g0.std ** 2 / g0.m
    v1 = g1.std ** 2 / g1.m
    se2 = v0 + v1
    diff = g0.mean - g1.mean
    if se2 == 0:
        if degenerate != "flag":
            raise DegenerateStatisticError(
                "no replicate variance in either group; increase the bootstrap "
                "replicate count or use two_prop_z on the point estimates"
            )
        stat = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        df = float(g0.m + g1.m - 2)
        crit = quantile(Dist.T, 1.0 - alpha / 2.0, df)
        p = 1.0 if diff == 0 else 0.0
        return TestResult(TestKind.WELCH_T, stat, df, p, alpha, p < alpha, crit, True)
    stat = diff / math.sqrt(se2)
    df = se2 * se2 / (v0 * v0 / (g0.m - 1) + v1 * v1 / (g1.m - 1))
    return t_decision(stat, df, alpha)


def t_decision(statistic: float, df: float, alpha: float = 0.05) -> TestResult:
    """Two-sided t test decision for a given statistic and (fractional) df."""
    _check_alpha(alpha)
    _check_df(df)
    p = min(1.0, 2.0 * t_sf(abs(statistic), df))
    crit = quantile(Dist.T, 1.0 - alpha / 2.0, df)
    return TestResult(TestKind.WELCH_T, statistic, df, p, alpha, p < alpha, crit)


def _anova(means, within_ss, m, alpha, grand_mean):
    k = len(means)
    if k < 2:
        raise ConfigError("ANOVA needs at least two groups")
    if m < 2:
        raise ConfigError("ANOVA needs m >= 2 replicates per group")
    _check_alpha(alpha)
    if grand_mean is None:
        grand_mean = math.fsum(means) / k
    df1 = float(k - 1)
    df2 = float(k * (m - 1))
    between = m / df1 * math.fsum((mu - grand_mean) ** 2 for mu in means)
    within = within_ss / df2
    crit = quantile(Dist.F, 1.0 - alpha, df1, df2)
    if within == 0:
        if between > 0:
            return TestResult(TestKind.ANOVA_F, math.inf, (df1, df2), 0.0, alpha, True, crit, True)
        return TestResult(TestKind.ANOVA_F, 0.0, (df1, df2), 1.0, alpha, False, crit, True)
    stat = between / within
    p = f_sf(stat, df1, df2)
    return TestResult(TestKind.ANOVA_F, stat, (df1, df2), p, alpha, p < alpha, crit)


def anova_f(
    groups: Sequence[Sequence[float]], alpha: float = 0.05, grand_mean: float | None = None
) -> TestResult:
    """One-way ANOVA over balanced replicate lists.

    ``grand_mean`` defaults to the unweighted mean of the group means; pass a
    value to use an externally computed overall rate instead.
    """
    sizes = {len(g) for g in groups}
    if len(sizes) > 1:
        raise ConfigError(f"balanced design required, got replicate counts {sorted(sizes)}")
    m = sizes.pop() if sizes else 0
    means = [math.fsum(g) / m for g in groups] if m else []
    within_ss = math.fsum(
        (float(v) - mu) ** 2 for g, mu in zip(groups, means) for v in g
    )
    return _anova(means, within_ss, m, alpha, grand_mean)


def anova_f_from_summaries(
    summaries: Sequence[GroupSummary], alpha: float = 0.05, grand_mean: float | None = None
) -> TestResult:
    """ANOVA from per-group (mean, std, m); within-group sums are (m-1)*std**2."""
    sizes = {s.m for s in summaries}
    if len(sizes) > 1:
        raise ConfigError(f"balanced design required, got replicate counts {sorted(sizes)}")
    if len({s.unit for s in summaries}) > 1:
        raise ConfigError("unit mismatch between summaries")
    m = sizes.pop() if sizes else 0
    within_ss = math.fsum((s.m - 1) * s.std ** 2 for s in summaries)
    return _anova([s.mean for s in summaries], within_ss, m, alpha, grand_mean)
