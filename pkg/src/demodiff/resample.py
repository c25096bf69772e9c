"""Seeded bootstrap over subjects or comparisons.

Replicate ``r`` draws from the Philox stream ``(seed, stream_id(BOOTSTRAP, r))``,
so replicates can be computed in any order or in parallel and always reduce to
the same estimate.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, Sequence

import numpy as np

from . import rng
from .core import GroupKey, ScoreSet
from .errors import ConfigError, DataError, UndefinedMetricError
from .stats import GroupSummary

UNITS = ("subject", "comparison")


class CoarseBootstrapWarning(UserWarning):
    """Few replicates: the replicate standard deviation is a rough estimate."""


class Metric(str, Enum):
    TMR = "tmr"
    FPIR = "fpir"
    FNIR = "fnir"
    TPIR = "tpir"


@dataclass(frozen=True)
class BootstrapConfig:
    m: int = 10
    seed: int = 0
    unit: str = "subject"

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 2:
            raise ConfigError(f"bootstrap needs m >= 2 replicates, got {self.m}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        if self.unit not in UNITS:
            raise ConfigError(f"resampling unit must be one of {UNITS}, got {self.unit!r}")
        if self.m <= 10:
            warnings.warn(
                f"m={self.m} bootstrap replicates give a coarse standard deviation",
                CoarseBootstrapWarning,
                stacklevel=3,
            )

    def as_dict(self) -> dict:
        return {"m": self.m, "seed": self.seed, "unit": self.unit}


@dataclass(frozen=True)
class BootstrapEstimate:
    group: GroupKey | None
    metric: Metric
    mean: float
    std: float
    replicates: tuple[float, ...]
    config: BootstrapConfig

    @classmethod
    def from_replicates(cls, group, metric, values, config) -> BootstrapEstimate:
        vals = tuple(float(v) for v in values)
        m = len(vals)
        mean = math.fsum(vals) / m
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / (m - 1))
        return cls(group, Metric(metric), mean, std, vals, config)

    def summary(self, scale: float = 1.0) -> GroupSummary:
        """Summary for the Welch test; ``scale=100`` reports percent."""
        unit = "percent" if scale == 100 else "fraction"
        return GroupSummary(self.mean * scale, self.std * scale, len(self.replicates), unit)


def draw_units(n_units: int, config: BootstrapConfig, index: int) -> np.ndarray:
    """Indices of the ``n_units`` units drawn with replacement for replicate ``index``."""
    if n_units <= 0:
        raise DataError("cannot resample an empty set")
    if not 0 <= index < config.m:
        raise ConfigError(f"replicate index {index} outside [0, {config.m})")
    stream = rng.Stream(config.seed, rng.stream_id(rng.BOOTSTRAP, index))
    return stream.integers(n_units, n_units)


def unit_counts(n_units: int, config: BootstrapConfig, index: int) -> np.ndarray:
    """Draw multiplicity of each unit in replicate ``index``."""
    return np.bincount(draw_units(n_units, config, index), minlength=n_units)


def comparison_weights(scores: ScoreSet, config: BootstrapConfig, index: int) -> np.ndarray:
    """Multiplicity of every comparison of ``scores`` in replicate ``index``.

    In subject mode the units are the distinct probe subjects, in order of
    first appearance; every comparison of a drawn subject inherits its count.
    """
    if len(scores) == 0:
        raise DataError("cannot resample an empty score set")
    if config.unit == "comparison":
        return unit_counts(len(scores), config, index)
    _, first, inverse = np.unique(scores.probe_index, return_index=True, return_inverse=True)
    # rank units by first appearance so unit order follows the data, not subject ids
    order = np.argsort(np.argsort(first, kind="stable"), kind="stable")
    counts = unit_counts(len(first), config, index)
    return counts[order[inverse]]


def resample(scores: ScoreSet, config: BootstrapConfig, replicate_index: int) -> ScoreSet:
    """Materialized replicate: each comparison repeated by its draw multiplicity."""
    weights = comparison_weights(scores, config, replicate_index)
    return scores.take(np.repeat(np.arange(len(scores)), weights))


def run_replicates(
    config: BootstrapConfig,
    replicate: Callable[[int], object],
    workers: int | None = None,
) -> list:
    """Evaluate ``replicate(r)`` for every r, in order regardless of scheduling."""
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(replicate, range(config.m)))
    return [replicate(r) for r in range(config.m)]


def bootstrap_units(
    n_units: int,
    statistic: Callable[[np.ndarray], float | None],
    config: BootstrapConfig,
    *,
    workers: int | None = None,
    label: str = "metric",
) -> list[float]:
    """Replicate values of ``statistic(counts)`` over ``n_units`` resampled units."""

    def one(r):
        value = statistic(unit_counts(n_units, config, r))
        if value is None:
            raise UndefinedMetricError(f"{label} undefined in bootstrap replicate {r}: empty denominator")
        return value

    return run_replicates(config, one, workers)


def tmr_replicates(
    scores: ScoreSet,
    threshold: float,
    groups: Sequence[GroupKey | None],
    config: BootstrapConfig,
    *,
    workers: int | None = None,
) -> np.ndarray:
    """Replicate TMRs, shape ``(len(groups), m)``, from one population resample.

    ``None`` in ``groups`` means the whole score set.
    """
    masks = np.array(
        [np.ones(len(scores), bool) if g is None else scores.group_mask(g) for g in groups],
        dtype=bool,
    ).reshape(len(groups), len(scores))
    genuine = masks & scores.mated
    match = genuine & (scores.score >= threshold)

    def one(r):
        w = comparison_weights(scores, config, r)
        den = genuine @ w
        num = match @ w
        for gi, d in enumerate(den):
            if d == 0:
                name = "all" if groups[gi] is None else groups[gi].code
                raise UndefinedMetricError(
                    f"TMR undefined for group {name} in bootstrap replicate {r}: "
                    "no mated comparisons survived resampling"
                )
        return num / den

    return np.array(run_replicates(config, one, workers)).T.reshape(len(groups), config.m)


def bootstrap_estimate(
    scores: ScoreSet,
    threshold: float,
    metric: Metric | str = Metric.TMR,
    config: BootstrapConfig | None = None,
    *,
    group: GroupKey | None = None,
    workers: int | None = None,
) -> BootstrapEstimate:
    """Bootstrap estimate of a verification rate on ``scores``.

    With ``group`` the whole population is resampled and the rate is taken over
    the group's comparisons in each replicate.
    """
    config = config or BootstrapConfig()
    if Metric(metric) is not Metric.TMR:
        raise ConfigError(
            f"{Metric(metric).value} is an identification metric; use openset.bootstrap_identification"
        )
    reps = tmr_replicates(scores, threshold, [group], config, workers=workers)[0]
    return BootstrapEstimate.from_replicates(group, Metric.TMR, reps, config)


def bootstrap_groups(
    scores: ScoreSet,
    threshold: float,
    groups: Sequence[GroupKey],
    config: BootstrapConfig | None = None,
    *,
    workers: int | None = None,
) -> Mapping[GroupKey, BootstrapEstimate]:
    """Per-group TMR estimates sharing the same population replicates."""
    config = config or BootstrapConfig()
    reps = tmr_replicates(scores, threshold, list(groups), config, workers=workers)
    return {
        g: BootstrapEstimate.from_replicates(g, Metric.TMR, reps[i], config)
        for i, g in enumerate(groups)
    }
