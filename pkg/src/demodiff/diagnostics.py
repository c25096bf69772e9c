"""Sensitivity of a differential to a few low genuine scores, plus quality checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import rng
from .core import (COMPOSITES, ComparisonRecord, DemographicGroup, GroupKey, ScoreSet,
                   parse_group)
from .errors import ConfigError, DataError, DegenerateStatisticError
from .resample import BootstrapConfig, comparison_weights
from .stats import (Dist, GroupSummary, ProportionSummary, TestKind, TestResult, quantile,
                    two_prop_z, welch_t)

MODES = ("point_z", "bootstrap_welch")


@dataclass(frozen=True)
class FlipReport:
    """Result of :func:`minimal_flips`.

    ``status`` is ``"already_non_significant"`` (0 flips), ``"erased"`` or
    ``"not_erasable"`` (``flips_needed`` is None).
    """

    pair: tuple[GroupKey, GroupKey]
    mode: str
    status: str
    flips_needed: int | None
    flipped_group: GroupKey | None
    flipped_fraction: float | None
    n_candidates: int
    test_before: TestResult
    test_after: TestResult
    flipped_samples: tuple[str, ...]
    search: str  # "binary" or "linear"


def _retained_degenerate(kind, alpha, crit, df=None):
    return TestResult(kind, 0.0, df, 1.0, alpha, False, crit, True)


class _FlipProblem:
    """Pairwise test as a function of the number of flipped scores."""

    def __init__(self, scores, pair, threshold, alpha, mode, config):
        self.scores = scores
        self.alpha = alpha
        self.mode = mode
        self.threshold = threshold
        self.masks = [scores.group_mask(g) & scores.mated for g in pair]
        for g, mask in zip(pair, self.masks):
            if not mask.any():
                raise DataError(f"group {g} has no mated comparisons")
        self.match = scores.score >= threshold
        if mode == "bootstrap_welch":
            config = config or BootstrapConfig()
            self.weights = np.array([comparison_weights(scores, config, r) for r in range(config.m)])
        base = self._rates_without_flips()
        self.low = 0 if base[0] <= base[1] else 1
        low_mask = self.masks[self.low]
        cand = np.flatnonzero(low_mask & ~self.match)
        self.candidates = cand[np.argsort(scores.score[cand], kind="stable")]
        self._memo: dict[int, TestResult] = {}

    def _rates_without_flips(self):
        return [r[0] for r in self.rate_paths(np.zeros(0, dtype=np.int64))]

    def rate_paths(self, cand) -> list[np.ndarray]:
        """Each group's rate after flipping ``cand[:k]``, for k = 0..len(cand)."""
        out = []
        for m in self.masks:
            inside = m[cand].astype(np.int64)
            if self.mode == "point_z":
                base = int((m & self.match).sum())
                out.append((base + np.concatenate([[0], np.cumsum(inside)])) / int(m.sum()))
                continue
            den = self.weights @ m
            if np.any(den == 0):
                raise DataError("a bootstrap replicate has no mated comparisons for a compared group")
            num = (self.weights @ (m & self.match))[:, None] + np.concatenate(
                [np.zeros((len(den), 1), dtype=np.int64), np.cumsum(self.weights[:, cand] * inside, axis=1)],
                axis=1)
            out.append((num / den[:, None]).mean(axis=0))
        return out

    def crossing(self) -> int:
        """First k at which the flipped group's rate reaches the other group's."""
        paths = self.rate_paths(self.candidates)
        low, other = paths[self.low], paths[1 - self.low]
        hit = np.flatnonzero(low >= other)
        return int(hit[0]) if len(hit) else len(self.candidates)

    def test(self, k: int) -> TestResult:
        if k not in self._memo:
            self._memo[k] = self._test(k)
        return self._memo[k]

    def _test(self, k):
        flipped = np.zeros(len(self.scores), dtype=bool)
        flipped[self.candidates[:k]] = True
        passes = self.match | flipped
        if self.mode == "point_z":
            props = [ProportionSummary.from_counts(int((m & passes).sum()), int(m.sum()))
                     for m in self.masks]
            try:
                return two_prop_z(props[0], props[1], self.alpha)
            except DegenerateStatisticError:
                return _retained_degenerate(TestKind.TWO_PROP_Z, self.alpha,
                                            quantile(Dist.NORMAL, 1 - self.alpha / 2))
        summaries = []
        for m in self.masks:
            reps = (self.weights @ (m & passes)) / (self.weights @ m)
            summaries.append(GroupSummary.from_replicates(reps))
        return welch_t(summaries[0], summaries[1], self.alpha, degenerate="flag")


def minimal_flips(
    scores: ScoreSet,
    pair: tuple[GroupKey | str, GroupKey | str],
    threshold: float,
    alpha: float = 0.05,
    mode: str = "point_z",
    config: BootstrapConfig | None = None,
) -> FlipReport:
    """Fewest below-threshold genuine scores of the lower-TMR group that must be
    raised to the threshold for the pairwise test to stop rejecting.

    Scores are flipped lowest first. The search is a binary search over k up
    to the point where the two rates cross. In ``bootstrap_welch`` mode the
    p-values on that range are checked for monotonicity first and a linear
    scan is used when they are not. The replicate draws are fixed by
    ``config`` before searching.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    pair = tuple(parse_group(g) if isinstance(g, str) else g for g in pair)
    prob = _FlipProblem(scores, pair, threshold, alpha, mode, config)
    n_cand = len(prob.candidates)
    before = prob.test(0)
    low_group = pair[prob.low]
    n_low = int(prob.masks[prob.low].sum())

    def report(status, k, after, how):
        flipped = tuple(str(scores.probe_sample[i]) for i in prob.candidates[:k]) if k else ()
        return FlipReport(pair, mode, status, k, low_group if k else None,
                          None if k is None else k / n_low, n_cand, before, after, flipped, how)

    if not before.reject:
        return report("already_non_significant", 0, before, "none")
    if n_cand == 0:
        return report("not_erasable", None, before, "none")

    # Up to the crossing the gap shrinks with every flip; in point mode that
    # makes |Z| monotone, in bootstrap mode the p-values are checked.
    hi = prob.crossing()
    if mode == "point_z":
        monotone = True
    else:
        pvals = [prob.test(k).p_value for k in range(hi + 1)]
        monotone = all(a <= b for a, b in zip(pvals, pvals[1:]))
    if monotone and hi > 0 and not prob.test(hi).reject:
        lo = 0  # reject at lo, retained at hi
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if prob.test(mid).reject:
                lo = mid
            else:
                hi = mid
        return report("erased", hi, prob.test(hi), "binary")
    for k in range(1, n_cand + 1):
        if not prob.test(k).reject:
            return report("erased", k, prob.test(k), "linear")
    return report("not_erasable", None, prob.test(n_cand), "linear")


@dataclass(frozen=True)
class OutlierFlag:
    index: int
    comparison: ComparisonRecord
    group: DemographicGroup
    margin: float
    probe_quality: float | None = None
    gallery_quality: float | None = None


def flag_outliers(
    scores: ScoreSet, threshold: float, quality: Mapping[str, float] | None = None
) -> list[OutlierFlag]:
    """Genuine comparisons scoring below threshold, lowest score first."""
    if scores.n_mated == 0:
        raise DataError("no mated comparisons to inspect")
    idx = np.flatnonzero(scores.mated & (scores.score < threshold))
    idx = idx[np.argsort(scores.score[idx], kind="stable")]
    quality = quality or {}
    flags = []
    for i in idx:
        rec = ComparisonRecord(
            str(scores.probe_subject[i]), str(scores.probe_sample[i]),
            str(scores.gallery_subject[i]), str(scores.gallery_sample[i]),
            float(scores.score[i]), True,
        )
        flags.append(OutlierFlag(
            int(i), rec, scores.subjects[rec.probe_subject], threshold - rec.score,
            quality.get(rec.probe_sample), quality.get(rec.gallery_sample),
        ))
    return flags


@dataclass(frozen=True)
class QualitySummary:
    group: GroupKey
    n_samples: int
    mean: float
    median: float
    std: float
    bin_edges: tuple[float, ...]
    histogram: tuple[int, ...]


@dataclass(frozen=True)
class QualityComparison:
    summaries: dict[GroupKey, QualitySummary]
    tests: list[tuple[tuple[GroupKey, GroupKey], TestResult]]
    n_unmapped: int
    equal_n: int | None


def quality_compare(
    quality: Mapping[str, float],
    sample_subjects: Mapping[str, str],
    subject_groups: Mapping[str, DemographicGroup],
    pairs: Sequence[tuple[GroupKey, GroupKey]] | None = None,
    *,
    equal_n: int | None = None,
    bins: int = 20,
    alpha: float = 0.05,
    seed: int = 0,
) -> QualityComparison:
    """Per-group quality distributions and Welch tests on mean quality.

    Samples are the unit. With ``equal_n`` every composite group is
    subsampled (seeded, without replacement) to that many samples first.
    Zero-variance pairs are reported as degenerate tests, not errors.
    """
    if bins < 1:
        raise ConfigError("bins must be >= 1")
    values: dict[DemographicGroup, list[float]] = {}
    unmapped = 0
    for sample in sorted(quality):
        q = float(quality[sample])
        if not (0.0 <= q <= 100.0):
            raise DataError(f"quality {q} of sample {sample!r} outside [0, 100]")
        subject = sample_subjects.get(sample)
        group = subject_groups.get(subject) if subject is not None else None
        if group is None:
            unmapped += 1
            continue
        values.setdefault(group, []).append(q)

    composites = sorted(values)
    if equal_n is not None:
        for gi, g in enumerate(composites):
            if len(values[g]) < equal_n:
                raise DataError(f"group {g} has {len(values[g])} quality samples, fewer than {equal_n}")
            stream = rng.Stream(seed, rng.stream_id(rng.SUBSAMPLE, gi))
            pick = np.sort(rng.sample_without_replacement(stream, len(values[g]), equal_n))
            values[g] = [values[g][i] for i in pick]

    keys: list[GroupKey] = list(composites)
    for pair in pairs or []:
        for g in pair:
            if g not in keys:
                keys.append(g)
    edges = np.linspace(0.0, 100.0, bins + 1)
    summaries = {}
    for key in keys:
        vals = np.array([v for g in composites if key.contains(g) for v in values[g]])
        if len(vals) == 0:
            raise DataError(f"no quality samples for group {key}")
        hist, _ = np.histogram(vals, bins=edges)
        summaries[key] = QualitySummary(
            key, len(vals), float(vals.mean()), float(np.median(vals)),
            float(vals.std(ddof=1)) if len(vals) > 1 else 0.0,
            tuple(float(e) for e in edges), tuple(int(h) for h in hist),
        )
    tests = []
    for g0, g1 in pairs or []:
        s0, s1 = summaries[g0], summaries[g1]
        for s in (s0, s1):
            if s.n_samples < 2:
                raise DataError(f"group {s.group} needs at least 2 quality samples")
        res = welch_t(GroupSummary(s0.mean, s0.std, s0.n_samples),
                      GroupSummary(s1.mean, s1.std, s1.n_samples), alpha, degenerate="flag")
        tests.append(((g0, g1), res))
    return QualityComparison(summaries, tests, unmapped, equal_n)


def default_quality_pairs() -> list[tuple[GroupKey, GroupKey]]:
    """All pairs of canonical composite groups."""
    return [(a, b) for i, a in enumerate(COMPOSITES) for b in COMPOSITES[i + 1:]]
