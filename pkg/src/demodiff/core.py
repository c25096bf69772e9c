"""Demographic-labelled comparison scores and verification rates.

Every rate uses the decision rule ``score >= threshold`` => match. Rates whose
denominator is empty are reported as ``None`` rather than NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import ConfigError, DataError

CANONICAL_RACES = ("B", "W")
CANONICAL_GENDERS = ("F", "M")


def _check_label(kind: str, value: str) -> str:
    if not isinstance(value, str) or not value or value != value.strip():
        raise ValueError(f"{kind} label must be a non-empty trimmed string, got {value!r}")
    return value


@dataclass(frozen=True, order=True)
class DemographicGroup:
    """A composite (race, gender) group such as BF or WM."""

    race: str
    gender: str

    def __post_init__(self):
        _check_label("race", self.race)
        _check_label("gender", self.gender)

    @property
    def code(self) -> str:
        if len(self.race) == 1 and len(self.gender) == 1:
            return self.race + self.gender
        return f"{self.race}/{self.gender}"

    @property
    def canonical(self) -> bool:
        return self.race in CANONICAL_RACES and self.gender in CANONICAL_GENDERS

    def contains(self, group: DemographicGroup) -> bool:
        return group == self

    def __str__(self):
        return self.code


@dataclass(frozen=True, order=True)
class MarginalGroup:
    """Union of all composite groups sharing one race or one gender value."""

    attribute: str  # "race" or "gender"
    value: str

    def __post_init__(self):
        if self.attribute not in ("race", "gender"):
            raise ValueError(f"unknown attribute {self.attribute!r}")
        _check_label(self.attribute, self.value)

    @property
    def code(self) -> str:
        canon = CANONICAL_RACES if self.attribute == "race" else CANONICAL_GENDERS
        if self.value in canon:
            return self.value
        return f"{self.attribute}={self.value}"

    def contains(self, group: DemographicGroup) -> bool:
        return getattr(group, self.attribute) == self.value

    def __str__(self):
        return self.code


GroupKey = Union[DemographicGroup, MarginalGroup]

COMPOSITES = tuple(DemographicGroup(r, g) for r in CANONICAL_RACES for g in CANONICAL_GENDERS)
MARGINALS = tuple(MarginalGroup("race", r) for r in CANONICAL_RACES) + tuple(
    MarginalGroup("gender", g) for g in CANONICAL_GENDERS
)


def parse_group(code: str) -> GroupKey:
    """Parse ``BF``, ``B``, ``F``, ``race=X``, ``gender=Y`` or ``X/Y``."""
    code = code.strip()
    if "=" in code:
        attr, _, value = code.partition("=")
        try:
            return MarginalGroup(attr.strip(), value.strip())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if "/" in code:
        race, _, gender = code.partition("/")
        try:
            return DemographicGroup(race, gender)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    if code in CANONICAL_RACES:
        return MarginalGroup("race", code)
    if code in CANONICAL_GENDERS:
        return MarginalGroup("gender", code)
    if len(code) == 2:
        return DemographicGroup(code[0], code[1])
    raise ConfigError(f"cannot parse group {code!r}")


def parse_pairs(text: str) -> list[tuple[GroupKey, GroupKey]]:
    """Parse ``"WF:WM,BF:BM"`` into group pairs."""
    pairs = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        left, sep, right = item.partition(":")
        if not sep:
            raise ConfigError(f"pair {item!r} must look like A:B")
        pairs.append((parse_group(left), parse_group(right)))
    return pairs


# the six pairwise comparisons reported for verification
DEFAULT_PAIRS = parse_pairs("WF:WM,BF:BM,WM:BM,WF:BF,F:M,B:W")


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    group: DemographicGroup


@dataclass(frozen=True)
class ComparisonRecord:
    probe_subject: str
    probe_sample: str
    gallery_subject: str
    gallery_sample: str
    score: float
    mated: bool = field(default=None)  # derived when omitted

    def __post_init__(self):
        same = self.probe_subject == self.gallery_subject
        if self.mated is None:
            object.__setattr__(self, "mated", same)
        elif bool(self.mated) != same:
            raise DataError(
                f"mated flag {self.mated} inconsistent with subjects "
                f"{self.probe_subject!r} / {self.gallery_subject!r}"
            )
        if not math.isfinite(self.score):
            raise DataError(f"non-finite score {self.score!r}")
        if same and self.probe_sample == self.gallery_sample:
            raise DataError(f"self-comparison of sample {self.probe_sample!r}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class ScoreSet:
    """Immutable column store of comparisons plus the subject table.

    Comparisons are attributed to the group of their probe subject.
    """

    def __init__(
        self,
        subjects: Mapping[str, DemographicGroup],
        probe_subject: Sequence[str],
        probe_sample: Sequence[str],
        gallery_subject: Sequence[str],
        gallery_sample: Sequence[str],
        score: Sequence[float],
    ):
        self._subjects = dict(subjects)
        self.probe_subject = _frozen(np.asarray(probe_subject, dtype=str).reshape(-1))
        self.probe_sample = _frozen(np.asarray(probe_sample, dtype=str).reshape(-1))
        self.gallery_subject = _frozen(np.asarray(gallery_subject, dtype=str).reshape(-1))
        self.gallery_sample = _frozen(np.asarray(gallery_sample, dtype=str).reshape(-1))
        self.score = _frozen(np.array(score, dtype=np.float64).reshape(-1))
        n = len(self.score)
        for name in ("probe_subject", "probe_sample", "gallery_subject", "gallery_sample"):
            if len(getattr(self, name)) != n:
                raise DataError(f"column {name} has {len(getattr(self, name))} rows, expected {n}")
        self._validate()

    def _validate(self):
        if not np.all(np.isfinite(self.score)):
            bad = int(np.flatnonzero(~np.isfinite(self.score))[0])
            raise DataError(f"comparison {bad} has non-finite score")
        known = np.array(list(self._subjects), dtype=str)
        for col in ("probe_subject", "gallery_subject"):
            values = getattr(self, col)
            missing = ~np.isin(values, known) if len(values) else np.zeros(0, bool)
            if missing.any():
                raise DataError(f"{col} {values[missing][0]!r} not in subject table")
        selfcmp = self.mated & (self.probe_sample == self.gallery_sample)
        if selfcmp.any():
            raise DataError(f"self-comparison of sample {self.probe_sample[selfcmp][0]!r}")

    @classmethod
    def from_records(
        cls, subjects: Iterable[SubjectRecord], comparisons: Iterable[ComparisonRecord]
    ) -> ScoreSet:
        table = {}
        for rec in subjects:
            if rec.subject_id in table:
                raise DataError(f"duplicate subject_id {rec.subject_id!r}")
            table[rec.subject_id] = rec.group
        comps = list(comparisons)
        return cls(
            table,
            [c.probe_subject for c in comps],
            [c.probe_sample for c in comps],
            [c.gallery_subject for c in comps],
            [c.gallery_sample for c in comps],
            [c.score for c in comps],
        )

    @classmethod
    def empty(cls, subjects: Mapping[str, DemographicGroup] | None = None) -> ScoreSet:
        return cls(subjects or {}, [], [], [], [], [])

    @property
    def subjects(self) -> Mapping[str, DemographicGroup]:
        return dict(self._subjects)

    def __len__(self):
        return len(self.score)

    def __eq__(self, other):
        if not isinstance(other, ScoreSet):
            return NotImplemented
        return (
            self._subjects == other._subjects
            and all(
                np.array_equal(getattr(self, c), getattr(other, c))
                for c in ("probe_subject", "probe_sample", "gallery_subject", "gallery_sample", "score")
            )
        )

    __hash__ = None

    def __repr__(self):
        return f"ScoreSet(subjects={len(self._subjects)}, comparisons={len(self)}, mated={self.n_mated})"

    @cached_property
    def mated(self) -> np.ndarray:
        return _frozen(self.probe_subject == self.gallery_subject)

    @property
    def n_mated(self) -> int:
        return int(self.mated.sum())

    @cached_property
    def subject_ids(self) -> tuple[str, ...]:
        return tuple(self._subjects)

    @cached_property
    def probe_index(self) -> np.ndarray:
        """Index of each comparison's probe subject into :attr:`subject_ids`."""
        lookup = {sid: i for i, sid in enumerate(self.subject_ids)}
        return _frozen(np.fromiter((lookup[s] for s in self.probe_subject), dtype=np.int64,
                                   count=len(self)))

    @cached_property
    def probe_groups(self) -> tuple[DemographicGroup, ...]:
        return tuple(self._subjects[s] for s in self.subject_ids)

    def genuine_scores(self) -> np.ndarray:
        return self.score[self.mated]

    def impostor_scores(self) -> np.ndarray:
        return self.score[~self.mated]

    def records(self) -> Iterator[ComparisonRecord]:
        for i in range(len(self)):
            yield ComparisonRecord(
                str(self.probe_subject[i]), str(self.probe_sample[i]),
                str(self.gallery_subject[i]), str(self.gallery_sample[i]),
                float(self.score[i]), bool(self.mated[i]),
            )

    def take(self, indices: np.ndarray) -> ScoreSet:
        """Comparisons at ``indices`` (repeats allowed), same subject table."""
        idx = np.asarray(indices, dtype=np.int64)
        return ScoreSet(
            self._subjects,
            self.probe_subject[idx], self.probe_sample[idx],
            self.gallery_subject[idx], self.gallery_sample[idx],
            self.score[idx],
        )

    def with_scores(self, score: np.ndarray) -> ScoreSet:
        return ScoreSet(self._subjects, self.probe_subject, self.probe_sample,
                        self.gallery_subject, self.gallery_sample, score)

    def group_mask(self, key: GroupKey) -> np.ndarray:
        """Boolean mask of comparisons whose probe subject belongs to ``key``."""
        member = np.array([key.contains(g) for g in self.probe_groups], dtype=bool)
        if len(self) == 0:
            return np.zeros(0, dtype=bool)
        return member[self.probe_index]


@dataclass(frozen=True)
class GroupPartition:
    groups: dict[GroupKey, ScoreSet]
    unlabeled: ScoreSet

    def __getitem__(self, key):
        if isinstance(key, str):
            key = parse_group(key)
        return self.groups[key]

    def __contains__(self, key):
        if isinstance(key, str):
            key = parse_group(key)
        return key in self.groups

    def __len__(self):
        return len(self.groups)

    def keys(self):
        return self.groups.keys()

    def items(self):
        return self.groups.items()


def partition_by_group(
    scores: ScoreSet, marginals: bool = False, canonical_only: bool = True
) -> GroupPartition:
    """Split comparisons by the probe subject's group.

    Composite partitions are disjoint. With ``marginals`` the B, W, F, M unions
    are added. Comparisons whose probe has a non-canonical label go to
    ``unlabeled`` (or get their own partition when ``canonical_only`` is off).
    """
    groups: dict[GroupKey, ScoreSet] = {}
    if len(scores) == 0:
        return GroupPartition(groups, scores)
    present = sorted({scores.probe_groups[i] for i in np.unique(scores.probe_index)})
    labelled = np.zeros(len(scores), dtype=bool)
    for g in present:
        if canonical_only and not g.canonical:
            continue
        mask = scores.group_mask(g)
        labelled |= mask
        groups[g] = scores.take(np.flatnonzero(mask))
    if marginals:
        for m in MARGINALS:
            mask = scores.group_mask(m) & labelled
            if mask.any():
                groups[m] = scores.take(np.flatnonzero(mask))
    return GroupPartition(groups, scores.take(np.flatnonzero(~labelled)))


@dataclass(frozen=True)
class RatePoint:
    threshold: float
    tmr: float | None
    fnmr: float | None
    fmr: float | None
    n_genuine: int
    n_impostor: int
    n_genuine_match: int
    n_impostor_match: int


def _rate(count: int, total: int) -> float | None:
    return count / total if total else None


def rates_from_counts(threshold, n_gen, n_gen_match, n_imp, n_imp_match) -> RatePoint:
    tmr = _rate(n_gen_match, n_gen)
    return RatePoint(
        threshold=float(threshold),
        tmr=tmr,
        fnmr=None if tmr is None else 1.0 - tmr,
        fmr=_rate(n_imp_match, n_imp),
        n_genuine=int(n_gen), n_impostor=int(n_imp),
        n_genuine_match=int(n_gen_match), n_impostor_match=int(n_imp_match),
    )


def verification_rates(scores: ScoreSet, threshold: float) -> RatePoint:
    if len(scores) == 0:
        raise DataError("empty score set")
    gen = scores.genuine_scores()
    imp = scores.impostor_scores()
    return rates_from_counts(
        threshold, len(gen), int((gen >= threshold).sum()), len(imp), int((imp >= threshold).sum())
    )


def _count_at_least(sorted_scores: np.ndarray, thresholds: np.ndarray) -> np.ndarray:
    return len(sorted_scores) - np.searchsorted(sorted_scores, thresholds, side="left")


def roc_curve(scores: ScoreSet) -> list[RatePoint]:
    """Empirical step ROC, thresholds descending.

    Thresholds are the distinct observed scores, preceded by a point just above
    the maximum (tmr = fmr = 0) and followed by ``-inf`` (tmr = fmr = 1).
    """
    gen = np.sort(scores.genuine_scores())
    imp = np.sort(scores.impostor_scores())
    if len(gen) == 0 or len(imp) == 0:
        raise DataError("ROC needs both genuine and impostor comparisons")
    distinct = np.unique(scores.score)[::-1]
    top = math.nextafter(float(distinct[0]), math.inf)
    thresholds = np.concatenate([[top], distinct, [-math.inf]])
    g = _count_at_least(gen, thresholds)
    i = _count_at_least(imp, thresholds)
    return [
        rates_from_counts(t, len(gen), int(gc), len(imp), int(ic))
        for t, gc, ic in zip(thresholds, g, i)
    ]


@dataclass(frozen=True)
class FmrCalibration:
    threshold: float
    achieved_fmr: float
    target_fmr: float
    n_impostor: int


def calibrate_threshold_fmr(impostor_scores: Sequence[float], target_fmr: float) -> FmrCalibration:
    """Smallest candidate threshold whose FMR does not exceed ``target_fmr``.

    Candidates are the observed scores plus one sentinel just above the
    maximum, where FMR is 0.
    """
    imp = np.sort(np.asarray(impostor_scores, dtype=np.float64))
    if len(imp) == 0:
        raise DataError("no impostor scores to calibrate on")
    if not 0.0 < target_fmr < 1.0:
        raise ConfigError(f"target FMR must lie in (0, 1), got {target_fmr}")
    if not np.all(np.isfinite(imp)):
        raise DataError("non-finite impostor score")
    distinct = np.unique(imp)
    candidates = np.append(distinct, math.nextafter(float(distinct[-1]), math.inf))
    fmr = _count_at_least(imp, candidates) / len(imp)
    first = int(np.argmax(fmr <= target_fmr))
    return FmrCalibration(float(candidates[first]), float(fmr[first]), float(target_fmr), len(imp))
