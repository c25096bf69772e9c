"""Open-set identification: galleries, exhaustive rank-R search, FPIR/FNIR/TPIR.

Candidates are ordered by score descending; equal scores are ordered by
gallery sample id ascending.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Protocol, Sequence

import numpy as np

from . import kernels, rng
from .core import GroupKey
from .errors import ConfigError, DataError, NumericError
from .resample import BootstrapConfig, BootstrapEstimate, Metric, bootstrap_units


@dataclass(frozen=True)
class Probe:
    sample_id: str
    subject_id: str


class Gallery:
    """One enrolled sample per identity, kept sorted by sample id."""

    def __init__(self, entries: Mapping[str, str]):
        items = sorted(entries.items())
        self.sample_ids = tuple(s for s, _ in items)
        self.subject_ids = tuple(p for _, p in items)
        self._subject_set = frozenset(self.subject_ids)
        if len(self._subject_set) != len(self.subject_ids):
            seen = set()
            for p in self.subject_ids:
                if p in seen:
                    raise DataError(f"identity {p!r} enrolled more than once")
                seen.add(p)

    @property
    def entries(self) -> dict[str, str]:
        return dict(zip(self.sample_ids, self.subject_ids))

    def __len__(self):
        return len(self.sample_ids)

    def __contains__(self, subject_id):
        return subject_id in self._subject_set


@dataclass(frozen=True)
class ProbeCohort:
    mated: tuple[Probe, ...]
    nonmated: tuple[Probe, ...]
    group: GroupKey | None = None

    def __post_init__(self):
        g = {p.subject_id for p in self.mated}
        n = {p.subject_id for p in self.nonmated}
        if g & n:
            raise DataError(f"subjects in both mated and non-mated cohorts: {sorted(g & n)[:3]}")

    def check(self, gallery: Gallery) -> None:
        for p in self.mated:
            if p.subject_id not in gallery:
                raise DataError(f"mated probe subject {p.subject_id!r} has no gallery mate")
        for p in self.nonmated:
            if p.subject_id in gallery:
                raise DataError(f"non-mated probe subject {p.subject_id!r} is enrolled")


class ScoreSource(Protocol):
    def score_matrix(self, probe_samples: Sequence[str], gallery_samples: Sequence[str]) -> np.ndarray:
        """Similarity scores, shape ``(len(probe_samples), len(gallery_samples))``."""


class ScoreTable:
    """Precomputed (probe sample, gallery sample) -> score lookup."""

    def __init__(self, scores: Mapping[tuple[str, str], float]):
        self._scores = dict(scores)

    @classmethod
    def from_columns(cls, probe_samples, gallery_samples, scores) -> ScoreTable:
        table = {}
        for p, g, s in zip(probe_samples, gallery_samples, scores):
            table[(str(p), str(g))] = float(s)
        return cls(table)

    def __len__(self):
        return len(self._scores)

    def score_matrix(self, probe_samples, gallery_samples):
        out = np.empty((len(probe_samples), len(gallery_samples)), dtype=np.float64)
        for i, p in enumerate(probe_samples):
            for j, g in enumerate(gallery_samples):
                try:
                    out[i, j] = self._scores[(p, g)]
                except KeyError:
                    raise DataError(f"score table has no entry for probe {p!r} vs gallery {g!r}") from None
        return out


class EmbeddingStore:
    """Fixed-length sample embeddings compared by inner product."""

    def __init__(self, sample_ids: Sequence[str], subject_ids: Sequence[str], vectors):
        self.sample_ids = tuple(str(s) for s in sample_ids)
        self.subject_ids = tuple(str(s) for s in subject_ids)
        vecs = np.array(vectors, dtype=np.float64)
        if vecs.ndim != 2 or len(vecs) != len(self.sample_ids) or len(self.subject_ids) != len(vecs):
            raise DataError("embedding store needs one vector and one subject per sample")
        if not np.all(np.isfinite(vecs)):
            raise DataError("embedding store contains non-finite values")
        vecs.flags.writeable = False
        self.vectors = vecs
        self._index = {s: i for i, s in enumerate(self.sample_ids)}
        if len(self._index) != len(self.sample_ids):
            raise DataError("duplicate sample_id in embedding store")

    def __len__(self):
        return len(self.sample_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def sample_subjects(self) -> dict[str, str]:
        return dict(zip(self.sample_ids, self.subject_ids))

    def rows(self, samples: Sequence[str]) -> np.ndarray:
        try:
            return np.fromiter((self._index[s] for s in samples), dtype=np.int64, count=len(samples))
        except KeyError as exc:
            raise DataError(f"sample {exc.args[0]!r} not in embedding store") from None

    def score_matrix(self, probe_samples, gallery_samples):
        return self.vectors[self.rows(probe_samples)] @ self.vectors[self.rows(gallery_samples)].T


@dataclass(frozen=True)
class Candidate:
    subject_id: str
    sample_id: str
    score: float


@dataclass(frozen=True)
class SearchOutcome:
    probe: str
    probe_subject: str
    candidates: tuple[Candidate, ...]
    rank_cutoff: int

    @property
    def top_score(self) -> float:
        return self.candidates[0].score if self.candidates else -math.inf

    @property
    def mate_rank(self) -> int | None:
        """1-based rank of the probe's mate among the candidates, if present."""
        for i, c in enumerate(self.candidates):
            if c.subject_id == self.probe_subject:
                return i + 1
        return None

    @property
    def mate_score(self) -> float | None:
        rank = self.mate_rank
        return None if rank is None else self.candidates[rank - 1].score


def search_many(
    probes: Sequence[Probe],
    gallery: Gallery,
    source: ScoreSource,
    rank: int,
    *,
    chunk: int = 256,
) -> list[SearchOutcome]:
    """Exhaustive top-``rank`` search of every probe against the whole gallery."""
    if rank < 1:
        raise ConfigError(f"rank cutoff must be >= 1, got {rank}")
    if len(gallery) == 0:
        raise DataError("cannot search an empty gallery")
    outcomes = []
    for start in range(0, len(probes), chunk):
        block = probes[start:start + chunk]
        mat = np.asarray(source.score_matrix([p.sample_id for p in block], gallery.sample_ids),
                         dtype=np.float64)
        if not np.all(np.isfinite(mat)):
            raise DataError("score source returned non-finite scores")
        top = kernels.top_r(mat, rank)
        for i, p in enumerate(block):
            cands = tuple(
                Candidate(gallery.subject_ids[j], gallery.sample_ids[j], float(mat[i, j]))
                for j in top[i]
            )
            outcomes.append(SearchOutcome(p.sample_id, p.subject_id, cands, rank))
    return outcomes


def search(probe: Probe, gallery: Gallery, source: ScoreSource, rank: int) -> SearchOutcome:
    return search_many([probe], gallery, source, rank)[0]


def _hits_fpir(outcomes, threshold):
    return np.array([o.top_score >= threshold for o in outcomes], dtype=bool)


def _fails_fnir(outcomes, threshold, rank):
    out = np.empty(len(outcomes), dtype=bool)
    for i, o in enumerate(outcomes):
        if rank > o.rank_cutoff and len(o.candidates) == o.rank_cutoff:
            raise ConfigError(f"rank {rank} exceeds the search depth {o.rank_cutoff}")
        r = o.mate_rank
        out[i] = r is None or r > rank or o.candidates[r - 1].score < threshold
    return out


def _fails_rank(outcomes, rank):
    return _fails_fnir(outcomes, -math.inf, rank)


def fpir(outcomes: Sequence[SearchOutcome], threshold: float) -> float | None:
    """Fraction of non-mated searches whose best candidate scores >= threshold.

    The top candidate is the maximum, so this equals "any candidate at or
    above threshold". ``None`` when there are no searches.
    """
    if not outcomes:
        return None
    return int(_hits_fpir(outcomes, threshold).sum()) / len(outcomes)


def fnir(outcomes: Sequence[SearchOutcome], threshold: float, rank: int | None = None) -> float | None:
    """Fraction of mated searches whose mate is outside the top ``rank`` or below threshold."""
    if not outcomes:
        return None
    rank = rank or outcomes[0].rank_cutoff
    return int(_fails_fnir(outcomes, threshold, rank).sum()) / len(outcomes)


def tpir(outcomes: Sequence[SearchOutcome], rank: int | None = None) -> float | None:
    """Closed-set rate: fraction of mated searches with the mate in the top ``rank``."""
    if not outcomes:
        return None
    rank = rank or outcomes[0].rank_cutoff
    return 1.0 - int(_fails_rank(outcomes, rank).sum()) / len(outcomes)


@dataclass(frozen=True)
class FnirCalibration:
    threshold: float
    achieved_fnir: float
    target_fnir: float
    rank_floor: float
    rank: int
    n_searches: int


def calibrate_threshold_fnir(
    outcomes: Sequence[SearchOutcome], target_fnir: float, rank: int | None = None
) -> FnirCalibration:
    """Largest threshold whose FNIR on ``outcomes`` is at most ``target_fnir``.

    Candidates are the observed in-rank mate scores plus ``+inf``. Searches
    that fail on rank alone set a floor no threshold can go below.
    """
    if not outcomes:
        raise DataError("no mated searches to calibrate on")
    if not 0.0 <= target_fnir <= 1.0:
        raise ConfigError(f"target FNIR must lie in [0, 1], got {target_fnir}")
    rank = rank or outcomes[0].rank_cutoff
    n = len(outcomes)
    rank_fail = _fails_rank(outcomes, rank)
    floor = int(rank_fail.sum()) / n
    # failures allowed in total; tolerance guards products like 0.1 * 10
    allowed = math.floor(target_fnir * n + 1e-9) - int(rank_fail.sum())
    if allowed < 0:
        raise NumericError(
            f"target FNIR {target_fnir} is below the rank-{rank} failure floor {floor}"
        )
    mate_scores = np.sort([o.mate_score for o, f in zip(outcomes, rank_fail) if not f])
    if allowed >= len(mate_scores):
        threshold = math.inf
    else:
        threshold = float(mate_scores[allowed])
    return FnirCalibration(threshold, fnir(outcomes, threshold, rank), float(target_fnir),
                           floor, rank, n)


def default_samples(subject_id: str) -> tuple[str, str]:
    return (f"{subject_id}_0", f"{subject_id}_1")


def build_gallery(
    distractors: Sequence[str],
    cohort_groups: Mapping[GroupKey, Sequence[str]],
    audited_group: GroupKey,
    n_mates: int,
    *,
    per_group: int | None = None,
    samples: Mapping[str, Sequence[str]] | None = None,
    seed: int = 0,
) -> tuple[Gallery, ProbeCohort]:
    """Gallery and probe cohort for auditing ``audited_group``.

    Every cohort group is subsampled (seeded) to ``per_group`` subjects, the
    smallest group size by default. All sampled subjects of the other groups
    are enrolled with their first sample; the first ``n_mates`` sampled
    subjects of the audited group are enrolled too and probe with their second
    sample, the rest form the non-mated cohort. Distractors are unlabelled
    identities enrolled with their first sample.

    ``samples`` maps a subject to its ordered sample ids; subjects missing
    from it use ``<subject>_0`` / ``<subject>_1``.
    """
    if audited_group not in cohort_groups:
        raise ConfigError(f"audited group {audited_group} not among cohort groups")
    if n_mates < 0:
        raise ConfigError("n_mates must be >= 0")
    samples = samples or {}

    def sample_ids(sid):
        s = samples.get(sid)
        return tuple(s) if s else default_samples(sid)

    seen: dict[str, str] = {}
    for g, members in cohort_groups.items():
        for sid in members:
            if sid in seen:
                raise DataError(f"subject {sid!r} listed in groups {seen[sid]} and {g}")
            seen[sid] = str(g)
    overlap = [d for d in distractors if d in seen]
    if overlap:
        raise DataError(f"distractors overlap cohort subjects: {overlap[:3]}")
    if per_group is None:
        per_group = min(len(m) for m in cohort_groups.values())
    if per_group > min(len(m) for m in cohort_groups.values()):
        small = min(cohort_groups, key=lambda g: len(cohort_groups[g]))
        raise DataError(
            f"group {small} has {len(cohort_groups[small])} subjects, fewer than per_group={per_group}"
        )
    if per_group < n_mates + 1:
        raise DataError(f"audited group needs at least n_mates + 1 = {n_mates + 1} subjects, got {per_group}")

    entries: dict[str, str] = {}

    def enroll(sid):
        s = sample_ids(sid)[0]
        if s in entries:
            raise DataError(f"gallery sample id {s!r} used twice")
        entries[s] = sid

    for d in distractors:
        enroll(d)
    ordered = sorted(cohort_groups, key=lambda g: g.code)
    mated, nonmated = [], []
    for gi, g in enumerate(ordered):
        members = list(cohort_groups[g])
        stream = rng.Stream(seed, rng.stream_id(rng.COHORT, gi))
        picked = [members[i] for i in rng.sample_without_replacement(stream, len(members), per_group)]
        if g == audited_group:
            for sid in picked[:n_mates]:
                ids = sample_ids(sid)
                if len(ids) < 2:
                    raise DataError(f"mated subject {sid!r} needs two samples")
                enroll(sid)
                mated.append(Probe(ids[1], sid))
            for sid in picked[n_mates:]:
                ids = sample_ids(sid)
                nonmated.append(Probe(ids[1] if len(ids) > 1 else ids[0], sid))
        else:
            for sid in picked:
                enroll(sid)
    gallery = Gallery(entries)
    cohort = ProbeCohort(tuple(mated), tuple(nonmated), audited_group)
    cohort.check(gallery)
    return gallery, cohort


def bootstrap_identification(
    outcomes: Sequence[SearchOutcome],
    metric: Metric | str,
    threshold: float,
    config: BootstrapConfig,
    *,
    rank: int | None = None,
    group: GroupKey | None = None,
    workers: int | None = None,
) -> BootstrapEstimate:
    """Bootstrap FPIR / FNIR / TPIR by resampling searches with replacement."""
    metric = Metric(metric)
    if not outcomes:
        raise DataError(f"no searches for {metric.value}")
    rank = rank or outcomes[0].rank_cutoff
    if metric is Metric.FPIR:
        flags = _hits_fpir(outcomes, threshold)
    elif metric is Metric.FNIR:
        flags = _fails_fnir(outcomes, threshold, rank)
    elif metric is Metric.TPIR:
        flags = ~_fails_rank(outcomes, rank)
    else:
        raise ConfigError("TMR is a verification metric")
    flags = flags.astype(np.int64)

    def stat(counts):
        total = int(counts.sum())
        return int(counts @ flags) / total if total else None

    reps = bootstrap_units(len(outcomes), stat, config, workers=workers, label=metric.value)
    return BootstrapEstimate.from_replicates(group, metric, reps, config)


@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    fpir: float | None
    fnir: float | None


def sweep(
    mated: Sequence[SearchOutcome],
    nonmated: Sequence[SearchOutcome],
    thresholds: Iterable[float],
    rank: int | None = None,
) -> list[SweepPoint]:
    """FPIR and FNIR over a threshold grid, ascending."""
    return [SweepPoint(float(t), fpir(nonmated, t), fnir(mated, t, rank) if mated else None)
            for t in sorted(thresholds)]
