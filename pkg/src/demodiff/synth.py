"""Synthetic demographic score sets, embeddings and quality scores.

All parameters are user-supplied; the defaults are plausible for a [0, 1]
similarity score and carry no empirical meaning.

Layout of a generated subject: sample ``_0`` is the clean reference
impression, samples ``_1 .. _{s-1}`` are probe impressions. Each probe
impression is independently an outlier with probability
``outlier_fraction``; its mated score against the reference then comes from
``outlier_genuine`` and, with ``quality_outlier_link``, its quality from
``outlier_quality``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .core import DemographicGroup, ScoreSet
from .errors import ConfigError
from .openset import EmbeddingStore

GENERATOR_VERSION = "demodiff.synth/1"
MAX_REJECTION_ROUNDS = 1000


@dataclass(frozen=True)
class GroupScoreModel:
    group: DemographicGroup
    n_subjects: int = 100
    samples_per_subject: int = 3
    genuine: tuple[float, float] = (0.85, 0.05)
    impostor: tuple[float, float] = (0.30, 0.08)
    outlier_fraction: float = 0.0
    outlier_genuine: tuple[float, float] = (0.40, 0.10)
    quality: tuple[float, float] = (60.0, 12.0)
    outlier_quality: tuple[float, float] = (25.0, 8.0)
    quality_outlier_link: bool = True
    impostors_per_subject: int = 4
    score_range: tuple[float, float] = (0.0, 1.0)
    embedding_noise: float = 0.35
    outlier_embedding_noise: float = 4.0

    def __post_init__(self):
        if isinstance(self.group, (list, tuple)):
            object.__setattr__(self, "group", DemographicGroup(*self.group))
        for name in ("genuine", "impostor", "outlier_genuine", "quality", "outlier_quality",
                     "score_range"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        problems = []
        lo, hi = self.score_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            problems.append(f"score_range={self.score_range} must be finite and increasing")
        if self.n_subjects < 2:
            problems.append(f"n_subjects={self.n_subjects} must be >= 2")
        if self.samples_per_subject < 2:
            problems.append(f"samples_per_subject={self.samples_per_subject} must be >= 2")
        if not 0.0 <= self.outlier_fraction < 1.0:
            problems.append(f"outlier_fraction={self.outlier_fraction} must lie in [0, 1)")
        for name in ("genuine", "impostor", "outlier_genuine", "quality", "outlier_quality"):
            mean, std = getattr(self, name)
            if not (math.isfinite(mean) and math.isfinite(std) and std >= 0):
                problems.append(f"{name}={getattr(self, name)} needs finite mean and std >= 0")
        if self.impostors_per_subject < 0:
            problems.append("impostors_per_subject must be >= 0")
        if self.embedding_noise < 0 or self.outlier_embedding_noise < 0:
            problems.append("embedding noise levels must be >= 0")
        if problems:
            raise ConfigError(f"invalid model for group {self.group}: " + "; ".join(problems))

    def as_dict(self) -> dict:
        d = asdict(self)
        d["group"] = [self.group.race, self.group.gender]
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> GroupScoreModel:
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown model fields: {sorted(extra)}")
        return cls(**d)


def subject_ids_for(model: GroupScoreModel) -> list[str]:
    return [f"{model.group.code}-{i:05d}" for i in range(model.n_subjects)]


def truncated_normal(gen: np.random.Generator, mean: float, std: float, lo: float, hi: float,
                     size) -> np.ndarray:
    """Gaussian draws restricted to [lo, hi] by redrawing out-of-range values."""
    out = gen.normal(mean, std, size=size)
    bad = (out < lo) | (out > hi)
    rounds = 0
    while bad.any():
        rounds += 1
        if rounds > MAX_REJECTION_ROUNDS:
            raise ConfigError(f"N({mean}, {std}) has too little mass in [{lo}, {hi}]")
        out[bad] = gen.normal(mean, std, size=int(bad.sum()))
        bad = (out < lo) | (out > hi)
    return out


@dataclass(frozen=True)
class SynthDataset:
    score_set: ScoreSet
    quality: dict[str, float]
    outlier_samples: frozenset[str]
    provenance: dict = field(compare=False)


def _check_models(models):
    if not models:
        raise ConfigError("need at least one group model")
    groups = [m.group for m in models]
    if len(set(groups)) != len(groups):
        raise ConfigError("duplicate group models")


def generate(models: Sequence[GroupScoreModel], seed: int = 0) -> SynthDataset:
    """Labelled score set with mated, sampled non-mated comparisons and quality."""
    models = list(models)
    _check_models(models)
    ids = [subject_ids_for(m) for m in models]
    all_ids = [s for group_ids in ids for s in group_ids]
    offsets = np.cumsum([0] + [m.n_subjects for m in models])
    subjects = {sid: m.group for m, group_ids in zip(models, ids) for sid in group_ids}
    spp = np.repeat([m.samples_per_subject for m in models], [m.n_subjects for m in models])

    cols = {k: [] for k in ("ps", "psa", "gs", "gsa", "score")}
    quality: dict[str, float] = {}
    outliers: set[str] = set()
    for gi, (model, group_ids) in enumerate(zip(models, ids)):
        gen = rng.Stream(seed, rng.stream_id(rng.SYNTH_SCORES, gi)).numpy_generator()
        n, s = model.n_subjects, model.samples_per_subject
        lo, hi = model.score_range
        is_out = gen.random((n, s - 1)) < model.outlier_fraction
        good = truncated_normal(gen, *model.genuine, lo, hi, (n, s - 1))
        bad = truncated_normal(gen, *model.outlier_genuine, lo, hi, (n, s - 1))
        mated_scores = np.where(is_out, bad, good)
        q_good = truncated_normal(gen, *model.quality, 0.0, 100.0, (n, s))
        q_bad = truncated_normal(gen, *model.outlier_quality, 0.0, 100.0, (n, s - 1))
        for i, sid in enumerate(group_ids):
            quality[f"{sid}_0"] = float(q_good[i, 0])
            for j in range(1, s):
                sample = f"{sid}_{j}"
                cols["ps"].append(sid)
                cols["psa"].append(sample)
                cols["gs"].append(sid)
                cols["gsa"].append(f"{sid}_0")
                cols["score"].append(float(mated_scores[i, j - 1]))
                out = bool(is_out[i, j - 1])
                if out:
                    outliers.add(sample)
                linked = out and model.quality_outlier_link
                quality[sample] = float(q_bad[i, j - 1] if linked else q_good[i, j])

        budget = n * model.impostors_per_subject
        if budget and len(all_ids) > 1:
            probe_subj = gen.integers(0, n, size=budget)
            probe_samp = gen.integers(0, s, size=budget)
            # other-subject offset keeps the gallery subject distinct from the probe
            shift = gen.integers(1, len(all_ids), size=budget)
            gal_samp = gen.random(size=budget)
            imp = truncated_normal(gen, *model.impostor, lo, hi, budget)
            seen = set()
            for k in range(budget):
                pi = offsets[gi] + probe_subj[k]
                gidx = (pi + shift[k]) % len(all_ids)
                gsid = all_ids[gidx]
                key = (f"{all_ids[pi]}_{probe_samp[k]}", f"{gsid}_{int(gal_samp[k] * spp[gidx])}")
                if key in seen:
                    continue
                seen.add(key)
                cols["ps"].append(all_ids[pi])
                cols["psa"].append(key[0])
                cols["gs"].append(gsid)
                cols["gsa"].append(key[1])
                cols["score"].append(float(imp[k]))

    score_set = ScoreSet(subjects, cols["ps"], cols["psa"], cols["gs"], cols["gsa"], cols["score"])
    provenance = {
        "generator": GENERATOR_VERSION,
        "seed": int(seed),
        "models": [m.as_dict() for m in models],
    }
    return SynthDataset(score_set, quality, frozenset(outliers), provenance)


def regenerate(provenance: dict) -> SynthDataset:
    if provenance.get("generator") != GENERATOR_VERSION:
        raise ConfigError(f"unknown generator {provenance.get('generator')!r}")
    models = [GroupScoreModel.from_dict(d) for d in provenance["models"]]
    return generate(models, provenance["seed"])


@dataclass(frozen=True)
class SynthEmbeddings:
    store: EmbeddingStore
    subjects: dict[str, DemographicGroup]
    distractors: tuple[str, ...]
    outlier_samples: frozenset[str]
    provenance: dict = field(compare=False)

    def cohort_groups(self) -> dict[DemographicGroup, list[str]]:
        groups: dict[DemographicGroup, list[str]] = {}
        for sid, g in self.subjects.items():
            groups.setdefault(g, []).append(sid)
        return groups


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def generate_embeddings(
    models: Sequence[GroupScoreModel], seed: int = 0, dim: int = 192, n_distractors: int = 0
) -> SynthEmbeddings:
    """Unit-norm embeddings: each sample is its subject's centroid plus noise.

    Noise per coordinate has std ``noise / sqrt(dim)``, so ``noise`` is the
    expected norm of the perturbation. Distractors get one sample each and no
    demographic label.
    """
    models = list(models)
    _check_models(models)
    if dim < 2:
        raise ConfigError(f"embedding dimension must be >= 2, got {dim}")
    if n_distractors < 0:
        raise ConfigError("n_distractors must be >= 0")
    sample_ids, subject_of, vectors = [], [], []
    subjects: dict[str, DemographicGroup] = {}
    outliers: set[str] = set()
    for gi, model in enumerate(models):
        gen = rng.Stream(seed, rng.stream_id(rng.SYNTH_EMBEDDINGS, gi)).numpy_generator()
        n, s = model.n_subjects, model.samples_per_subject
        centroids = _unit(gen.normal(size=(n, dim)))
        noise = gen.normal(size=(n, s, dim)) / math.sqrt(dim)
        is_out = np.zeros((n, s), dtype=bool)
        is_out[:, 1:] = gen.random((n, s - 1)) < model.outlier_fraction
        scale = np.where(is_out, model.outlier_embedding_noise, model.embedding_noise)[..., None]
        vecs = _unit(centroids[:, None, :] + scale * noise)
        for i, sid in enumerate(subject_ids_for(model)):
            subjects[sid] = model.group
            for j in range(s):
                sample = f"{sid}_{j}"
                sample_ids.append(sample)
                subject_of.append(sid)
                vectors.append(vecs[i, j])
                if is_out[i, j]:
                    outliers.add(sample)
    distractors = tuple(f"D-{i:06d}" for i in range(n_distractors))
    if n_distractors:
        gen = rng.Stream(seed, rng.stream_id(rng.SYNTH_EMBEDDINGS, len(models))).numpy_generator()
        dvecs = _unit(gen.normal(size=(n_distractors, dim)))
        for d, v in zip(distractors, dvecs):
            sample_ids.append(f"{d}_0")
            subject_of.append(d)
            vectors.append(v)
    store = EmbeddingStore(sample_ids, subject_of, np.array(vectors).reshape(len(sample_ids), dim))
    provenance = {
        "generator": GENERATOR_VERSION,
        "seed": int(seed),
        "dim": int(dim),
        "n_distractors": int(n_distractors),
        "models": [m.as_dict() for m in models],
    }
    return SynthEmbeddings(store, subjects, distractors, frozenset(outliers), provenance)


def default_models(n_subjects: int = 100, **overrides) -> list[GroupScoreModel]:
    """One identical model per canonical composite group (BF, BM, WF, WM)."""
    from .core import COMPOSITES

    return [GroupScoreModel(g, n_subjects=n_subjects, **overrides) for g in COMPOSITES]
