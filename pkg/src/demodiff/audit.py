"""Audit pipelines: verification, open-set identification and summary-only runs.

Each pipeline returns an :class:`~demodiff.report.AuditReport`. Reports carry
no timing, paths or worker counts, so equal inputs give byte-identical JSON.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import openset
from .core import (DEFAULT_PAIRS, DemographicGroup, GroupKey, ScoreSet, calibrate_threshold_fmr,
                   roc_curve)
from .diagnostics import MODES as FLIP_MODES
from .diagnostics import flag_outliers, minimal_flips, quality_compare
from .errors import ConfigError, DataError, DegenerateStatisticError, DemodiffError
from .io import Dataset
from .report import SCHEMA_VERSION, AuditReport, real, result_dict
from .resample import BootstrapConfig, BootstrapEstimate, Metric, tmr_replicates
from .stats import (GroupSummary, ProportionSummary, anova_f_from_summaries,
                    two_prop_z, welch_t)

IDENT_DEFAULT_PAIRS = tuple(p for p in DEFAULT_PAIRS if all(isinstance(g, DemographicGroup) for g in p))
PERCENT = 100.0


@dataclass(frozen=True)
class AuditConfig:
    """Everything that determines an audit's output.

    Exactly one threshold source is allowed: a fixed ``threshold``, a
    ``target_fmr`` (verification) or a ``target_fnir`` with ``ref_group``
    (identification).
    """

    mode: str = "verify"
    threshold: float | None = None
    target_fmr: float | None = None
    target_fnir: float | None = None
    ref_group: GroupKey | None = None
    pairs: tuple[tuple[GroupKey, GroupKey], ...] | None = None
    alpha: float = 0.05
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    rank: int = 5
    n_mates: int | None = None
    per_group: int | None = None
    two_prop: bool = True
    flip_mode: str | None = "point_z"
    sweep_points: int = 50
    quality_equal_n: int | None = None
    quality_bins: int = 20

    def __post_init__(self):
        if self.mode not in ("verify", "ident", "summaries"):
            raise ConfigError(f"unknown audit mode {self.mode!r}")
        sources = [s for s in ("threshold", "target_fmr", "target_fnir") if getattr(self, s) is not None]
        if len(sources) > 1:
            raise ConfigError(f"give exactly one threshold source, got {', '.join(sources)}")
        if self.mode != "summaries" and not sources:
            raise ConfigError("a threshold source is required (threshold, target FMR or target FNIR)")
        if self.target_fmr is not None and self.mode != "verify":
            raise ConfigError("target FMR calibration applies to verification audits")
        if self.target_fnir is not None:
            if self.mode != "ident":
                raise ConfigError("target FNIR calibration applies to identification audits")
            if self.ref_group is None:
                raise ConfigError("target FNIR calibration needs a reference group")
        for name in ("target_fmr", "target_fnir"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.threshold is not None and math.isnan(self.threshold):
            raise ConfigError("threshold is NaN")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.rank < 1:
            raise ConfigError(f"rank must be >= 1, got {self.rank}")
        if self.flip_mode is not None and self.flip_mode not in FLIP_MODES:
            raise ConfigError(f"flip mode must be one of {FLIP_MODES}")
        if self.sweep_points < 2:
            raise ConfigError("sweep needs at least 2 points")
        if self.pairs is not None:
            object.__setattr__(self, "pairs", tuple(tuple(p) for p in self.pairs))
            for a, b in self.pairs:
                if a == b:
                    raise ConfigError(f"pair compares {a} with itself")

    def resolved_pairs(self) -> tuple[tuple[GroupKey, GroupKey], ...]:
        if self.pairs is not None:
            return self.pairs
        return IDENT_DEFAULT_PAIRS if self.mode == "ident" else DEFAULT_PAIRS

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "threshold": real(self.threshold),
            "target_fmr": self.target_fmr,
            "target_fnir": self.target_fnir,
            "ref_group": None if self.ref_group is None else self.ref_group.code,
            "pairs": [[a.code, b.code] for a, b in self.resolved_pairs()],
            "alpha": self.alpha,
            "bootstrap": self.bootstrap.as_dict(),
            "rank": self.rank,
            "n_mates": self.n_mates,
            "per_group": self.per_group,
            "two_prop": self.two_prop,
            "flip_mode": self.flip_mode,
            "sweep_points": self.sweep_points,
            "quality_equal_n": self.quality_equal_n,
            "quality_bins": self.quality_bins,
        }


@contextmanager
def _context(what: str):
    """Re-raise package errors with the group or pair being processed."""
    try:
        yield
    except DemodiffError as exc:
        raise type(exc)(f"{what}: {exc}") from exc


def _base(kind: str, config: AuditConfig, files) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": config.as_dict(),
        "inputs": [f.as_dict() for f in files],
        "warnings": _warnings(config),
    }


def _warnings(config: AuditConfig) -> list[str]:
    if config.bootstrap.m <= 10:
        return [f"only m={config.bootstrap.m} bootstrap replicates; standard deviations are coarse"]
    return []


def _estimate_row(est: BootstrapEstimate, point: float | None, n: int) -> dict:
    return {
        "group": "all" if est.group is None else est.group.code,
        "metric": est.metric.value,
        "mean": real(est.mean * PERCENT),
        "std": real(est.std * PERCENT),
        "m": len(est.replicates),
        "unit": "percent",
        "point": real(None if point is None else point * PERCENT),
        "n": int(n),
    }


def _welch_pairs(pairs, summaries: Mapping[GroupKey, GroupSummary], alpha: float) -> list[dict]:
    out = []
    for a, b in pairs:
        with _context(f"pair {a.code}/{b.code}"):
            res = welch_t(summaries[a], summaries[b], alpha, degenerate="flag")
        entry = {"pair": [a.code, b.code], "result": result_dict(res)}
        if res.degenerate:
            entry["note"] = "zero replicate variance in both groups"
        out.append(entry)
    return out


def _anova(groups: Sequence[GroupKey], summaries, alpha, pooled_mean=None) -> dict:
    codes = [g.code for g in groups]
    if len(groups) < 2:
        return {"groups": codes, "unweighted": None, "pooled": None, "pooled_grand_mean": None,
                "note": "fewer than two composite groups"}
    sums = [summaries[g] for g in groups]
    with _context("ANOVA"):
        unweighted = anova_f_from_summaries(sums, alpha)
        pooled = None if pooled_mean is None else anova_f_from_summaries(sums, alpha, pooled_mean)
    return {"groups": codes, "unweighted": result_dict(unweighted), "pooled": result_dict(pooled),
            "pooled_grand_mean": real(pooled_mean)}


def _check_pairs(pairs, available: set, what: str):
    for a, b in pairs:
        for g in (a, b):
            if g not in available:
                raise ConfigError(f"pair {a.code}/{b.code}: group {g.code} has no {what} in the data")


def _flip_row(rep) -> dict:
    return {
        "pair": [g.code for g in rep.pair],
        "mode": rep.mode,
        "status": rep.status,
        "flips_needed": rep.flips_needed,
        "flipped_group": None if rep.flipped_group is None else rep.flipped_group.code,
        "flipped_fraction": real(rep.flipped_fraction),
        "n_candidates": rep.n_candidates,
        "statistic_before": real(rep.test_before.statistic),
        "p_before": real(rep.test_before.p_value),
        "statistic_after": real(rep.test_after.statistic),
        "p_after": real(rep.test_after.p_value),
        "search": rep.search,
    }


def _quality_section(qc) -> dict:
    return {
        "equal_n": qc.equal_n,
        "n_unmapped": qc.n_unmapped,
        "summaries": [
            {"group": s.group.code, "n_samples": s.n_samples, "mean": s.mean, "median": s.median,
             "std": s.std, "bin_edges": list(s.bin_edges), "histogram": list(s.histogram)}
            for s in qc.summaries.values()
        ],
        "tests": [{"pair": [a.code, b.code], "result": result_dict(r)} for (a, b), r in qc.tests],
    }


def _composites(groups) -> list[DemographicGroup]:
    return sorted({g for g in groups if isinstance(g, DemographicGroup)}, key=lambda g: g.code)


def _verify_threshold(config: AuditConfig, scores: ScoreSet) -> tuple[float, dict]:
    if config.threshold is not None:
        t = float(config.threshold)
        return t, {"value": real(t), "source": "fixed", "target": None, "achieved": None, "ref_group": None}
    with _context("FMR calibration"):
        cal = calibrate_threshold_fmr(scores.impostor_scores(), config.target_fmr)
    return cal.threshold, {"value": real(cal.threshold), "source": "target_fmr",
                           "target": config.target_fmr, "achieved": cal.achieved_fmr, "ref_group": None}


def run_verification_audit(config: AuditConfig, data: Dataset, *, workers: int | None = None
                           ) -> AuditReport:
    """Bootstrap TMR per group, pairwise Welch tests, ANOVA and diagnostics."""
    if config.mode != "verify":
        raise ConfigError("verification audit needs mode='verify'")
    scores = data.scores
    if scores is None or len(scores) == 0:
        raise DataError("verification audit needs a non-empty score set")
    pairs = config.resolved_pairs()
    threshold, th_info = _verify_threshold(config, scores)

    present = [g for g in _composites(scores.subjects.values())
               if (scores.group_mask(g) & scores.mated).any()]
    groups: list[GroupKey] = list(present)
    for pair in pairs:
        for g in pair:
            if g not in groups and (scores.group_mask(g) & scores.mated).any():
                groups.append(g)
    _check_pairs(pairs, set(groups), "genuine comparisons")

    with _context("bootstrap"):
        reps = tmr_replicates(scores, threshold, [None] + groups, config.bootstrap, workers=workers)
    estimates = {}
    rows, point_rates = [], []
    match = scores.score >= threshold
    for i, g in enumerate([None] + groups):
        mask = np.ones(len(scores), bool) if g is None else scores.group_mask(g)
        gen, imp = mask & scores.mated, mask & ~scores.mated
        n_gen, n_imp = int(gen.sum()), int(imp.sum())
        k_gen, k_imp = int((gen & match).sum()), int((imp & match).sum())
        est = BootstrapEstimate.from_replicates(g, Metric.TMR, reps[i], config.bootstrap)
        estimates[g] = est
        rows.append(_estimate_row(est, k_gen / n_gen, n_gen))
        point_rates.append({
            "group": "all" if g is None else g.code,
            "tmr": k_gen / n_gen, "fnmr": 1 - k_gen / n_gen,
            "fmr": None if n_imp == 0 else k_imp / n_imp,
            "n_genuine": n_gen, "n_impostor": n_imp,
            "n_genuine_match": k_gen, "n_impostor_match": k_imp,
        })

    summaries = {g: estimates[g].summary(PERCENT) for g in groups}
    data_out = _base("verify", config, data.files)
    data_out["threshold"] = th_info
    data_out["estimates"] = rows
    data_out["point_rates"] = point_rates
    data_out["tests"] = _welch_pairs(pairs, summaries, config.alpha)
    if config.two_prop:
        counts = {r["group"]: (r["n_genuine_match"], r["n_genuine"]) for r in point_rates}
        data_out["point_tests"] = []
        for a, b in pairs:
            entry = {"pair": [a.code, b.code], "result": None}
            try:
                res = two_prop_z(ProportionSummary.from_counts(*counts[a.code]),
                                 ProportionSummary.from_counts(*counts[b.code]), config.alpha)
                entry["result"] = result_dict(res)
            except DegenerateStatisticError:
                entry["note"] = "pooled TMR is 0 or 1; z statistic undefined"
            data_out["point_tests"].append(entry)
    data_out["anova"] = _anova(present, summaries, config.alpha, estimates[None].mean * PERCENT)

    diagnostics: dict = {}
    quality = data.quality or {}
    diagnostics["outliers"] = [
        {"group": f.group.code, "probe_sample": f.comparison.probe_sample,
         "gallery_sample": f.comparison.gallery_sample, "score": f.comparison.score,
         "margin": f.margin, "probe_quality": f.probe_quality, "gallery_quality": f.gallery_quality}
        for f in flag_outliers(scores, threshold, quality)
    ]
    if config.flip_mode is not None:
        flips = []
        for a, b in pairs:
            with _context(f"flips for {a.code}/{b.code}"):
                flips.append(_flip_row(minimal_flips(scores, (a, b), threshold, config.alpha,
                                                     config.flip_mode, config.bootstrap)))
        diagnostics["flips"] = flips
    if data.quality:
        with _context("quality comparison"):
            qc = quality_compare(data.quality, data.sample_subjects(), scores.subjects, pairs,
                                 equal_n=config.quality_equal_n, bins=config.quality_bins,
                                 alpha=config.alpha, seed=config.bootstrap.seed)
        diagnostics["quality"] = _quality_section(qc)
    data_out["diagnostics"] = diagnostics

    plots = {"roc": []}
    for g in [None] + present:
        sub = scores if g is None else scores.take(np.flatnonzero(scores.group_mask(g)))
        if sub.n_mated == 0 or sub.n_mated == len(sub):
            continue
        for p in roc_curve(sub):
            plots["roc"].append({"group": "all" if g is None else g.code, "threshold": p.threshold,
                                 "tmr": p.tmr, "fmr": p.fmr})
    return AuditReport(data_out, plots).validate()


def run_summary_audit(config: AuditConfig, summaries: Mapping[GroupKey, GroupSummary],
                      files=()) -> AuditReport:
    """Pairwise Welch tests and ANOVA on pre-aggregated (mean, std, m) rows."""
    pairs = config.resolved_pairs()
    _check_pairs(pairs, set(summaries), "summary row")
    data_out = _base("summaries", config, files)
    data_out["warnings"] = []
    data_out["estimates"] = [
        {"group": g.code, "metric": "tmr", "mean": s.mean, "std": s.std, "m": s.m, "unit": s.unit}
        for g, s in summaries.items()
    ]
    data_out["tests"] = _welch_pairs(pairs, summaries, config.alpha)
    composites = _composites(summaries)
    data_out["anova"] = _anova(composites, summaries, config.alpha)
    return AuditReport(data_out).validate()


@dataclass(frozen=True)
class GroupSearch:
    group: DemographicGroup
    gallery: openset.Gallery
    cohort: openset.ProbeCohort
    mated: list
    nonmated: list


def identification_searches(config: AuditConfig, subjects: Mapping[str, DemographicGroup],
                            source, sample_subjects: Mapping[str, str]) -> dict[DemographicGroup, GroupSearch]:
    """Build each audited group's gallery and run its mated and non-mated searches."""
    samples: dict[str, list[str]] = {}
    for sample, subject in sorted(sample_subjects.items()):
        samples.setdefault(subject, []).append(sample)
    cohort_groups: dict[DemographicGroup, list[str]] = {}
    distractors = []
    for sid in sorted(samples):
        g = subjects.get(sid)
        if g is None:
            distractors.append(sid)
        else:
            cohort_groups.setdefault(g, []).append(sid)
    if not cohort_groups:
        raise DataError("no labelled subjects among the searchable samples")
    per_group = config.per_group or min(len(v) for v in cohort_groups.values())
    n_mates = config.n_mates if config.n_mates is not None else per_group // 2
    out = {}
    for g in sorted(cohort_groups, key=lambda g: g.code):
        with _context(f"identification for group {g.code}"):
            gallery, cohort = openset.build_gallery(
                distractors, cohort_groups, g, n_mates, per_group=per_group, samples=samples,
                seed=config.bootstrap.seed)
            rank = min(config.rank, len(gallery))
            mated = openset.search_many(list(cohort.mated), gallery, source, rank)
            nonmated = openset.search_many(list(cohort.nonmated), gallery, source, rank)
        out[g] = GroupSearch(g, gallery, cohort, mated, nonmated)
    return out


def run_identification_audit(config: AuditConfig, data: Dataset, *, source=None,
                             sample_subjects: Mapping[str, str] | None = None,
                             workers: int | None = None) -> AuditReport:
    """Per-group galleries, shared threshold, bootstrap FPIR, Welch tests and sweep.

    ``source`` defaults to the dataset's embedding store. Subjects present in
    the source but absent from the subject table act as distractors.
    """
    if config.mode != "ident":
        raise ConfigError("identification audit needs mode='ident'")
    if source is None:
        if data.embeddings is None:
            raise DataError("identification audit needs embeddings or a score source")
        source = data.embeddings
        sample_subjects = data.embeddings.sample_subjects()
    if sample_subjects is None:
        raise ConfigError("a custom score source needs a sample to subject map")
    pairs = config.resolved_pairs()
    for a, b in pairs:
        if not (isinstance(a, DemographicGroup) and isinstance(b, DemographicGroup)):
            raise ConfigError(f"identification pairs must be composite groups, got {a.code}/{b.code}")

    searches = identification_searches(config, data.subjects, source, sample_subjects)
    _check_pairs(pairs, set(searches), "identification cohort")
    rank = min([config.rank] + [len(s.gallery) for s in searches.values()])

    if config.threshold is not None:
        threshold = float(config.threshold)
        th_info = {"value": real(threshold), "source": "fixed", "target": None, "achieved": None,
                   "ref_group": None}
    else:
        ref = config.ref_group
        if ref not in searches:
            raise ConfigError(f"reference group {ref.code} has no identification cohort")
        with _context(f"FNIR calibration on {ref.code}"):
            cal = openset.calibrate_threshold_fnir(searches[ref].mated, config.target_fnir, rank)
        threshold = cal.threshold
        th_info = {"value": real(threshold), "source": "target_fnir", "target": config.target_fnir,
                   "achieved": real(cal.achieved_fnir), "ref_group": ref.code}

    rows, ident_rows, summaries = [], [], {}
    for g, s in searches.items():
        with _context(f"FPIR bootstrap for {g.code}"):
            est = openset.bootstrap_identification(s.nonmated, Metric.FPIR, threshold, config.bootstrap,
                                                   rank=rank, group=g, workers=workers)
        point = openset.fpir(s.nonmated, threshold)
        rows.append(_estimate_row(est, point, len(s.nonmated)))
        summaries[g] = est.summary(PERCENT)
        ident_rows.append({
            "group": g.code,
            "gallery_size": len(s.gallery),
            "n_mated": len(s.mated),
            "n_nonmated": len(s.nonmated),
            "fpir": real(point),
            "fnir": real(openset.fnir(s.mated, threshold, rank)) if s.mated else None,
            "tpir": real(openset.tpir(s.mated, rank)) if s.mated else None,
        })

    data_out = _base("ident", config, data.files)
    data_out["threshold"] = th_info
    data_out["estimates"] = rows
    data_out["tests"] = _welch_pairs(pairs, summaries, config.alpha)
    pooled = [o for s in searches.values() for o in s.nonmated]
    data_out["anova"] = _anova(list(searches), summaries, config.alpha,
                               None if not pooled else openset.fpir(pooled, threshold) * PERCENT)

    grid = sweep_grid([s for g in searches.values() for s in (g.mated, g.nonmated)], config.sweep_points)
    sweep_rows = []
    for g, s in searches.items():
        for p in openset.sweep(s.mated, s.nonmated, grid, rank):
            sweep_rows.append({"group": g.code, "threshold": real(p.threshold), "fpir": real(p.fpir),
                               "fnir": real(p.fnir)})
    data_out["identification"] = {"rank": rank, "groups": ident_rows, "sweep": sweep_rows}
    plots = {"sweep": [dict(r) for r in sweep_rows]}
    return AuditReport(data_out, plots).validate()


def sweep_grid(outcome_lists, n: int) -> np.ndarray:
    """``n`` evenly spaced thresholds spanning all observed candidate scores."""
    vals = [c.score for outs in outcome_lists for o in outs for c in o.candidates]
    if not vals:
        raise DataError("no candidate scores to sweep over")
    lo, hi = min(vals), max(vals)
    if lo == hi:
        lo, hi = lo - 0.5, hi + 0.5
    return np.linspace(lo, hi, n)


def run_sensitivity(config: AuditConfig, data: Dataset, *, modes: Sequence[str] | None = None
                    ) -> AuditReport:
    """Minimal-flip analysis for every configured pair."""
    if data.scores is None:
        raise DataError("sensitivity analysis needs a score set")
    threshold, th_info = _verify_threshold(config, data.scores)
    pairs = config.resolved_pairs()
    modes = list(modes or [config.flip_mode or "point_z"])
    flips = []
    for mode in modes:
        for a, b in pairs:
            with _context(f"flips for {a.code}/{b.code}"):
                flips.append(_flip_row(minimal_flips(data.scores, (a, b), threshold, config.alpha, mode,
                                                     config.bootstrap)))
    data_out = _base("sensitivity", config, data.files)
    data_out["threshold"] = th_info
    data_out["diagnostics"] = {"flips": flips}
    return AuditReport(data_out).validate()


def run_quality_audit(config: AuditConfig, data: Dataset) -> AuditReport:
    """Per-group quality distributions and Welch tests on mean quality."""
    if data.quality is None:
        raise DataError("quality audit needs quality scores")
    with _context("quality comparison"):
        qc = quality_compare(data.quality, data.sample_subjects(), data.subjects,
                             config.resolved_pairs(), equal_n=config.quality_equal_n,
                             bins=config.quality_bins, alpha=config.alpha, seed=config.bootstrap.seed)
    data_out = _base("quality", config, data.files)
    data_out["warnings"] = []
    data_out["diagnostics"] = {"quality": _quality_section(qc)}
    return AuditReport(data_out).validate()
