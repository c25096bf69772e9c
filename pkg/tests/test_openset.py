import math

import numpy as np
import pytest

from demodiff import openset
from demodiff.core import DemographicGroup
from demodiff.errors import ConfigError, DataError, NumericError
from demodiff.openset import (EmbeddingStore, Gallery, Probe, ProbeCohort, ScoreTable, build_gallery,
                              calibrate_threshold_fnir, fnir, fpir, search_many, sweep, tpir)
from demodiff.synth import default_models, generate_embeddings

BF, BM, WF, WM = (DemographicGroup(r, g) for r, g in [("B", "F"), ("B", "M"), ("W", "F"), ("W", "M")])


def ids(prefix, n):
    return [f"{prefix}{i:06d}" for i in range(n)]


@pytest.mark.parametrize("sizes,expected", [((100000, 762, 200), 102486), ((1000, 50, 20), 1170)])
def test_gallery_arithmetic(sizes, expected):
    n_dist, per_group, n_mates = sizes
    groups = {g: ids(g.code, per_group) for g in (BF, BM, WF, WM)}
    gallery, cohort = build_gallery(ids("D", n_dist), groups, WF, n_mates)
    assert len(gallery) == expected
    assert len(cohort.mated) == n_mates
    assert len(cohort.nonmated) == per_group - n_mates


def test_gallery_protocol_membership():
    groups = {g: ids(g.code, 30) for g in (BF, BM, WF, WM)}
    gallery, cohort = build_gallery(ids("D", 10), groups, BM, 12, per_group=20, seed=3)
    assert all(p.subject_id in gallery for p in cohort.mated)
    assert not any(p.subject_id in gallery for p in cohort.nonmated)
    assert all(p.sample_id.endswith("_1") for p in cohort.mated)
    assert all(s.endswith("_0") for s in gallery.sample_ids)
    again = build_gallery(ids("D", 10), groups, BM, 12, per_group=20, seed=3)
    assert again[0].entries == gallery.entries and again[1] == cohort


def test_gallery_errors():
    groups = {BF: ids("a", 5), WM: ids("b", 3)}
    with pytest.raises(DataError):
        build_gallery([], groups, BF, 2, per_group=4)
    with pytest.raises(DataError):
        build_gallery([], groups, BF, 3)
    with pytest.raises(ConfigError):
        build_gallery([], groups, WF, 1)
    with pytest.raises(DataError):
        Gallery({"x_0": "x", "x_1": "x"})
    with pytest.raises(DataError):
        ProbeCohort((Probe("a_1", "a"),), (Probe("a_2", "a"),))


def test_tie_break_by_gallery_sample_id():
    table = ScoreTable({("p", "z_0"): 0.5, ("p", "a_0"): 0.5, ("p", "m_0"): 0.9, ("p", "b_0"): 0.1})
    gallery = Gallery({"z_0": "z", "a_0": "a", "m_0": "m", "b_0": "b"})
    out = openset.search(Probe("p", "a"), gallery, table, 3)
    assert [c.sample_id for c in out.candidates] == ["m_0", "a_0", "z_0"]
    assert out.mate_rank == 2 and out.mate_score == 0.5


def test_score_table_missing_entry():
    with pytest.raises(DataError, match="no entry"):
        ScoreTable({}).score_matrix(["p"], ["g"])


def test_embedding_store_checks():
    with pytest.raises(DataError):
        EmbeddingStore(["a", "a"], ["x", "y"], np.ones((2, 3)))
    with pytest.raises(DataError):
        EmbeddingStore(["a"], ["x"], [[np.nan, 1.0]])


def brute_metrics(mat, gallery_subjects, probe_subjects, mated_rows, nonmated_rows, t, r):
    gallery_subjects = np.array(gallery_subjects)
    fp = np.mean([mat[i].max() >= t for i in nonmated_rows])
    fails, rank_fails = [], []
    for i in mated_rows:
        mate = int(np.flatnonzero(gallery_subjects == probe_subjects[i])[0])
        # rank = 1 + number of gallery entries ordered before the mate
        ahead = sum(1 for j in range(len(mat[i]))
                    if mat[i, j] > mat[i, mate] or (mat[i, j] == mat[i, mate] and j < mate))
        rank_fails.append(ahead + 1 > r)
        fails.append(ahead + 1 > r or mat[i, mate] < t)
    return fp, np.mean(fails), 1 - np.mean(rank_fails)


@pytest.mark.parametrize("seed", range(6))
def test_metrics_equal_raw_recomputation(seed):
    emb = generate_embeddings(default_models(25, embedding_noise=1.2), seed=seed, dim=8, n_distractors=60)
    groups = emb.cohort_groups()
    gallery, cohort = build_gallery(list(emb.distractors), groups, WF, 12, seed=seed)
    assert len(gallery) <= 200
    store = emb.store
    r = 3
    mated = search_many(list(cohort.mated), gallery, store, r, chunk=5)
    nonmated = search_many(list(cohort.nonmated), gallery, store, r)
    probes = list(cohort.mated) + list(cohort.nonmated)
    mat = store.score_matrix([p.sample_id for p in probes], gallery.sample_ids)
    subj = [p.subject_id for p in probes]
    n_m = len(cohort.mated)
    for t in np.quantile(mat, [0.2, 0.5, 0.9, 0.99]):
        fp, fn, tp = brute_metrics(mat, gallery.subject_ids, subj, range(n_m), range(n_m, len(probes)), t, r)
        assert fpir(nonmated, t) == pytest.approx(fp, abs=1e-15)
        assert fnir(mated, t, r) == pytest.approx(fn, abs=1e-15)
        assert tpir(mated, r) == pytest.approx(tp, abs=1e-15)


def test_full_rank_and_minus_inf_threshold():
    emb = generate_embeddings(default_models(10), seed=1, dim=8, n_distractors=5)
    gallery, cohort = build_gallery(list(emb.distractors), emb.cohort_groups(), BM, 5)
    out = search_many(list(cohort.mated), gallery, emb.store, len(gallery))
    assert fnir(out, -math.inf, len(gallery)) == 0.0
    assert tpir(out) == 1.0


@pytest.fixture(scope="module")
def searches():
    emb = generate_embeddings(default_models(60, embedding_noise=1.0), seed=4, dim=16, n_distractors=300)
    gallery, cohort = build_gallery(list(emb.distractors), emb.cohort_groups(), WM, 40)
    mated = search_many(list(cohort.mated), gallery, emb.store, 5)
    nonmated = search_many(list(cohort.nonmated), gallery, emb.store, 5)
    return mated, nonmated


@pytest.mark.parametrize("target", [0.0, 0.05, 0.1, 0.25, 0.5, 1.0])
def test_fnir_calibration_sound_and_tight(searches, target):
    mated, _ = searches
    try:
        cal = calibrate_threshold_fnir(mated, target, 5)
    except NumericError:
        assert fnir(mated, -math.inf, 5) > target
        return
    assert cal.achieved_fnir <= target + 1e-12
    higher = sorted({o.mate_score for o in mated if o.mate_rank and o.mate_score > cal.threshold})
    if higher:
        assert fnir(mated, higher[0], 5) > target


def test_fnir_floor_error(searches):
    mated, _ = searches
    floor = fnir(mated, -math.inf, 1)
    if floor == 0:
        pytest.skip("no rank-1 failures in this fixture")
    with pytest.raises(NumericError, match="floor"):
        calibrate_threshold_fnir(mated, floor / 2, 1)


def test_sweep_monotone(searches):
    mated, nonmated = searches
    scores = [c.score for o in mated + nonmated for c in o.candidates]
    points = sweep(mated, nonmated, np.linspace(min(scores), max(scores), 50), 5)
    fp = [p.fpir for p in points]
    fn = [p.fnir for p in points]
    assert all(a >= b for a, b in zip(fp, fp[1:]))
    assert all(a <= b for a, b in zip(fn, fn[1:]))


def test_bootstrap_identification_deterministic(searches):
    from demodiff.resample import BootstrapConfig, Metric
    _, nonmated = searches
    cfg = BootstrapConfig(m=8, seed=2)
    a = openset.bootstrap_identification(nonmated, Metric.FPIR, 0.3, cfg)
    b = openset.bootstrap_identification(nonmated, Metric.FPIR, 0.3, cfg, workers=3)
    assert a.replicates == b.replicates
