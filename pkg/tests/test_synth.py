import math

import numpy as np
import pytest

from demodiff.core import DemographicGroup, verification_rates
from demodiff.errors import ConfigError
from demodiff.synth import (GroupScoreModel, default_models, generate, generate_embeddings, regenerate,
                            truncated_normal)

WF = DemographicGroup("W", "F")


def test_deterministic_and_seed_sensitive():
    a = generate(default_models(20), seed=1)
    assert a == generate(default_models(20), seed=1)
    assert a.score_set != generate(default_models(20), seed=2).score_set


def test_regenerate_from_provenance():
    a = generate(default_models(15, outlier_fraction=0.1), seed=7)
    assert regenerate(a.provenance) == a


def test_structure():
    d = generate(default_models(30, samples_per_subject=4), seed=0)
    s = d.score_set
    assert s.n_mated == 4 * 30 * 3
    assert np.all((s.score >= 0) & (s.score <= 1))
    imp = ~s.mated
    assert np.all(s.probe_subject[imp] != s.gallery_subject[imp])
    pairs = list(zip(s.probe_sample.tolist(), s.gallery_sample.tolist()))
    assert len(set(pairs)) == len(pairs)
    assert all(0 <= q <= 100 for q in d.quality.values())
    assert set(d.quality) >= set(s.probe_sample[s.mated].tolist())


def test_outlier_fraction_drives_tmr():
    eps = 0.1
    d = generate([GroupScoreModel(WF, n_subjects=2000, samples_per_subject=2, outlier_fraction=eps,
                                  genuine=(0.9, 0.02), outlier_genuine=(0.2, 0.02))], seed=3)
    n = d.score_set.n_mated
    tmr = verification_rates(d.score_set, 0.5).tmr
    se = math.sqrt(eps * (1 - eps) / n)
    assert abs((1 - tmr) - eps) < 4 * se
    assert len(d.outlier_samples) == round((1 - tmr) * n)


def test_quality_moments_match_law():
    d = generate([GroupScoreModel(WF, n_subjects=100, samples_per_subject=2, quality=(55.0, 10.0))], seed=5)
    q = np.array(list(d.quality.values()))
    assert abs(q.mean() - 55.0) < 3 * 10.0 / math.sqrt(len(q))
    assert abs(q.std(ddof=1) - 10.0) < 3 * 10.0 / math.sqrt(2 * (len(q) - 1))


def test_outlier_quality_link():
    d = generate([GroupScoreModel(WF, n_subjects=300, outlier_fraction=0.2)], seed=2)
    out = np.mean([d.quality[s] for s in d.outlier_samples])
    clean = np.mean([q for s, q in d.quality.items() if s not in d.outlier_samples])
    assert out < clean - 20


def test_truncated_normal_bounds():
    gen = np.random.default_rng(0)
    x = truncated_normal(gen, 0.95, 0.2, 0.0, 1.0, 5000)
    assert x.min() >= 0 and x.max() <= 1
    with pytest.raises(ConfigError):
        truncated_normal(gen, 50.0, 0.01, 0.0, 1.0, 10)


def test_model_validation_lists_all_problems():
    with pytest.raises(ConfigError) as exc:
        GroupScoreModel(WF, n_subjects=1, outlier_fraction=1.5, genuine=(0.5, -1))
    msg = str(exc.value)
    assert "n_subjects" in msg and "outlier_fraction" in msg and "genuine" in msg


def test_model_dict_round_trip():
    m = GroupScoreModel(WF, outlier_fraction=0.05)
    assert GroupScoreModel.from_dict(m.as_dict()) == m
    with pytest.raises(ConfigError):
        GroupScoreModel.from_dict({**m.as_dict(), "bogus": 1})


def test_duplicate_models_rejected():
    with pytest.raises(ConfigError):
        generate([GroupScoreModel(WF), GroupScoreModel(WF)])


def test_embeddings():
    e = generate_embeddings(default_models(10), seed=3, dim=12, n_distractors=7)
    assert len(e.store) == 4 * 10 * 3 + 7
    np.testing.assert_allclose(np.linalg.norm(e.store.vectors, axis=1), 1.0, rtol=1e-12)
    assert len(e.distractors) == 7 and all(d not in e.subjects for d in e.distractors)
    again = generate_embeddings(default_models(10), seed=3, dim=12, n_distractors=7)
    np.testing.assert_array_equal(e.store.vectors, again.store.vectors)


def test_embedding_mates_closer_than_strangers():
    e = generate_embeddings(default_models(30), seed=1, dim=64)
    s = e.store
    mate = s.score_matrix(["BF-00000_1"], ["BF-00000_0"])[0, 0]
    other = s.score_matrix(["BF-00000_1"], [f"WM-{i:05d}_0" for i in range(30)])
    assert mate > other.max()
