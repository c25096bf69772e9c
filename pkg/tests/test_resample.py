import math
import warnings

import numpy as np
import pytest

from demodiff.core import DemographicGroup, verification_rates
from demodiff.errors import ConfigError, UndefinedMetricError
from demodiff.resample import (BootstrapConfig, CoarseBootstrapWarning, Metric, bootstrap_estimate,
                               bootstrap_groups, bootstrap_units, comparison_weights, resample,
                               tmr_replicates, unit_counts)

WF = DemographicGroup("W", "F")


def test_config_validation():
    with pytest.raises(ConfigError):
        BootstrapConfig(m=1)
    with pytest.raises(ConfigError):
        BootstrapConfig(unit="probe")
    with pytest.raises(ConfigError):
        BootstrapConfig(seed=-1)


def test_coarse_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        BootstrapConfig(m=10)
        BootstrapConfig(m=11)
    assert [type(w.message) for w in rec] == [CoarseBootstrapWarning]


def test_unit_counts_sum():
    cfg = BootstrapConfig(m=5, seed=3)
    for r in range(5):
        assert unit_counts(37, cfg, r).sum() == 37


def test_subject_weights_shared(small_synth):
    s = small_synth.score_set
    w = comparison_weights(s, BootstrapConfig(m=3, seed=1), 0)
    for sid in np.unique(s.probe_subject)[:20]:
        assert len(set(w[s.probe_subject == sid].tolist())) == 1
    n_subjects = len(np.unique(s.probe_subject))
    first = {sid: w[s.probe_subject == sid][0] for sid in np.unique(s.probe_subject)}
    assert sum(first.values()) == n_subjects


def test_materialized_replicate_matches_weights(small_synth):
    s = small_synth.score_set
    cfg = BootstrapConfig(m=4, seed=9)
    rep = resample(s, cfg, 2)
    w = comparison_weights(s, cfg, 2)
    assert len(rep) == w.sum()
    mask = rep.group_mask(WF) & rep.mated
    direct = np.mean(rep.score[mask] >= 0.7)
    reps = tmr_replicates(s, 0.7, [WF], cfg)
    assert reps[0, 2] == pytest.approx(direct, rel=1e-14)


def test_replicates_independent_of_workers(small_synth):
    s = small_synth.score_set
    cfg = BootstrapConfig(m=16, seed=5)
    a = tmr_replicates(s, 0.75, [None, WF], cfg)
    b = tmr_replicates(s, 0.75, [None, WF], cfg, workers=4)
    np.testing.assert_array_equal(a, b)


def test_replicate_subset_is_prefix(small_synth):
    s = small_synth.score_set
    a = tmr_replicates(s, 0.75, [WF], BootstrapConfig(m=12, seed=5))
    b = tmr_replicates(s, 0.75, [WF], BootstrapConfig(m=20, seed=5))
    np.testing.assert_array_equal(a[0], b[0, :12])


def test_comparison_unit(small_synth):
    s = small_synth.score_set
    cfg = BootstrapConfig(m=3, seed=2, unit="comparison")
    assert comparison_weights(s, cfg, 1).sum() == len(s)


def test_mean_converges_to_point(small_synth):
    s = small_synth.score_set
    cfg = BootstrapConfig(m=400, seed=8)
    est = bootstrap_estimate(s, 0.75, Metric.TMR, cfg)
    point = verification_rates(s, 0.75).tmr
    assert abs(est.mean - point) <= 3 * est.std / math.sqrt(cfg.m)


def test_groups_share_replicates(small_synth):
    s = small_synth.score_set
    cfg = BootstrapConfig(m=6, seed=4)
    grouped = bootstrap_groups(s, 0.75, [WF], cfg)
    single = bootstrap_estimate(s, 0.75, config=cfg, group=WF)
    assert grouped[WF].replicates == single.replicates


def test_summary_scaling(small_synth):
    est = bootstrap_estimate(small_synth.score_set, 0.75, config=BootstrapConfig(m=5))
    pct = est.summary(100)
    assert pct.unit == "percent" and pct.mean == pytest.approx(100 * est.mean)


def test_undefined_replicate_raises():
    with pytest.raises(UndefinedMetricError):
        bootstrap_units(3, lambda counts: None, BootstrapConfig(m=2))


def test_identification_metric_rejected(small_synth):
    with pytest.raises(ConfigError):
        bootstrap_estimate(small_synth.score_set, 0.5, Metric.FPIR)
