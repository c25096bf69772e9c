"""Hypothesis property tests for invariants that hold for any valid input."""

import math

import numpy as np
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from demodiff.core import (COMPOSITES, DemographicGroup, ScoreSet, partition_by_group, roc_curve,
                           verification_rates)
from demodiff.diagnostics import quality_compare
from demodiff.io import Rejections, read_scores
from demodiff.openset import build_gallery
from demodiff.stats import (GroupSummary, ProportionSummary, anova_f, t_decision, two_prop_z,
                            welch_t)

LABELS = [DemographicGroup(r, g) for r in ("B", "W", "A") for g in ("F", "M")]


@st.composite
def score_sets(draw, max_subjects=12):
    n = draw(st.integers(2, max_subjects))
    groups = draw(st.lists(st.sampled_from(LABELS), min_size=n, max_size=n))
    subjects = {f"s{i}": g for i, g in enumerate(groups)}
    rows = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                                   st.integers(0, 20)), min_size=1, max_size=60))
    cols, seen = [[], [], [], [], []], set()
    for k, (p, g, s) in enumerate(rows):
        key = (f"s{p}_{k}", f"s{g}_g")
        if key in seen:
            continue
        seen.add(key)
        for c, v in zip(cols, (f"s{p}", key[0], f"s{g}", key[1], s / 20)):
            c.append(v)
    return ScoreSet(subjects, *cols)


@settings(max_examples=60, deadline=None)
@given(score_sets(), st.floats(0, 1))
def test_denominator_discipline(scores, threshold):
    rp = verification_rates(scores, threshold)
    gen = scores.genuine_scores()
    if rp.tmr is None:
        assert len(gen) == 0
        return
    count = rp.tmr * rp.n_genuine
    assert abs(count - round(count)) < 1e-9
    assert round(count) == int((gen >= threshold).sum()) == rp.n_genuine_match


@settings(max_examples=60, deadline=None)
@given(score_sets())
def test_roc_monotone(scores):
    assume(scores.n_mated > 0 and scores.n_mated < len(scores))
    roc = roc_curve(scores)
    for hi, lo in zip(roc, roc[1:]):
        assert hi.threshold > lo.threshold
        assert hi.tmr <= lo.tmr and hi.fmr <= lo.fmr


@settings(max_examples=60, deadline=None)
@given(score_sets())
def test_partition_completeness(scores):
    part = partition_by_group(scores, marginals=True)
    composite = [part[g] for g in COMPOSITES if g in part]
    assert sum(p.n_mated for p in composite) + part.unlabeled.n_mated == scores.n_mated
    assert sum(len(p) for p in composite) + len(part.unlabeled) == len(scores)
    for marginal, members in (("B", ("BF", "BM")), ("F", ("BF", "WF"))):
        if marginal in part:
            assert len(part[marginal]) == sum(len(part[g]) for g in members if g in part)


summaries = st.builds(GroupSummary, st.floats(0.5, 1.0), st.floats(1e-4, 0.1), st.integers(2, 50))


@given(summaries, summaries, st.floats(0.01, 1000))
def test_welch_scale_invariance(a, b, c):
    r = welch_t(a, b)
    s = welch_t(GroupSummary(a.mean * c, a.std * c, a.m), GroupSummary(b.mean * c, b.std * c, b.m))
    assert math.isclose(r.statistic, s.statistic, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose(r.df, s.df, rel_tol=1e-9)


def _away_from_boundary(res):
    # the two rules can only disagree through rounding at |stat| == crit
    return abs(abs(res.statistic) - res.critical_value) > 1e-9 * max(1.0, res.critical_value)


@given(summaries, summaries, st.sampled_from([0.01, 0.05, 0.1]))
def test_decision_consistency_welch(a, b, alpha):
    r = welch_t(a, b, alpha)
    assume(_away_from_boundary(r))
    assert r.reject == r.reject_by_critical


@given(st.integers(1, 500), st.integers(1, 500), st.integers(1, 500), st.integers(1, 500),
       st.sampled_from([0.01, 0.05, 0.1]))
def test_decision_consistency_two_prop(k0, n0, k1, n1, alpha):
    assume(k0 <= n0 and k1 <= n1 and 0 < k0 + k1 < n0 + n1)
    r = two_prop_z(ProportionSummary.from_counts(k0, n0), ProportionSummary.from_counts(k1, n1), alpha)
    assume(_away_from_boundary(r))
    assert r.reject == r.reject_by_critical


replicate_lists = st.integers(2, 12).flatmap(
    lambda m: st.lists(st.lists(st.floats(0, 1), min_size=m, max_size=m), min_size=2, max_size=5))


@given(replicate_lists, st.sampled_from([0.01, 0.05]))
def test_decision_consistency_anova(groups, alpha):
    assume(any(np.std(g) > 1e-6 for g in groups))
    r = anova_f(groups, alpha)
    assume(abs(r.statistic - r.critical_value) > 1e-9 * r.critical_value)
    assert r.reject == r.reject_by_critical


@given(st.integers(2, 15), st.lists(st.floats(0, 1), min_size=30, max_size=30))
def test_anova_equals_pooled_t_squared(m, values):
    a, b = values[:m], values[15:15 + m]
    sa, sb = np.std(a, ddof=1), np.std(b, ddof=1)
    assume(sa > 1e-3 and sb > 1e-3)
    f = anova_f([a, b])
    sp = math.sqrt((sa ** 2 + sb ** 2) / 2)
    t = (np.mean(a) - np.mean(b)) / (sp * math.sqrt(2 / m))
    pooled = t_decision(t, 2 * m - 2)
    assert math.isclose(f.statistic, t * t, rel_tol=1e-9, abs_tol=1e-12)
    assert abs(f.p_value - pooled.p_value) <= 1e-9


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 300), st.integers(2, 40), st.data())
def test_gallery_arithmetic(n_dist, per_group, data):
    n_mates = data.draw(st.integers(0, per_group - 1))
    groups = {g: [f"{g.code}{i}" for i in range(per_group)] for g in COMPOSITES}
    audited = data.draw(st.sampled_from(COMPOSITES))
    gallery, cohort = build_gallery([f"D{i}" for i in range(n_dist)], groups, audited, n_mates)
    assert len(gallery) == n_dist + 3 * per_group + n_mates
    mated = {p.subject_id for p in cohort.mated}
    nonmated = {p.subject_id for p in cohort.nonmated}
    assert not mated & nonmated and len(mated) + len(nonmated) == per_group
    assert all(s in gallery for s in mated) and not any(s in gallery for s in nonmated)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(COMPOSITES), st.floats(0, 100)), min_size=8, max_size=80),
       st.integers(1, 30))
def test_quality_histogram_conservation(rows, bins):
    counts = {g: sum(1 for h, _ in rows if h == g) for g in COMPOSITES}
    assume(all(c >= 2 for c in counts.values()))
    quality = {f"q{i}": q for i, (_, q) in enumerate(rows)}
    sample_subjects = {f"q{i}": f"s{i}" for i in range(len(rows))}
    subject_groups = {f"s{i}": g for i, (g, _) in enumerate(rows)}
    qc = quality_compare(quality, sample_subjects, subject_groups, bins=bins)
    for g, s in qc.summaries.items():
        assert sum(s.histogram) == s.n_samples == counts[g]
        assert s.bin_edges[0] == 0.0 and s.bin_edges[-1] == 100.0 and len(s.bin_edges) == bins + 1


@settings(max_examples=40, deadline=None)
@given(st.lists(st.sampled_from(["ok", "short", "unknown", "nan", "self"]), min_size=1, max_size=40))
def test_no_silent_drops(tmp_path_factory, kinds):
    subjects = {"a": DemographicGroup("B", "F"), "b": DemographicGroup("W", "M"),
                "x": DemographicGroup("A", "M")}
    lines = ["probe_subject,probe_sample,gallery_subject,gallery_sample,score"]
    for i, kind in enumerate(kinds):
        p = "abx"[i % 3]
        lines.append({"ok": f"{p},{p}{i},{p},{p}g,0.5", "short": f"{p},{p}{i},{p}",
                      "unknown": f"{p},{p}{i},z,zg,0.5", "nan": f"{p},{p}{i},{p},{p}g,nan",
                      "self": f"{p},{p}{i},{p},{p}{i},0.5"}[kind])
    path = tmp_path_factory.mktemp("drops") / "scores.csv"
    path.write_text("\n".join(lines) + "\n")
    rej = Rejections()
    scores, info = read_scores(path, subjects, permissive=True, rejections=rej)
    part = partition_by_group(scores)
    assert info.n_rows == len(kinds)
    assert info.n_rows == sum(len(p) for _, p in part.items()) + len(part.unlabeled) + info.n_rejected
    assert info.n_rejected == len(rej) == sum(k != "ok" for k in kinds)
