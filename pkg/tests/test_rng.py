import json
from pathlib import Path

import numpy as np
import pytest

from demodiff import rng
from demodiff.resample import BootstrapConfig, draw_units

GOLDEN = json.loads((Path(__file__).parent / "data" / "rng_golden.json").read_text())


@pytest.mark.parametrize("case", GOLDEN["words"], ids=lambda c: f"seed{c['seed']}")
def test_stream_words_golden(case):
    s = rng.Stream(case["seed"], case["sid"])
    assert [int(w) for w in s.words(len(case["words"]))] == [int(w) for w in case["words"]]


@pytest.mark.parametrize("case", GOLDEN["bootstrap"], ids=lambda c: f"seed{c['seed']}")
def test_bootstrap_draws_golden(case):
    cfg = BootstrapConfig(m=case["m"], seed=case["seed"])
    for r, expected in enumerate(case["draws"]):
        assert draw_units(case["n_units"], cfg, r).tolist() == expected


def test_stream_continues_across_calls():
    a = rng.Stream(7, 3)
    first = np.concatenate([a.words(3), a.words(6)])
    np.testing.assert_array_equal(first, rng.Stream(7, 3).words(9))


def test_stream_id_layout():
    assert rng.stream_id(rng.BOOTSTRAP, 5) == (1 << 48) | 5
    with pytest.raises(ValueError):
        rng.stream_id(1, 1 << 48)


def test_uniform_in_unit_interval():
    u = rng.Stream(1, 2).uniform(10000)
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.02


def test_sample_without_replacement():
    s = rng.Stream(3, 4)
    picked = rng.sample_without_replacement(s, 50, 20)
    assert len(set(picked.tolist())) == 20
    assert picked.min() >= 0 and picked.max() < 50
    again = rng.sample_without_replacement(rng.Stream(3, 4), 50, 20)
    np.testing.assert_array_equal(picked, again)
