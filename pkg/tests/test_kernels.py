import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from demodiff import kernels

BACKENDS = kernels.available_backends()
KAT = [0x16554D9ECA36314C, 0xDB20FE9D672D0FDC, 0xD7E772CEE186176B, 0x7E68B68AEC7BA23B]


def numpy_words(k0, k1, n):
    bg = np.random.Philox(counter=[2 ** 64 - 1] * 4, key=[k0, k1])
    return bg.random_raw(n)


@pytest.mark.parametrize("name", BACKENDS)
def test_philox_known_answer(name):
    k = kernels.backend(name)
    assert list(k.philox4x64(0, 0, 0, 0, 0, 0)) == KAT


@pytest.mark.parametrize("name", BACKENDS)
@pytest.mark.parametrize("key", [(0, 0), (1, 2), (2 ** 64 - 1, 2 ** 64 - 1), (987654321, 1 << 49)])
def test_words_match_numpy_philox(name, key):
    k = kernels.backend(name)
    got = np.asarray(k.random_words(key[0], key[1], 0, 37), dtype=np.uint64)
    np.testing.assert_array_equal(got, numpy_words(*key, 37))


@pytest.mark.parametrize("name", BACKENDS)
def test_words_from_offset(name):
    k = kernels.backend(name)
    full = np.asarray(k.random_words(5, 6, 0, 40), dtype=np.uint64)
    for start in (1, 3, 4, 17):
        part = np.asarray(k.random_words(5, 6, start, 40 - start), dtype=np.uint64)
        np.testing.assert_array_equal(part, full[start:])


@pytest.mark.parametrize("name", BACKENDS)
def test_uniform_indices_formula(name):
    k = kernels.backend(name)
    words = numpy_words(3, 4, 50)
    for bound in (1, 2, 7, 1000, 2 ** 40 + 3):
        got = list(k.uniform_indices(3, 4, 0, 50, bound))
        assert got == [(int(w) * bound) >> 64 for w in words]


def test_backends_agree():
    if len(BACKENDS) < 2:
        pytest.skip("compiled backend not built")
    c, py = kernels.backend("c"), kernels.backend("python")
    np.testing.assert_array_equal(c.uniform_indices(9, 1, 3, 200, 13), py.uniform_indices(9, 1, 3, 200, 13))
    rng = np.random.default_rng(0)
    for _ in range(200):
        a, b = rng.uniform(0.05, 500, 2)
        x = rng.uniform()
        assert c.betainc(x, 1 - x, a, b) == py.betainc(x, 1 - x, a, b)
    scores = np.round(rng.normal(size=(30, 60)), 1)
    np.testing.assert_array_equal(c.top_r(scores, 7), py.top_r(scores, 7))


@pytest.mark.parametrize("name", BACKENDS)
@settings(max_examples=150, deadline=None)
@given(x=st.floats(0, 1), a=st.floats(0.01, 2000), b=st.floats(0.01, 2000))
def test_betainc_vs_mpmath(name, x, a, b):
    # scipy loses digits for subnormal x, so the reference is mpmath
    k = kernels.backend(name)
    got = k.betainc(x, 1 - x, a, b)
    assert math.isclose(got, oracles.betainc(x, a, b), rel_tol=1e-10, abs_tol=1e-13)


@pytest.mark.parametrize("name", BACKENDS)
def test_betainc_large_symmetric(name):
    k = kernels.backend(name)
    assert abs(k.betainc(0.5, 0.5, 1e5, 1e5) - 0.5) < 1e-12


def brute_top_r(row, r):
    order = sorted(range(len(row)), key=lambda j: (-row[j], j))
    return order[:r]


@pytest.mark.parametrize("name", BACKENDS)
def test_top_r_matches_sort_with_ties(name):
    k = kernels.backend(name)
    rng = np.random.default_rng(1)
    scores = rng.integers(0, 5, size=(40, 25)).astype(float)
    for r in (1, 5, 25):
        got = np.asarray(k.top_r(scores, r))
        for i, row in enumerate(scores):
            assert list(got[i]) == brute_top_r(list(row), r)


def test_benchmark_runs():
    script = Path(__file__).parent.parent / "benchmarks" / "bench_kernels.py"
    done = subprocess.run([sys.executable, str(script), "--repeat", "1"], capture_output=True, text=True,
                          check=True)
    lines = done.stdout.splitlines()
    assert len(lines) == 5
    if "c" in BACKENDS:
        assert all(line.endswith("True") for line in lines[1:])
