"""Regenerate rng_golden.json from numpy's Philox, independently of demodiff.

numpy's Philox4x64 increments its counter before each block, so starting at
counter 2**256 - 1 makes its first block the one at counter 0.
"""

import json
from pathlib import Path

import numpy as np

BOOTSTRAP = 1


def words(seed, sid, n):
    bg = np.random.Philox(counter=[2 ** 64 - 1] * 4, key=[seed, sid])
    return [int(w) for w in bg.random_raw(n)]


def draws(seed, sid, n, bound):
    return [(w * bound) >> 64 for w in words(seed, sid, n)]


def main():
    cases = {"words": [], "bootstrap": []}
    for seed, sid, n in [(0, 0, 8), (1, 0, 5), (2 ** 64 - 1, 2 ** 63 + 5, 9), (123456789, (1 << 48) | 7, 12)]:
        cases["words"].append({"seed": seed, "sid": sid, "words": [str(w) for w in words(seed, sid, n)]})
    for seed, n_units, m in [(0, 17, 3), (42, 5, 4), (2024, 100, 2)]:
        reps = [draws(seed, (BOOTSTRAP << 48) | r, n_units, n_units) for r in range(m)]
        cases["bootstrap"].append({"seed": seed, "n_units": n_units, "m": m, "draws": reps})
    out = Path(__file__).with_name("rng_golden.json")
    out.write_text(json.dumps(cases, indent=1) + "\n")


if __name__ == "__main__":
    main()
