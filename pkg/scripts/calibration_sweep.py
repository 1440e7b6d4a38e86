#!/usr/bin/env python3
"""Permutation-test calibration on pure-noise voxels.

Builds an all-background dataset in memory, runs the split-half
significance test once, and reports observed false-positive rates
against the add-one estimator's exact targets for a sweep of alpha
levels. With N permutations, p-values live on the grid k / (N + 1), so
the expected single-half rate at level alpha is
floor(alpha * (N + 1)) / (N + 1) and the conjunction rate is its
square. Useful when changing the kernel, N, or the split policy.

Example:
    python3 scripts/calibration_sweep.py --grid 30 30 20 --permutations 1000
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from brainalign.consistency import significance_mask, split_half_partition
from brainalign.synth import _stimulus_table, generate_activations, null_config, plant_parameters


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=int, nargs=3, default=(30, 30, 20), metavar=("X", "Y", "Z"))
    parser.add_argument("--permutations", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument(
        "--alphas", type=float, nargs="+", default=(0.01, 0.05, 0.1),
        help="levels to evaluate from the same run",
    )
    args = parser.parse_args()

    cfg = null_config(grid=tuple(args.grid), seed=args.seed)
    n_vox = int(np.prod(cfg.grid))
    truth, weighted, presence = plant_parameters(cfg)
    acts, rows = generate_activations(cfg, truth, weighted, presence, 0)
    concept, paradigm, repetition = (arr[rows] for arr in _stimulus_table(cfg.n_concepts))
    split = split_half_partition(presence)

    t0 = time.perf_counter()
    res = significance_mask(
        acts, concept, paradigm, repetition, cfg.n_concepts, split,
        n_permutations=args.permutations, seed=args.seed,
    )
    print(f"{n_vox} voxels, N={args.permutations}: {time.perf_counter() - t0:.1f} s")
    print(f"{'alpha':>8} {'target':>9} {'half A':>9} {'half B':>9} "
          f"{'target^2':>9} {'conj':>9}")
    for alpha in args.alphas:
        target = math.floor(alpha * (args.permutations + 1)) / (args.permutations + 1)
        rate_a = float(np.mean(res.p_a < alpha))
        rate_b = float(np.mean(res.p_b < alpha))
        conj = float(np.mean((res.p_a < alpha) & (res.p_b < alpha)))
        print(f"{alpha:>8.3g} {target:>9.5f} {rate_a:>9.5f} {rate_b:>9.5f} "
              f"{target**2:>9.6f} {conj:>9.6f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
