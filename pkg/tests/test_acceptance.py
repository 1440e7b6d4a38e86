"""End-to-end acceptance checks, one test per advertised guarantee.

Every test exercises a public contract at its stated tolerance and
prints the measured quantities, so ``pytest -v`` over this file reads
as a scorecard. The two full default-config pipeline runs are shared
by the binning, ceiling and reproducibility checks through a module
fixture; everything else builds its own small synthetic instance.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest

from brainalign.consistency import (
    semantic_consistency,
    significance_mask,
    split_half_partition,
)
from brainalign.encoding import ALPHA_GRID, FeatureConfig, RidgeDesign, cv_predictivity
from brainalign.pipeline import PipelineConfig, run_all
from brainalign.roi import ROI, area_average, roi_voxels, select_rois
from brainalign.rsa import (
    brain_concept_vectors,
    model_concept_vectors,
    rdm,
    rsa_score,
    shuffled_baseline,
)
from brainalign.synth import (
    AreaSpec,
    LayerSpec,
    SynthConfig,
    _stimulus_table,
    default_config,
    generate_activations,
    generate_features,
    null_config,
    plant_parameters,
)
from brainalign.tensorfile import read_tensor


pytestmark = pytest.mark.acceptance


def _csv_rows(path: Path) -> list[list[str]]:
    return [line.split(",") for line in path.read_text().splitlines()[1:]]


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    """Two independent full pipeline runs of the default config."""
    roots, seconds = [], []
    for tag in ("one", "two"):
        root = tmp_path_factory.mktemp(f"run_{tag}")
        cfg = PipelineConfig(
            out_dir=str(root / "out"),
            data_dir=str(root / "data"),
            synth=default_config(seed=0),
        )
        t0 = time.perf_counter()
        run_all(cfg)
        seconds.append(time.perf_counter() - t0)
        roots.append(root)
    return SimpleNamespace(first=roots[0], second=roots[1], seconds=seconds[0])


def test_consistency_matches_direct_reference():
    """semantic_consistency equals the plain three-correlation mean to 1e-12."""
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10_000):
        n = int(rng.integers(5, 60))
        means = rng.standard_normal((3, n))
        ref = np.mean(
            [np.corrcoef(means[i], means[j])[0, 1] for i, j in ((0, 1), (0, 2), (2, 1))]
        )
        worst = max(worst, abs(semantic_consistency(means) - ref))
    seconds = time.perf_counter() - t0
    print(f"max |difference| {worst:.2e} over 1e4 inputs in {seconds:.1f} s")
    assert worst < 1e-12
    assert seconds < 10.0


def test_null_permutation_rates_are_calibrated():
    """Pure-noise voxels: half p < .05 at ~5%, conjunction at ~0.25%."""
    cfg = null_config(seed=0)  # 50x50x40 grid, one participant, no signal
    truth, weighted, presence = plant_parameters(cfg)
    acts, rows = generate_activations(cfg, truth, weighted, presence, 0)
    concept, paradigm, repetition = (arr[rows] for arr in _stimulus_table(cfg.n_concepts))
    split = split_half_partition(presence)
    t0 = time.perf_counter()
    res = significance_mask(
        acts, concept, paradigm, repetition, cfg.n_concepts, split,
        n_permutations=1000, alpha=0.05, seed=0,
    )
    seconds = time.perf_counter() - t0
    del acts
    rate_a = float(np.mean(res.p_a < 0.05))
    rate_b = float(np.mean(res.p_b < 0.05))
    conjunction = float(res.significant.mean())
    print(
        f"half rates {rate_a:.4f}/{rate_b:.4f}, conjunction {conjunction:.5f}, "
        f"{seconds:.0f} s for 1e5 voxels"
    )
    assert res.p_a.shape == (100_000,)
    assert res.n_excluded == 0
    assert 0.043 <= rate_a <= 0.057
    assert 0.043 <= rate_b <= 0.057
    assert 0.0022 <= conjunction <= 0.0028
    assert seconds < 300.0


def test_planted_consistent_voxels_are_flagged():
    """Voxels whose generator-oracle consistency is >= 0.5 get detected."""
    area = AreaSpec(
        id=1, origin=(0, 0, 0), shape=(10, 10, 8),
        consistency=(0.25, 0.45, 0.7, 1.0), paradigm=0.6, noise=0.8,
        tuning="random",
    )
    cfg = SynthConfig(grid=(10, 10, 8), n_participants=2, areas=(area,), seed=5)
    truth, weighted, presence = plant_parameters(cfg)
    split = split_half_partition(presence)
    concept, paradigm, repetition = _stimulus_table(cfg.n_concepts)
    for p in range(cfg.n_participants):
        acts, rows = generate_activations(cfg, truth, weighted, presence, p)
        res = significance_mask(
            acts, concept[rows], paradigm[rows], repetition[rows],
            cfg.n_concepts, split, n_permutations=1000, seed=0,
        )
        eligible = truth.expected_c[p] >= 0.5
        sensitivity = float(res.significant[eligible].mean())
        print(f"participant {p}: {int(eligible.sum())} eligible voxels, "
              f"sensitivity {sensitivity:.3f}")
        assert eligible.sum() > 0
        assert sensitivity >= 0.90


def test_loo_shortcut_matches_explicit_refits():
    """Hat-matrix LOO residuals equal refitting without each row."""
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(50):
        X = rng.standard_normal((30, 8))
        y = rng.standard_normal(30)
        design = RidgeDesign(X)
        explicit = np.empty((ALPHA_GRID.size, 30))
        for i in range(30):
            rows = np.r_[0:i, i + 1:30]
            sub = RidgeDesign(X[rows])
            for ai, alpha in enumerate(ALPHA_GRID):
                explicit[ai, i] = y[i] - X[i] @ sub.coef(alpha, y[rows])
        for ai, alpha in enumerate(ALPHA_GRID):
            shortcut = (y - design.predict(alpha, X, y)) / (1.0 - design.hat_diag(alpha))
            worst = max(worst, float(np.max(np.abs(shortcut - explicit[ai]))))
    print(f"max |shortcut - explicit| {worst:.2e} over 50 instances x 60 alphas")
    assert worst < 1e-8


def test_ridge_predictions_invariant_to_feature_rotation():
    """Rotating the feature axes leaves predictions unchanged to 1e-10."""
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((40, 10))
        y = rng.standard_normal(40)
        q, _ = np.linalg.qr(rng.standard_normal((10, 10)))
        rotated = X @ q
        d1, d2 = RidgeDesign(X), RidgeDesign(rotated)
        for alpha in ALPHA_GRID:
            diff = d1.predict(alpha, X, y) - d2.predict(alpha, rotated, y)
            worst = max(worst, float(np.max(np.abs(diff))))
    print(f"max prediction difference {worst:.2e} over 5 designs x 60 alphas")
    assert worst < 1e-10


def test_encoding_recovers_planted_predictivity():
    """cv_predictivity lands within 0.05 of the planted correlation."""
    for rho in (0.2, 0.5, 0.8):
        # With unit stimulus noise and noise-free features, a voxel with
        # signal weight a has population predictivity a / sqrt(a^2 + 1).
        a = rho / np.sqrt(1.0 - rho**2)
        area = AreaSpec(
            id=1, origin=(0, 0, 0), shape=(10, 10, 1), consistency=(a,),
            noise=1.0, tuning="random",
        )
        cfg = SynthConfig(
            grid=(10, 10, 1), n_participants=1, feature_dim=8, latent_dim=8,
            layers=(LayerSpec(scale=1.0, noise=0.0),), poolings=(("mean", 1.0),),
            paradigm_feature_weight=0.0, rep_probs=(0.0, 0.0, 1.0),
            areas=(area,), seed=int(rho * 10),
        )
        truth, weighted, presence = plant_parameters(cfg)
        np.testing.assert_allclose(truth.encoding_rho, rho, atol=1e-12)
        acts, rows = generate_activations(cfg, truth, weighted, presence, 0)
        feats = generate_features(cfg)[FeatureConfig(cfg.model_name, 0, "mean")][rows]
        res = cv_predictivity(feats, acts, n_folds=5, seed=0)
        mean_r = float(res.r.mean())
        print(f"rho={rho}: measured {mean_r:.4f} over {res.r.size} voxels")
        assert res.r.shape == (100,)
        assert abs(mean_r - rho) <= 0.05


def test_roi_selection_keeps_only_large_cluster():
    """700-voxel cluster survives; 400-voxel cluster and sub-threshold don't."""
    grid = (20, 20, 10)
    coords = np.argwhere(np.ones(grid, dtype=bool)).astype(np.int64)
    labels = np.zeros(coords.shape[0], dtype=np.int64)

    def paint(area: int, origin, shape) -> None:
        lo = np.asarray(origin)
        hi = lo + np.asarray(shape)
        inside = np.all((coords >= lo) & (coords < hi), axis=1)
        labels[inside] = area

    paint(1, (0, 0, 0), (7, 10, 5))    # touches area 2 across x = 6|7
    paint(2, (7, 0, 0), (7, 10, 5))    # together 700 voxels
    paint(3, (12, 12, 0), (5, 8, 5))   # touches area 4 across z = 4|5
    paint(4, (12, 12, 5), (5, 8, 5))   # together 400 voxels
    paint(5, (12, 11, 0), (5, 1, 10))  # touches area 3 but stays sub-threshold

    values = np.zeros(coords.shape[0])
    values[np.isin(labels, (1, 2, 3, 4))] = 3.0 / 17.0
    values[labels == 5] = 0.03
    area_values = area_average(values, labels)
    selection = select_rois(
        area_values, labels, coords, grid, threshold=1.0 / 17.0, min_voxels=600
    )
    print(f"components {selection.components}, rois "
          f"{[(r.areas, r.n_voxels) for r in selection.rois]}")
    assert [(tuple(a), s) for a, s in selection.components] == [((1, 2), 700), ((3, 4), 400)]
    assert len(selection.rois) == 1
    roi = selection.rois[0]
    assert roi.areas == (1, 2)
    assert roi.n_voxels == 700
    assert roi_voxels(roi, labels).size == 700
    assert 5 not in set(int(a) for a in selection.kept_areas)


def test_rsa_recovers_identical_geometry():
    """Isometric voxels vs noise-free features: rho > .99, flat baseline."""
    grid = (8, 8, 8)
    n_vox = int(np.prod(grid))
    area = AreaSpec(
        id=1, origin=(0, 0, 0), shape=grid, consistency=(1.0,),
        noise=0.0, tuning="isometric",
    )
    cfg = SynthConfig(
        grid=grid, n_participants=1, feature_dim=256, latent_dim=16,
        layers=(LayerSpec(scale=1.0, noise=0.0),), poolings=(("mean", 1.0),),
        paradigm_feature_weight=0.0, rep_probs=(0.0, 0.0, 1.0),
        areas=(area,), seed=21,
    )
    truth, weighted, presence = plant_parameters(cfg)
    acts, rows = generate_activations(cfg, truth, weighted, presence, 0)
    concept, paradigm, _ = _stimulus_table(cfg.n_concepts)
    c, o = concept[rows], paradigm[rows]
    feats = generate_features(cfg)[FeatureConfig(cfg.model_name, 0, "mean")][rows]
    rdm_model = rdm(model_concept_vectors(feats, c, o, "text+image", cfg.n_concepts))

    labels = np.ones(n_vox, dtype=np.int64)
    roi = ROI(id=1, areas=(1,), n_voxels=n_vox)
    vox = roi_voxels(roi, labels)
    rdm_brain = rdm(brain_concept_vectors(acts, c, o, vox, "text+image", cfg.n_concepts))
    rho = rsa_score(rdm_model, rdm_brain)
    null = shuffled_baseline(rdm_model, rdm_brain, n_shuffles=100, seed=0)
    print(f"rho {rho:.5f}, baseline mean {null.mean():+.5f} sd {null.std(ddof=1):.4f}")
    assert rho > 0.99
    assert abs(float(null.mean())) < 0.05

    # Restricting to a significance mask that covers every voxel must not
    # change the score.
    vox_masked = roi_voxels(roi, labels, restrict=np.ones(n_vox, dtype=bool))
    rho_masked = rsa_score(
        rdm_model,
        rdm(brain_concept_vectors(acts, c, o, vox_masked, "text+image", cfg.n_concepts)),
    )
    assert abs(rho - rho_masked) <= 1e-12


def test_binned_predictivity_monotone_in_consistency(default_run):
    """Bin-table r is nondecreasing in consistency at fixed selectivity."""
    rows = _csv_rows(default_run.first / "out" / "report" / "binned_predictivity.csv")
    table = {(int(r[0]), int(r[1])): float(r[2]) for r in rows}
    assert len(table) == 16
    for bl in range(1, 5):
        col = [table[(bc, bl)] for bc in range(1, 5)]
        print(f"selectivity bin {bl}: " + " -> ".join(f"{v:.3f}" for v in col))
        assert all(col[i] <= col[i + 1] for i in range(3))
    enc = json.loads((default_run.first / "out" / "encode" / "summary.json").read_text())
    corrs = [p["area_correlation"] for p in enc["participants"].values()]
    assert all(c is not None for c in corrs)
    print(f"area predictivity-consistency correlations {[round(c, 3) for c in corrs]}")
    assert min(corrs) > 0.6


def test_ceiling_matches_closed_form_and_keeps_sign(default_run):
    """Empirical ceilings track the planted values; adjustment keeps sign."""
    root = default_run.first
    truth = json.loads((root / "data" / "truth" / "ground_truth.json").read_text())
    planted_ceiling = {int(k): v for k, v in truth["area_ceiling"].items()}
    consistent = set(truth["consistent_areas"])
    crows = _csv_rows(root / "out" / "ceiling" / "area_ceiling.csv")
    ceiling = {int(r[0]): float(r[2]) for r in crows}
    reliable = {int(r[0]) for r in crows if int(r[3])}
    worst = max(abs(ceiling[a] - planted_ceiling[a]) for a in consistent)
    print(f"max |ceiling - closed form| over {len(consistent)} planted-signal areas: {worst:.4f}")
    assert worst <= 0.05

    # Ceiling adjustment must not flip the planted consistency-predictivity
    # relation across reliable areas.
    pred: dict[int, list[float]] = {}
    for r in _csv_rows(root / "out" / "encode" / "areas.csv"):
        v = float(r[3])
        if np.isfinite(v):
            pred.setdefault(int(r[1]), []).append(v)
    expected_c = read_tensor(root / "data" / "truth" / "expected_c.btsr").mean(axis=0)
    area_id = read_tensor(root / "data" / "truth" / "area_id.btsr").astype(np.int64)
    areas = sorted(a for a in pred if a in reliable)
    planted_c = np.array([expected_c[area_id == a].mean() for a in areas])
    raw = np.array([np.mean(pred[a]) for a in areas])
    adjusted = raw / np.array([ceiling[a] for a in areas])
    raw_corr = float(np.corrcoef(planted_c, raw)[0, 1])
    adj_corr = float(np.corrcoef(planted_c, adjusted)[0, 1])
    print(f"{len(areas)} reliable areas: correlation raw {raw_corr:.3f}, "
          f"adjusted {adj_corr:.3f}")
    assert raw_corr > 0.0
    assert adj_corr > 0.0


def test_two_runs_byte_identical_and_fast(default_run):
    """Same config twice: identical artifact trees, within the time budget."""
    def tree(root: Path) -> dict[str, Path]:
        return {
            p.relative_to(root).as_posix(): p
            for p in sorted(root.rglob("*"))
            if p.is_file()
        }

    first, second = tree(default_run.first), tree(default_run.second)
    assert sorted(first) == sorted(second)
    mismatched = [name for name in first if first[name].read_bytes() != second[name].read_bytes()]
    print(f"{len(first)} artifacts compared, {len(mismatched)} differ, "
          f"first run took {default_run.seconds:.0f} s")
    assert mismatched == []
    assert default_run.seconds < 300.0
