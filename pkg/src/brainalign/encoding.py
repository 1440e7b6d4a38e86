"""Ridge encoding models mapping stimulus features to voxel responses.

The estimator solves ``w = argmin ||y - Xw||^2 + alpha ||w||^2`` through
one SVD of the design matrix, which stays stable across a penalty grid
spanning 60 decades (1e-30 .. 1e29) and is shared by every target
predicted from the same design. Per-fold penalties are chosen by
leave-one-out error using the hat-matrix shortcut

    e_i = (y_i - yhat_i) / (1 - h_ii),

and reported predictivity is the mean held-out Pearson r over five
outer folds (seeded shuffle, contiguous near-equal splits).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridMismatchError
from .rng import rng_for
from .stats import pearson, pearson_columns

ALPHA_GRID = 10.0 ** np.arange(-30, 30, dtype=np.float64)  # 60 decades
POOLING_ORDER = ("mean", "last", "cls", "unimodal-mean", "multimodal")
_POOLING_RANK = {name: i for i, name in enumerate(POOLING_ORDER)}


class RidgeDesign:
    """SVD of a design matrix, reused across penalties and targets.

    Numerically zero singular values (below ``eps * max(n, d) * s_max``,
    the lstsq convention) are dropped, so ``alpha = 0`` yields the
    minimum-norm least-squares solution.
    """

    def __init__(self, X: np.ndarray):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D, got shape {X.shape}")
        self.n, self.d = X.shape
        u, s, vt = np.linalg.svd(X, full_matrices=False)
        cut = np.finfo(np.float64).eps * max(X.shape) * (s[0] if s.size else 0.0)
        rank = int((s > cut).sum())
        self.u = u[:, :rank]
        self.s = s[:rank]
        self.vt = vt[:rank]

    def _shrink(self, alpha: float) -> np.ndarray:
        return self.s / (self.s**2 + alpha)

    def coef(self, alpha: float, y: np.ndarray) -> np.ndarray:
        """Ridge weights for one target or a (n, T) column stack."""
        y = np.asarray(y, dtype=np.float64)
        uty = self.u.T @ y
        shrunk = (self._shrink(alpha) * uty.T).T
        return self.vt.T @ shrunk

    def predict(self, alpha: float, X: np.ndarray, y: np.ndarray) -> np.ndarray:
        return X @ self.coef(alpha, y)

    def hat_diag(self, alpha: float) -> np.ndarray:
        """Diagonal of X (X'X + alpha I)^-1 X'."""
        f = self.s**2 / (self.s**2 + alpha)
        return np.einsum("ij,j,ij->i", self.u, f, self.u)

    def loo_sse(self, alpha: float, y: np.ndarray) -> np.ndarray:
        """Leave-one-out squared error per target via the hat shortcut.

        Targets where some ``1 - h_ii`` vanishes (an interpolating fit,
        which happens for alpha = 0 on designs of full row rank) score
        +inf so the penalty search skips that alpha.
        """
        y = np.atleast_2d(y.T).T
        denom = 1.0 - self.hat_diag(alpha)
        if np.any(np.abs(denom) < 1e-12):
            return np.full(y.shape[1], np.inf)
        resid = y - self.u @ ((self.s**2 / (self.s**2 + alpha)) * (self.u.T @ y).T).T
        loo = resid / denom[:, None]
        return np.einsum("ij,ij->j", loo, loo)


def ridge_fit(X: np.ndarray, y: np.ndarray, alpha: float) -> np.ndarray:
    """Ridge weights; ``alpha = 0`` gives the minimum-norm OLS solution."""
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} design rows vs {y.shape[0]} target rows")
    return RidgeDesign(X).coef(alpha, y)


def loocv_select_alpha(
    X: np.ndarray | RidgeDesign,
    y: np.ndarray,
    alphas: np.ndarray = ALPHA_GRID,
) -> tuple[np.ndarray, np.ndarray]:
    """Pick the LOO-best penalty per target; ties go to the smallest alpha.

    Returns ``(alpha_index, sse)`` with ``alpha_index`` of shape (T,)
    and ``sse`` of shape (len(alphas), T).
    """
    design = X if isinstance(X, RidgeDesign) else RidgeDesign(X)
    y = np.atleast_2d(np.asarray(y, dtype=np.float64).T).T
    alphas = np.asarray(alphas, dtype=np.float64)
    if alphas.size == 0 or np.any(np.diff(alphas) <= 0):
        raise ValueError("alphas must be a nonempty increasing grid")
    sse = np.stack([design.loo_sse(a, y) for a in alphas])
    return np.argmin(sse, axis=0), sse  # argmin takes the first (smallest) alpha


@dataclass
class CVResult:
    """Cross-validated predictivity for a batch of targets."""

    r: np.ndarray  # (T,) mean held-out Pearson r over folds
    fold_r: np.ndarray  # (k, T)
    alpha: np.ndarray  # (k, T) selected penalty per fold and target
    zero_variance: np.ndarray  # (k, T) bool, folds scored r = 0 by flag
    n_folds: int
    seed: int

    @property
    def flagged(self) -> np.ndarray:
        return self.zero_variance.any(axis=0)


def cv_predictivity(
    X: np.ndarray,
    y: np.ndarray,
    n_folds: int = 5,
    seed: int = 0,
    alphas: np.ndarray = ALPHA_GRID,
) -> CVResult:
    """Held-out encoding performance for one or many targets.

    Rows are shuffled once with a seeded generator and cut into
    ``n_folds`` contiguous near-equal folds. Within each fold's training
    split the penalty is selected per target by LOO error, then the
    refit model is scored by Pearson r on the held-out rows. Zero
    variance in either held-out vector scores that fold r = 0 and sets
    a diagnostic flag.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.atleast_2d(np.asarray(y, dtype=np.float64).T).T
    n, n_targets = Y.shape
    if X.shape[0] != n:
        raise ValueError(f"{X.shape[0]} design rows vs {n} target rows")
    if n_folds < 2 or n_folds > n:
        raise ValueError(f"n_folds {n_folds} outside [2, {n}]")
    order = rng_for(seed).permutation(n)
    folds = np.array_split(order, n_folds)

    fold_r = np.zeros((n_folds, n_targets))
    fold_alpha = np.zeros((n_folds, n_targets))
    flags = np.zeros((n_folds, n_targets), dtype=bool)
    for k, test_rows in enumerate(folds):
        train_rows = np.setdiff1d(order, test_rows, assume_unique=True)
        design = RidgeDesign(X[train_rows])
        alpha_idx, _ = loocv_select_alpha(design, Y[train_rows], alphas)
        pred = np.empty((test_rows.shape[0], n_targets))
        for ai in np.unique(alpha_idx):
            cols = np.flatnonzero(alpha_idx == ai)
            w = design.coef(alphas[ai], Y[np.ix_(train_rows, cols)])
            pred[:, cols] = X[test_rows] @ w
        r, valid = pearson_columns(pred, Y[test_rows])
        r[~valid] = 0.0
        fold_r[k] = r
        fold_alpha[k] = alphas[alpha_idx]
        flags[k] = ~valid
    return CVResult(
        r=fold_r.mean(axis=0),
        fold_r=fold_r,
        alpha=fold_alpha,
        zero_variance=flags,
        n_folds=n_folds,
        seed=seed,
    )


def word_cloud_collapse(
    acts: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    repetition: np.ndarray,
    wc_code: int = 2,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, list[np.ndarray]]:
    """Average word-cloud rows per concept; sentence/picture rows pass through.

    The first word-cloud row of each concept (in input order) is kept,
    carrying the mean response over that concept's word-cloud rows with
    repetition index 0. Returns the reduced ``(acts, concept, paradigm,
    repetition)`` plus ``groups``: for each surviving row, the original
    row indices it averages. Apply the same grouping to feature matrices
    so rows stay aligned (word-cloud feature rows are duplicates by
    construction, so their mean is the shared row).
    """
    acts = np.asarray(acts)
    keep_rows: list[int] = []
    groups: list[np.ndarray] = []
    first_wc: dict[int, int] = {}
    for i in range(acts.shape[0]):
        if paradigm[i] != wc_code:
            keep_rows.append(i)
            groups.append(np.array([i]))
        elif int(concept[i]) not in first_wc:
            first_wc[int(concept[i])] = len(keep_rows)
            keep_rows.append(i)
            groups.append(np.flatnonzero((paradigm == wc_code) & (concept == concept[i])))
    new_acts = np.stack([acts[g].mean(axis=0) for g in groups])
    new_concept = np.asarray(concept)[keep_rows]
    new_paradigm = np.asarray(paradigm)[keep_rows]
    new_repetition = np.asarray(repetition)[keep_rows].copy()
    new_repetition[new_paradigm == wc_code] = 0
    return new_acts, new_concept, new_paradigm, new_repetition, groups


def collapse_rows(features: np.ndarray, groups: list[np.ndarray]) -> np.ndarray:
    """Apply a :func:`word_cloud_collapse` row grouping to a feature matrix."""
    features = np.asarray(features, dtype=np.float64)
    return np.stack([features[g].mean(axis=0) for g in groups])


@dataclass(frozen=True)
class FeatureConfig:
    model: str
    layer: int
    pooling: str

    def sort_key(self):
        return (self.model, self.layer, _POOLING_RANK.get(self.pooling, len(POOLING_ORDER)))


def select_best_feature_config(
    y: np.ndarray,
    feature_sets: dict[FeatureConfig, np.ndarray],
    n_folds: int = 5,
    seed: int = 0,
    alphas: np.ndarray = ALPHA_GRID,
) -> tuple[FeatureConfig, list[tuple[FeatureConfig, float]]]:
    """Sweep (layer, pooling) feature sets against one target signal.

    Returns the best config and the full sweep table. Ties prefer the
    lower layer, then the earlier pooling in ``POOLING_ORDER``.
    """
    if not feature_sets:
        raise ValueError("no feature sets to sweep")
    table = []
    for config in sorted(feature_sets, key=FeatureConfig.sort_key):
        res = cv_predictivity(feature_sets[config], y, n_folds=n_folds, seed=seed, alphas=alphas)
        table.append((config, float(res.r[0])))
    # Strict > keeps the first of equal scores, i.e. the tie-break order
    # the table is sorted in: lower layer first, then pooling order.
    best, best_score = None, -np.inf
    for config, score in table:
        if score > best_score:
            best, best_score = config, score
    return best, table


def language_selectivity(sentences: np.ndarray, nonwords: np.ndarray) -> np.ndarray:
    """Per-voxel localizer contrast: sentence betas minus nonword betas."""
    sentences = np.asarray(sentences, dtype=np.float64)
    nonwords = np.asarray(nonwords, dtype=np.float64)
    if sentences.shape != nonwords.shape:
        raise GridMismatchError(
            f"localizer volumes differ: {sentences.shape} vs {nonwords.shape}"
        )
    return sentences - nonwords


def quartile_bins(values: np.ndarray) -> np.ndarray:
    """Rank-based quartile labels 1..4, stable on ties by position.

    With n voxels, rank k (0-based, stable sort) lands in bin
    ``4 * k // n + 1``, so marginal bin sizes differ by at most one.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size < 4:
        raise ValueError("need a 1-D array with at least 4 values")
    if not np.isfinite(values).all():
        raise ValueError("bin values must be finite; filter excluded voxels first")
    order = np.argsort(values, kind="stable")
    ranks = np.empty_like(order)
    ranks[order] = np.arange(values.size)
    return (4 * ranks // values.size + 1).astype(np.int64)


@dataclass
class BinnedPredictivity:
    r: np.ndarray  # (4, 4) mean cv r, NaN for empty cells
    n_voxels: np.ndarray  # (4, 4) cell occupancy
    result: CVResult | None  # per-cell CV detail, column order = filled cells
    cells: list[tuple[int, int]]  # (consistency bin, selectivity bin) per column


def binned_predictivity(
    acts: np.ndarray,
    X: np.ndarray,
    consistency_bins: np.ndarray,
    selectivity_bins: np.ndarray,
    n_folds: int = 5,
    seed: int = 0,
    alphas: np.ndarray = ALPHA_GRID,
) -> BinnedPredictivity:
    """Encoding performance of cell-mean signals on a (b_C, b_L) grid.

    Voxels (columns of ``acts``) are grouped by the two bin labelings;
    each nonempty cell's voxel-mean response becomes one target.
    """
    consistency_bins = np.asarray(consistency_bins)
    selectivity_bins = np.asarray(selectivity_bins)
    if acts.shape[1] != consistency_bins.shape[0] or acts.shape[1] != selectivity_bins.shape[0]:
        raise GridMismatchError("bin labelings do not match the voxel axis")
    cells = []
    targets = []
    counts = np.zeros((4, 4), dtype=np.int64)
    for bc in range(1, 5):
        for bl in range(1, 5):
            members = np.flatnonzero((consistency_bins == bc) & (selectivity_bins == bl))
            counts[bc - 1, bl - 1] = members.size
            if members.size:
                cells.append((bc, bl))
                targets.append(acts[:, members].mean(axis=1))
    table = np.full((4, 4), np.nan)
    result = None
    if targets:
        result = cv_predictivity(X, np.column_stack(targets), n_folds=n_folds, seed=seed, alphas=alphas)
        for (bc, bl), r in zip(cells, result.r):
            table[bc - 1, bl - 1] = r
    return BinnedPredictivity(r=table, n_voxels=counts, result=result, cells=cells)


def area_predictivity_correlation(
    area_predictivity: np.ndarray, area_consistency: np.ndarray
) -> tuple[float, int]:
    """Pearson r between per-area predictivity and consistency.

    Both inputs are (n_areas + 1,) arrays indexed by area id with NaN
    for absent areas; only areas finite in both enter the correlation.
    Returns ``(r, n_areas_used)``.
    """
    a = np.asarray(area_predictivity, dtype=np.float64)
    b = np.asarray(area_consistency, dtype=np.float64)
    if a.shape != b.shape:
        raise GridMismatchError(f"area tables differ: {a.shape} vs {b.shape}")
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 2:
        raise ValueError("need at least two areas present in both tables")
    return pearson(a[ok], b[ok]), int(ok.sum())
