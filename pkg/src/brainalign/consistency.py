"""Semantic consistency scoring and its split-half permutation test.

A voxel's consistency is the mean of the three pairwise Pearson
correlations between its per-concept mean responses under the three
presentation paradigms (sentences, pictures, word clouds):

    C = [ r(b_S, b_P) + r(b_S, b_WC) + r(b_WC, b_P) ] / 3

Significance is assessed on two disjoint halves of the repetitions.
For each half, each paradigm's concept vector is shuffled independently
``n_permutations`` times and the voxel's p-value is the add-one
estimator ``p = (1 + #{C_null >= C}) / (n_permutations + 1)``. A voxel
counts as significant only if p < alpha on both halves.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import _perm
from .errors import GridMismatchError, ZeroVarianceError
from .stats import pearson, pearson_columns

N_PARADIGMS = 3
HALF_TAGS = {"A": 0, "B": 1}

# The ten unordered 3|3 partitions of {0..5}, each represented by the
# half containing repetition 0 and listed in lexicographic order, so
# that "first minimum" below is also the lexicographic tie-break.
PARTITIONS: tuple[tuple[int, ...], ...] = tuple(
    (0, *rest) for rest in combinations(range(1, 6), 2)
)
PARTITION_MASKS = np.zeros((len(PARTITIONS), 6), dtype=bool)
for _k, _half in enumerate(PARTITIONS):
    PARTITION_MASKS[_k, list(_half)] = True


class EmptyCellError(ValueError):
    """A (concept, paradigm) cell has no repetitions in the requested half."""


@dataclass
class SplitAssignment:
    """Chosen 3|3 repetition partition per (concept, paradigm) cell."""

    partition: np.ndarray  # (n_concepts, 3) int8 index into PARTITIONS

    def half_sets(self, concept: int, paradigm: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
        half_a = PARTITIONS[int(self.partition[concept, paradigm])]
        half_b = tuple(r for r in range(6) if r not in half_a)
        return half_a, half_b


def split_half_partition(presence: np.ndarray) -> SplitAssignment:
    """Pick the repetition split for every (concept, paradigm) cell.

    Args:
        presence: (n_participants, n_concepts, 3, 6) boolean array marking
            which repetitions each participant saw.

    For each cell, the partition minimizing the number of participants
    whose four seen repetitions would split 3|1 is selected; ties go to
    the lexicographically smallest half containing repetition 0.
    """
    presence = np.asarray(presence, dtype=bool)
    if presence.ndim != 4 or presence.shape[2] != N_PARADIGMS or presence.shape[3] != 6:
        raise ValueError(f"presence shape {presence.shape}, expected (P, C, 3, 6)")
    count_a = np.einsum("pcor,kr->kpco", presence, PARTITION_MASKS.astype(np.int64))
    n_seen = presence.sum(axis=3)  # (P, C, 3)
    imbalanced = (n_seen[None] == 4) & ((count_a == 1) | (count_a == 3))
    score = imbalanced.sum(axis=1)  # (10, C, 3)
    best = np.argmin(score, axis=0).astype(np.int8)  # first minimum = lex smallest
    return SplitAssignment(partition=best)


def _half_rows(
    concept: np.ndarray,
    paradigm: np.ndarray,
    repetition: np.ndarray,
    half: str,
    split: SplitAssignment | None,
) -> np.ndarray:
    if half == "all":
        return np.arange(concept.shape[0])
    if half not in HALF_TAGS:
        raise ValueError(f"half must be 'all', 'A' or 'B', got {half!r}")
    if split is None:
        raise ValueError("half selection requires a SplitAssignment")
    part_idx = split.partition[concept, paradigm]
    in_a = PARTITION_MASKS[part_idx, repetition]
    return np.flatnonzero(in_a if half == "A" else ~in_a)


def _grouping(concept: np.ndarray, paradigm: np.ndarray, rows: np.ndarray, n_concepts: int):
    """Sorted row order and reduceat boundaries for (paradigm, concept) groups."""
    g = paradigm[rows] * n_concepts + concept[rows]
    counts = np.bincount(g, minlength=N_PARADIGMS * n_concepts)
    if (counts == 0).any():
        flat = int(np.flatnonzero(counts == 0)[0])
        raise EmptyCellError(
            f"concept {flat % n_concepts} paradigm {flat // n_concepts} has no "
            "repetitions in the requested half"
        )
    order = np.argsort(g, kind="stable")
    starts = np.zeros(counts.shape[0], dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    return rows[order], starts, counts


def concept_means(
    acts: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    repetition: np.ndarray,
    n_concepts: int,
    half: str = "all",
    split: SplitAssignment | None = None,
) -> np.ndarray:
    """Per-paradigm concept mean responses for one participant.

    Args:
        acts: (n_stimuli, n_voxels) activation matrix, rows in the same
            order as the stimulus descriptor arrays.
        concept, paradigm, repetition: (n_stimuli,) integer descriptors.
        n_concepts: length of the concept axis in the result.
        half: "all", "A" or "B"; the halves follow ``split``.

    Returns (3, n_concepts, n_voxels) float64 means. Raises
    :class:`EmptyCellError` when a cell has no selected repetitions.
    """
    acts = np.atleast_2d(np.asarray(acts))
    rows = _half_rows(concept, paradigm, repetition, half, split)
    sorted_rows, starts, counts = _grouping(concept, paradigm, rows, n_concepts)
    sums = np.add.reduceat(acts[sorted_rows].astype(np.float64, copy=False), starts, axis=0)
    means = sums / counts[:, None]
    return means.reshape(N_PARADIGMS, n_concepts, acts.shape[1])


def semantic_consistency(means: np.ndarray) -> float:
    """Consistency of one voxel from its (3, n_concepts) paradigm means."""
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] != N_PARADIGMS:
        raise ValueError(f"expected (3, n_concepts), got {means.shape}")
    r_sp = pearson(means[0], means[1])
    r_sw = pearson(means[0], means[2])
    r_wp = pearson(means[2], means[1])
    return (r_sp + r_sw + r_wp) / 3.0


def consistency_map(means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized consistency over voxels.

    Args:
        means: (3, n_concepts, n_voxels) output of :func:`concept_means`.

    Returns ``(c, valid)``; voxels with a constant paradigm vector are
    flagged invalid and get NaN.
    """
    means = np.asarray(means, dtype=np.float64)
    r_sp, v1 = pearson_columns(means[0], means[1])
    r_sw, v2 = pearson_columns(means[0], means[2])
    r_wp, v3 = pearson_columns(means[2], means[1])
    valid = v1 & v2 & v3
    c = (r_sp + r_sw + r_wp) / 3.0
    c[~valid] = np.nan
    return c, valid


def voxel_set_consistency(
    acts: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    repetition: np.ndarray,
    n_concepts: int,
    voxel_indices: np.ndarray,
    half: str = "all",
    split: SplitAssignment | None = None,
) -> float:
    """Consistency of a voxel set: responses are averaged over voxels first."""
    voxel_indices = np.asarray(voxel_indices)
    if voxel_indices.size == 0:
        raise ValueError("empty voxel set")
    pooled = acts[:, voxel_indices].mean(axis=1, keepdims=True)
    means = concept_means(pooled, concept, paradigm, repetition, n_concepts, half, split)
    return semantic_consistency(means[:, :, 0])


def _unit_rows(means: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Center and scale paradigm vectors to unit norm for the kernel.

    Args:
        means: (3, n_concepts, V).

    Returns ``(z, valid)`` with z float32 of shape (V, 3, n_concepts).
    """
    z = means - means.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.einsum("ocv,ocv->ov", z, z))
    valid = (norms > 0.0).all(axis=0)
    np.maximum(norms, 1e-300, out=norms)
    z /= norms[:, None, :]
    return np.ascontiguousarray(z.transpose(2, 0, 1), dtype=np.float32), valid


def permutation_pvalue(
    means: np.ndarray,
    n_permutations: int = 1000,
    seed: int = 0,
    voxel_id: int = 0,
    half_tag: int | str = 0,
) -> float:
    """Permutation p-value for one voxel's (3, n_concepts) half means.

    Shuffles each paradigm vector independently ``n_permutations`` times
    using the counter-based stream keyed by (seed, voxel_id, half_tag)
    and returns ``(1 + #{C_null >= C}) / (n_permutations + 1)``.
    """
    means = np.asarray(means, dtype=np.float64)
    if means.ndim != 2 or means.shape[0] != N_PARADIGMS:
        raise ValueError(f"expected (3, n_concepts), got {means.shape}")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    tag = HALF_TAGS[half_tag] if isinstance(half_tag, str) else int(half_tag)
    c_obs = semantic_consistency(means)  # raises ZeroVarianceError on constants
    z, valid = _unit_rows(means[:, :, None])
    if not valid[0]:
        raise ZeroVarianceError("correlation undefined for a constant vector")
    counts = _perm.null_exceed_counts(
        z,
        np.array([c_obs], dtype=np.float32),
        np.array([True]),
        np.array([voxel_id], dtype=np.int64),
        int(n_permutations),
        int(seed),
        tag,
    )
    return float((1 + counts[0]) / (n_permutations + 1))


@dataclass
class MaskResult:
    """Per-voxel significance decisions for one participant."""

    significant: np.ndarray  # (V,) bool, p < alpha on both halves
    p_a: np.ndarray  # (V,) float64, NaN where excluded
    p_b: np.ndarray
    c_all: np.ndarray  # consistency over all repetitions
    c_a: np.ndarray
    c_b: np.ndarray
    excluded: np.ndarray  # (V,) bool, zero-variance voxels
    n_permutations: int
    alpha: float
    seed: int

    @property
    def n_excluded(self) -> int:
        return int(self.excluded.sum())


def significance_mask(
    acts: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    repetition: np.ndarray,
    n_concepts: int,
    split: SplitAssignment,
    n_permutations: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
    voxel_ids: np.ndarray | None = None,
    chunk_size: int = 16384,
) -> MaskResult:
    """Split-half permutation test over all voxels of one participant.

    Voxels are processed in column chunks to bound memory; results are
    identical for any chunking because every voxel consumes its own
    random stream keyed by its global index (``voxel_ids`` defaults to
    0..V-1 and exists so external shards can keep global numbering).
    """
    n_vox = acts.shape[1]
    if voxel_ids is None:
        voxel_ids = np.arange(n_vox, dtype=np.int64)
    p = {h: np.full(n_vox, np.nan) for h in ("A", "B")}
    c_half = {h: np.full(n_vox, np.nan) for h in ("A", "B")}
    c_all = np.full(n_vox, np.nan)
    excluded = np.zeros(n_vox, dtype=bool)

    plan = {
        half: _grouping(
            concept, paradigm, _half_rows(concept, paradigm, repetition, half, split), n_concepts
        )
        for half in ("all", "A", "B")
    }
    for lo in range(0, n_vox, chunk_size):
        hi = min(lo + chunk_size, n_vox)
        block = acts[:, lo:hi]
        for half, (sorted_rows, starts, counts) in plan.items():
            sums = np.add.reduceat(
                block[sorted_rows].astype(np.float64, copy=False), starts, axis=0
            )
            means = (sums / counts[:, None]).reshape(N_PARADIGMS, n_concepts, hi - lo)
            if half == "all":
                c_all[lo:hi], _ = consistency_map(means)
                continue
            c_obs, valid = consistency_map(means)
            z, z_valid = _unit_rows(means)
            valid &= z_valid
            counts_null = _perm.null_exceed_counts(
                z,
                np.nan_to_num(c_obs).astype(np.float32),
                valid,
                voxel_ids[lo:hi],
                int(n_permutations),
                int(seed),
                HALF_TAGS[half],
            )
            p_half = (1.0 + counts_null) / (n_permutations + 1.0)
            p_half[~valid] = np.nan
            p[half][lo:hi] = p_half
            c_half[half][lo:hi] = c_obs
            excluded[lo:hi] |= ~valid
    significant = np.zeros(n_vox, dtype=bool)
    ok = ~excluded
    significant[ok] = (p["A"][ok] < alpha) & (p["B"][ok] < alpha)
    return MaskResult(
        significant=significant,
        p_a=p["A"],
        p_b=p["B"],
        c_all=c_all,
        c_a=c_half["A"],
        c_b=c_half["B"],
        excluded=excluded,
        n_permutations=n_permutations,
        alpha=alpha,
        seed=seed,
    )


def probabilistic_map(masks: np.ndarray) -> np.ndarray:
    """Fraction of participants significant per voxel.

    Args:
        masks: (n_participants, n_voxels) boolean stack, one shared grid.
    """
    masks = np.asarray(masks)
    if masks.ndim != 2:
        raise GridMismatchError(f"expected (P, V) mask stack, got shape {masks.shape}")
    if masks.dtype != bool:
        raise ValueError("masks must be boolean")
    return masks.mean(axis=0)
