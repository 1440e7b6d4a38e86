"""Representational similarity analysis between model and brain geometry.

Each side contributes one vector per concept: the model side averages
the representations of a concept's included stimuli (word clouds count
once per concept, since one token sequence stands for all six spatial
arrangements), the brain side averages the voxel responses over the
included stimulus presentations. A representational dissimilarity
matrix (RDM) holds 1 - Pearson r between concept vectors, and the score
for a (model, brain) pair is the Spearman correlation over the strict
lower triangles. The chance level comes from shuffling the brain side's
concept assignment.
"""

from __future__ import annotations

import numpy as np

from .errors import ZeroVarianceError
from .rng import rng_for
from .stats import spearman

# Paradigm codes follow dataset.PARADIGMS = ("S", "P", "WC").
CONDITION_PARADIGMS: dict[str, tuple[int, ...]] = {
    "text-only": (0, 2),
    "text+image": (0, 1, 2),
}
WC_CODE = 2


def _condition_codes(condition: str) -> tuple[int, ...]:
    try:
        return CONDITION_PARADIGMS[condition]
    except KeyError:
        raise ValueError(
            f"unknown condition {condition!r}, expected one of {sorted(CONDITION_PARADIGMS)}"
        ) from None


def model_concept_vectors(
    features: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    condition: str = "text+image",
    n_concepts: int | None = None,
) -> np.ndarray:
    """Per-concept mean feature vectors for one stimulus condition.

    Word-cloud rows are collapsed to a single vector per concept before
    averaging (they are duplicates of one shared representation), so a
    concept's vector is the mean of its sentence rows, picture rows (if
    the condition includes them) and one word-cloud row.
    """
    features = np.asarray(features, dtype=np.float64)
    codes = _condition_codes(condition)
    if n_concepts is None:
        n_concepts = int(np.max(concept)) + 1
    out = np.empty((n_concepts, features.shape[1]))
    for c in range(n_concepts):
        rows = []
        for code in codes:
            members = np.flatnonzero((concept == c) & (paradigm == code))
            if members.size == 0:
                raise ValueError(f"concept {c} has no stimuli for paradigm code {code}")
            if code == WC_CODE:
                rows.append(features[members].mean(axis=0)[None, :])
            else:
                rows.append(features[members])
        out[c] = np.concatenate(rows, axis=0).mean(axis=0)
    return out


def brain_concept_vectors(
    acts: np.ndarray,
    concept: np.ndarray,
    paradigm: np.ndarray,
    voxel_indices: np.ndarray,
    condition: str = "text+image",
    n_concepts: int | None = None,
) -> np.ndarray:
    """Per-concept mean response vectors over a voxel set."""
    voxel_indices = np.asarray(voxel_indices)
    if voxel_indices.size == 0:
        raise ValueError("empty voxel set")
    codes = _condition_codes(condition)
    included = np.isin(paradigm, codes)
    acts = np.asarray(acts)[:, voxel_indices]
    if n_concepts is None:
        n_concepts = int(np.max(concept)) + 1
    out = np.empty((n_concepts, voxel_indices.size))
    for c in range(n_concepts):
        rows = np.flatnonzero(included & (concept == c))
        if rows.size == 0:
            raise ValueError(f"concept {c} has no stimuli in condition {condition!r}")
        out[c] = acts[rows].mean(axis=0)
    return out


def rdm(vectors: np.ndarray) -> np.ndarray:
    """Representational dissimilarity matrix, 1 - Pearson r between rows.

    Exactly symmetric with a zero diagonal; entries live in [0, 2].
    Raises :class:`ZeroVarianceError` if any concept vector is constant.
    """
    v = np.asarray(vectors, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
        raise ValueError(f"expected (n_concepts >= 2, dim >= 2), got {v.shape}")
    centered = v - v.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(centered, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVarianceError("constant concept vector, dissimilarity undefined")
    z = centered / norms[:, None]
    d = 1.0 - z @ z.T
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return np.clip(d, 0.0, 2.0)


def lower_triangle(matrix: np.ndarray) -> np.ndarray:
    """Strict lower-triangle entries in row-major order."""
    matrix = np.asarray(matrix)
    rows, cols = np.tril_indices(matrix.shape[0], k=-1)
    return matrix[rows, cols]


def rsa_score(rdm_model: np.ndarray, rdm_brain: np.ndarray) -> float:
    """Spearman correlation between two RDMs' strict lower triangles."""
    rdm_model = np.asarray(rdm_model)
    rdm_brain = np.asarray(rdm_brain)
    if rdm_model.shape != rdm_brain.shape:
        raise ValueError(f"RDM shapes differ: {rdm_model.shape} vs {rdm_brain.shape}")
    if rdm_model.shape[0] < 3:
        raise ValueError("need at least 3 concepts for a rank correlation")
    return spearman(lower_triangle(rdm_model), lower_triangle(rdm_brain))


def shuffled_baseline(
    rdm_model: np.ndarray,
    rdm_brain: np.ndarray,
    n_shuffles: int = 100,
    seed: int = 0,
) -> np.ndarray:
    """RSA scores after shuffling the brain side's concept labels.

    Each shuffle draws a non-identity permutation of the concepts and
    scores the model RDM against the brain RDM with rows and columns
    permuted together (equivalent to permuting the concept vectors
    before computing dissimilarities).
    """
    if n_shuffles < 1:
        raise ValueError("n_shuffles must be >= 1")
    rng = rng_for(seed, 0xB5)
    n = np.asarray(rdm_brain).shape[0]
    scores = np.empty(n_shuffles)
    for k in range(n_shuffles):
        perm = rng.permutation(n)
        while np.array_equal(perm, np.arange(n)):
            perm = rng.permutation(n)
        scores[k] = rsa_score(rdm_model, rdm_brain[np.ix_(perm, perm)])
    return scores
