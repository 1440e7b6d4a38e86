"""Correlation helpers used by the consistency, encoding and RSA stages."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import ZeroVarianceError


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation of two 1-D vectors.

    Raises :class:`ZeroVarianceError` if either vector is constant, since
    the correlation is undefined there. Vectorized callers that prefer to
    flag-and-continue use :func:`pearson_columns`.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch {x.shape} vs {y.shape}")
    if x.size < 2:
        raise ValueError("need at least two samples")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = np.sqrt(xc @ xc)
    sy = np.sqrt(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("correlation undefined for a constant vector")
    return float((xc @ yc) / (sx * sy))


def pearson_columns(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise Pearson correlation between two (n, m) matrices.

    Returns ``(r, valid)`` where ``valid`` marks columns where both
    inputs had nonzero variance; ``r`` is NaN elsewhere.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"expected matching 2-D shapes, got {a.shape} and {b.shape}")
    ac = a - a.mean(axis=0)
    bc = b - b.mean(axis=0)
    sa = np.sqrt(np.einsum("ij,ij->j", ac, ac))
    sb = np.sqrt(np.einsum("ij,ij->j", bc, bc))
    valid = (sa > 0.0) & (sb > 0.0)
    denom = np.where(valid, sa * sb, 1.0)
    r = np.einsum("ij,ij->j", ac, bc) / denom
    r[~valid] = np.nan
    return r, valid


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation with average ranks for ties."""
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))
