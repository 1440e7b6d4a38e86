"""Inter-participant noise ceiling for region-level predictivity.

The ceiling for a region is the mean, over participants, of the Pearson
correlation between one participant's response vector and the average
of all other participants' vectors, with responses aligned on a common
stimulus axis. Encoding scores are then reported relative to this
ceiling; regions whose ceiling is at or below the reliability cutoff
are flagged unreliable and excluded from adjusted comparisons.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroVarianceError
from .stats import pearson

RELIABILITY_CUTOFF = 0.05


def noise_ceiling(responses: np.ndarray) -> tuple[float, np.ndarray]:
    """Leave-one-participant-out reliability of a response matrix.

    Args:
        responses: (n_participants, n_stimuli) region-mean responses,
            rows aligned on the same stimuli.

    Returns ``(ceiling, per_participant_r)``.
    """
    responses = np.asarray(responses, dtype=np.float64)
    if responses.ndim != 2 or responses.shape[0] < 2:
        raise ValueError(f"need (P >= 2, n_stimuli) responses, got {responses.shape}")
    n_p = responses.shape[0]
    total = responses.sum(axis=0)
    rs = np.empty(n_p)
    for p in range(n_p):
        others = (total - responses[p]) / (n_p - 1)
        rs[p] = pearson(responses[p], others)  # ZeroVarianceError on flat rows
    return float(rs.mean()), rs


@dataclass(frozen=True)
class AdjustedScore:
    raw: float
    ceiling: float
    adjusted: float  # NaN when unreliable
    reliable: bool


def ceiling_adjust(r: float, ceiling: float, cutoff: float = RELIABILITY_CUTOFF) -> AdjustedScore:
    """Express a predictivity score as a fraction of the noise ceiling."""
    if not np.isfinite(ceiling):
        raise ZeroVarianceError("noise ceiling is not finite")
    reliable = ceiling > cutoff
    adjusted = r / ceiling if reliable else float("nan")
    return AdjustedScore(raw=float(r), ceiling=float(ceiling), adjusted=adjusted, reliable=reliable)


def expected_ceiling(signal_var: float, noise_var: float, n_participants: int) -> float:
    """Closed-form ceiling under the additive signal-plus-noise model.

    If every participant's vector is ``shared signal + independent
    noise`` with the given variances, the population correlation between
    one participant and the mean of the ``P - 1`` others is

        sigma_s^2 * sqrt(P - 1) /
        ( sqrt(sigma_s^2 + sigma_n^2) * sqrt((P - 1) sigma_s^2 + sigma_n^2) )

    which the empirical estimator approaches for long stimulus axes.
    Used by synthetic-data oracles.
    """
    if n_participants < 2:
        raise ValueError("need at least two participants")
    if signal_var < 0 or noise_var < 0:
        raise ValueError("variances must be nonnegative")
    if signal_var == 0:
        return 0.0
    p1 = n_participants - 1
    return (
        signal_var
        * np.sqrt(p1)
        / (np.sqrt(signal_var + noise_var) * np.sqrt(p1 * signal_var + noise_var))
    )
