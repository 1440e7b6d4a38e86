"""Region-of-interest extraction from a probabilistic consistency map.

The atlas labels voxels with anatomical area ids 1..360 (0 is
background; by convention 1-180 left hemisphere, 181-360 right). ROI
selection follows three steps: average the map over each area, keep
areas whose average reaches the participation threshold (1/17 by
default, the smallest nonzero fraction a 17-participant cohort can
produce), then group kept areas into connected components, where two
areas touch if any of their voxels are 6-adjacent (face neighbors).
Components with more than ``min_voxels`` voxels become ROIs, numbered
1..k from largest to smallest.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError

N_AREAS = 360
DEFAULT_THRESHOLD = 1.0 / 17.0
DEFAULT_MIN_VOXELS = 600


def atlas_labels(atlas: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """Area id per voxel, looked up from the atlas volume."""
    atlas = np.asarray(atlas)
    coords = np.asarray(coords, dtype=np.int64)
    if atlas.ndim != 3:
        raise ValueError(f"atlas must be 3-D, got shape {atlas.shape}")
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValueError(f"coords must be (V, 3), got shape {coords.shape}")
    if coords.size and (coords.min() < 0 or np.any(coords.max(axis=0) >= atlas.shape)):
        raise GridMismatchError(f"voxel coordinates fall outside the atlas grid {atlas.shape}")
    return atlas[coords[:, 0], coords[:, 1], coords[:, 2]].astype(np.int64)


def area_average(values: np.ndarray, labels: np.ndarray, n_areas: int = N_AREAS) -> np.ndarray:
    """Mean of a per-voxel map within each atlas area.

    Returns a (n_areas + 1,) array indexed by area id; index 0 and areas
    without voxels hold NaN. NaN voxel values propagate into their
    area's mean, so excluded voxels must be imputed or dropped upstream.
    """
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if values.shape != labels.shape or values.ndim != 1:
        raise GridMismatchError(
            f"values shape {values.shape} does not match labels shape {labels.shape}"
        )
    if labels.size and (labels.min() < 0 or labels.max() > n_areas):
        raise ValueError(f"labels outside 0..{n_areas}")
    sums = np.bincount(labels, weights=values, minlength=n_areas + 1)
    counts = np.bincount(labels, minlength=n_areas + 1)
    out = np.full(n_areas + 1, np.nan)
    present = counts > 0
    out[present] = sums[present] / counts[present]
    out[0] = np.nan
    return out


def area_adjacency(labels: np.ndarray, coords: np.ndarray, grid_shape) -> np.ndarray:
    """Boolean (n+1, n+1) matrix of 6-adjacency between labeled areas."""
    n = int(max(N_AREAS, labels.max() if labels.size else 0))
    vol = np.zeros(tuple(grid_shape), dtype=np.int32)
    vol[coords[:, 0], coords[:, 1], coords[:, 2]] = labels
    adj = np.zeros((n + 1, n + 1), dtype=bool)
    for axis in range(3):
        a = np.moveaxis(vol, axis, 0)[:-1].ravel()
        b = np.moveaxis(vol, axis, 0)[1:].ravel()
        touching = (a > 0) & (b > 0) & (a != b)
        adj[a[touching], b[touching]] = True
    return adj | adj.T


@dataclass(frozen=True)
class ROI:
    id: int
    areas: tuple[int, ...]
    n_voxels: int


@dataclass
class ROISelection:
    """Selected ROIs plus the intermediate selection stages for reporting."""

    rois: list[ROI]
    kept_areas: np.ndarray  # area ids passing the participation threshold
    components: list[tuple[tuple[int, ...], int]] = field(default_factory=list)
    threshold: float = DEFAULT_THRESHOLD
    min_voxels: int = DEFAULT_MIN_VOXELS


def select_rois(
    area_values: np.ndarray,
    labels: np.ndarray,
    coords: np.ndarray,
    grid_shape,
    threshold: float = DEFAULT_THRESHOLD,
    min_voxels: int = DEFAULT_MIN_VOXELS,
) -> ROISelection:
    """Group supra-threshold areas into size-filtered ROIs.

    Args:
        area_values: (n_areas + 1,) per-area map averages, as returned by
            :func:`area_average` (NaN for absent areas).
        labels: (V,) area id per voxel.
        coords: (V, 3) voxel grid coordinates.
        grid_shape: shape of the atlas volume.
        threshold: keep areas whose average is >= this (inclusive).
        min_voxels: keep components with strictly more voxels than this.
    """
    area_values = np.asarray(area_values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    with np.errstate(invalid="ignore"):
        kept = np.flatnonzero(np.nan_to_num(area_values, nan=-np.inf) >= threshold)
    kept = kept[kept > 0]
    voxel_counts = np.bincount(labels, minlength=area_values.shape[0])

    adj = area_adjacency(labels, coords, grid_shape)
    kept_set = set(int(a) for a in kept)
    components: list[tuple[tuple[int, ...], int]] = []
    unvisited = set(kept_set)
    while unvisited:
        seed_area = min(unvisited)
        stack = [seed_area]
        unvisited.discard(seed_area)
        comp = {seed_area}
        while stack:
            a = stack.pop()
            for b in np.flatnonzero(adj[a]):
                b = int(b)
                if b in unvisited:
                    unvisited.discard(b)
                    comp.add(b)
                    stack.append(b)
        areas = tuple(sorted(comp))
        components.append((areas, int(voxel_counts[list(areas)].sum())))
    components.sort(key=lambda item: (-item[1], item[0]))

    rois = [
        ROI(id=k + 1, areas=areas, n_voxels=size)
        for k, (areas, size) in enumerate(
            (c for c in components if c[1] > min_voxels)
        )
    ]
    return ROISelection(
        rois=rois,
        kept_areas=kept,
        components=components,
        threshold=threshold,
        min_voxels=min_voxels,
    )


def roi_voxels(roi: ROI, labels: np.ndarray, restrict: np.ndarray | None = None) -> np.ndarray:
    """Indices of the voxels belonging to an ROI's areas.

    ``restrict`` is an optional per-voxel boolean mask (typically a
    participant's significance mask); only member voxels where it is
    True are returned. An empty intersection is allowed and logged.
    """
    members = np.flatnonzero(np.isin(labels, roi.areas))
    if restrict is None:
        return members
    restrict = np.asarray(restrict)
    if restrict.dtype != bool or restrict.shape != np.shape(labels):
        raise ValueError("restrict must be a boolean mask over the voxel axis")
    members = members[restrict[members]]
    if members.size == 0:
        logging.getLogger(__name__).warning(
            "ROI %d has no voxels left after mask restriction", roi.id
        )
    return members
