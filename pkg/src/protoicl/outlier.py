"""Local Outlier Factor under cosine distance, and LOF-filtered class means."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)

DIST_FLOOR = 1e-12


@dataclass(frozen=True)
class LOFConfig:
    k_neighbors: int = 20
    threshold: float = 1.5

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if not self.threshold > 1:
            raise ConfigError("LOF threshold must exceed 1")


def cosine_distances(points) -> np.ndarray:
    """Pairwise 1 - cos, floored at DIST_FLOOR off the diagonal (diagonal is inf)."""
    p = np.asarray(points, dtype=np.float64)
    norms = np.linalg.norm(p, axis=1, keepdims=True)
    unit = p / np.where(norms > 0, norms, 1.0)
    d = np.maximum(1.0 - unit @ unit.T, DIST_FLOOR)
    np.fill_diagonal(d, np.inf)
    return d


def lof_scores(points, cfg: LOFConfig) -> np.ndarray:
    """LOF score per point; about 1 for inliers, well above 1 for outliers."""
    p = np.asarray(points, dtype=np.float64)
    n, k = len(p), cfg.k_neighbors
    if n <= k:
        raise ConfigError(f"LOF needs more than k={k} points, got {n}")
    d = cosine_distances(p)
    # stable sort so equal distances resolve by index
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    k_dist = np.take_along_axis(d, nn[:, -1:], axis=1)[:, 0]
    reach = np.maximum(k_dist[nn], np.take_along_axis(d, nn, axis=1))
    lrd = 1.0 / reach.mean(axis=1)
    return lrd[nn].mean(axis=1) / lrd


def exclude_and_mean(points_by_class: dict, cfg: LOFConfig) -> dict:
    """Per class, the mean of the points whose LOF does not exceed the threshold.

    Classes with too few points are averaged unfiltered; if filtering would
    drop every point the unfiltered mean is used.
    """
    out = {}
    for c, pts in points_by_class.items():
        pts = np.asarray(pts, dtype=np.float64)
        if len(pts) <= cfg.k_neighbors:
            log.info("class %s has %d points (k=%d); skipping LOF filtering", c, len(pts), cfg.k_neighbors)
            out[c] = pts.mean(axis=0)
            continue
        keep = lof_scores(pts, cfg) <= cfg.threshold
        if not keep.any():
            log.warning("LOF flagged every point of class %s; using the unfiltered mean", c)
            keep[:] = True
        out[c] = pts[keep].mean(axis=0)
    return out
