"""Feature and pixel distance matrices and their rank matrices."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ..errors import TooFewFeatures


class DistanceMetric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    MANHATTAN = "manhattan"
    PEARSON = "pearson"


def _as_matrix(x) -> np.ndarray:
    return np.asarray(getattr(x, "values", x), dtype=np.float64)


def pearson_dissimilarity(x) -> np.ndarray:
    """``1 - r`` between columns; a constant column has r = 0 with everything."""
    x = _as_matrix(x)
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    n = x.shape[1]
    r = np.zeros((n, n))
    ok = norms > 0
    if ok.any():
        c = centered[:, ok] / norms[ok]
        r[np.ix_(ok, ok)] = np.clip(c.T @ c, -1.0, 1.0)
    d = 1.0 - r
    np.fill_diagonal(d, 0.0)
    return d


def feature_distance_matrix(x, metric=DistanceMetric.EUCLIDEAN) -> np.ndarray:
    x = _as_matrix(x)
    metric = DistanceMetric(metric)
    n = x.shape[1]
    if n < 2:
        raise TooFewFeatures(f"need at least 2 features, got {n}")
    if metric is DistanceMetric.PEARSON:
        return pearson_dissimilarity(x)
    d = np.zeros((n, n))
    # fixed column-pair loop keeps the reduction order independent of n
    for i in range(n):
        diff = x[:, i + 1:] - x[:, i:i + 1]
        if metric is DistanceMetric.EUCLIDEAN:
            row = np.sqrt((diff ** 2).sum(axis=0))
        else:
            row = np.abs(diff).sum(axis=0)
        d[i, i + 1:] = row
        d[i + 1:, i] = row
    return d


@dataclass(frozen=True)
class RankMatrix:
    ranks: np.ndarray

    @property
    def n(self) -> int:
        return self.ranks.shape[0]


def rank_matrix(d) -> RankMatrix:
    """Rank the upper-triangle distances 1..n(n-1)/2.

    Equal distances are ordered by the (i, j) pair, i < j, lexicographically.
    """
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    # np.lexsort sorts by the last key first; triu_indices is already lexicographic
    order = np.lexsort((np.arange(len(iu)), d[iu, ju]))
    ranks = np.zeros((n, n), dtype=np.int64)
    r = np.empty(len(iu), dtype=np.int64)
    r[order] = np.arange(1, len(iu) + 1)
    ranks[iu, ju] = r
    ranks[ju, iu] = r
    return RankMatrix(ranks)


@dataclass(frozen=True)
class PixelGrid:
    ni: int
    nj: int
    metric: DistanceMetric
    q: RankMatrix

    @property
    def size(self) -> int:
        return self.ni * self.nj


def pixel_coordinates(ni: int, nj: int) -> np.ndarray:
    """(row, col) of every slot in row-major order."""
    rows, cols = np.divmod(np.arange(ni * nj), nj)
    return np.stack([rows, cols], axis=1).astype(np.float64)


def pixel_rank_matrix(ni: int, nj: int, metric=DistanceMetric.EUCLIDEAN) -> PixelGrid:
    metric = DistanceMetric(metric)
    if metric is DistanceMetric.PEARSON:
        raise ValueError("pixel distances must be euclidean or manhattan")
    if ni < 1 or nj < 1 or ni * nj < 2:
        raise ValueError("grid needs ni, nj >= 1 and at least 2 pixels")
    coords = pixel_coordinates(ni, nj)
    diff = coords[:, None, :] - coords[None, :, :]
    if metric is DistanceMetric.EUCLIDEAN:
        d = np.sqrt((diff ** 2).sum(axis=2))
    else:
        d = np.abs(diff).sum(axis=2)
    return PixelGrid(ni, nj, metric, rank_matrix(d))
