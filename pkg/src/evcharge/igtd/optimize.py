"""Swap-based search for the feature-to-pixel assignment."""
from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DimensionMismatch
from .distances import DistanceMetric, PixelGrid, RankMatrix


class ErrorKind(str, enum.Enum):
    ABS = "abs"
    SQ = "sq"


def _weight(diff: np.ndarray, kind: ErrorKind) -> np.ndarray:
    diff = np.abs(diff)
    return diff * diff if kind is ErrorKind.SQ else diff


@dataclass(frozen=True)
class IgtdConfig:
    feature_metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    pixel_metric: DistanceMetric = DistanceMetric.EUCLIDEAN
    error_kind: ErrorKind = ErrorKind.ABS
    ni: int = 4
    nj: int = 4
    max_steps: int = 10_000
    patience: int = 32
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "feature_metric", DistanceMetric(self.feature_metric))
        object.__setattr__(self, "pixel_metric", DistanceMetric(self.pixel_metric))
        object.__setattr__(self, "error_kind", ErrorKind(self.error_kind))
        if self.max_steps < 1 or self.patience < 1:
            raise ValueError("max_steps and patience must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("feature_metric", "pixel_metric", "error_kind"):
            d[k] = d[k].value
        return d


@dataclass
class Assignment:
    """``perm[f]`` is the row-major pixel slot of feature ``f``."""

    perm: np.ndarray
    error: float
    history: int = 0
    trace: list = field(default_factory=list)

    def to_json(self, config: IgtdConfig | None = None) -> str:
        doc = {"perm": [int(p) for p in self.perm], "error": float(self.error),
               "accepted_swaps": self.history}
        if config is not None:
            doc["config"] = config.to_dict()
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Assignment":
        doc = json.loads(text)
        return cls(np.asarray(doc["perm"], dtype=np.int64), float(doc["error"]),
                   int(doc.get("accepted_swaps", 0)))


def _check(r: RankMatrix, grid: PixelGrid, perm: np.ndarray):
    if r.n != grid.size or len(perm) != r.n:
        raise DimensionMismatch(
            f"{r.n} features, {grid.size} pixels, permutation of length {len(perm)}")


def igtd_error(r: RankMatrix, grid: PixelGrid, a, kind=ErrorKind.ABS) -> float:
    perm = np.asarray(getattr(a, "perm", a), dtype=np.int64)
    _check(r, grid, perm)
    kind = ErrorKind(kind)
    qp = grid.q.ranks[np.ix_(perm, perm)]
    iu = np.triu_indices(r.n, k=1)
    return float(_weight(r.ranks[iu] - qp[iu], kind).sum())


def _swap_deltas(rr: np.ndarray, qp: np.ndarray, i: int, kind: ErrorKind) -> np.ndarray:
    """Error change for swapping feature ``i`` with every feature ``j``.

    ``qp`` is the pixel rank matrix permuted into feature order.  Only the
    terms touching ``i`` or ``j`` change; entry ``i`` of the result is 0.
    """
    n = rr.shape[0]
    ri = rr[i][None, :]            # r[i, k]
    pi = qp[i][None, :]            # q[pi(i), pi(k)]
    # rows index the partner j, columns the third feature k
    delta = (_weight(ri - qp, kind) - _weight(ri - pi, kind)
             + _weight(rr - pi, kind) - _weight(rr - qp, kind))
    mask = np.ones((n, n), dtype=bool)
    mask[:, i] = False
    np.fill_diagonal(mask, False)
    out = np.where(mask, delta, 0).sum(axis=1)
    out[i] = 0
    return out.astype(np.float64)


def swap_delta(r: RankMatrix, grid: PixelGrid, a, i: int, j: int, kind=ErrorKind.ABS) -> float:
    if i == j:
        raise ValueError("swap_delta needs two distinct features")
    perm = np.asarray(getattr(a, "perm", a), dtype=np.int64)
    _check(r, grid, perm)
    qp = grid.q.ranks[np.ix_(perm, perm)]
    return float(_swap_deltas(r.ranks, qp, i, ErrorKind(kind))[j])


def _apply_swap(perm: np.ndarray, qp: np.ndarray, i: int, j: int):
    perm[i], perm[j] = perm[j], perm[i]
    qp[[i, j], :] = qp[[j, i], :]
    qp[:, [i, j]] = qp[:, [j, i]]


def optimize_assignment(r: RankMatrix, grid: PixelGrid, cfg: IgtdConfig) -> Assignment:
    """Greedy swap search from the identity assignment.

    Features are examined least-recently-examined first (ties to the lower
    index).  For the examined feature the best strictly improving swap is
    applied; both swapped features count as just examined.  The phase stops
    after ``cfg.patience`` non-improving examinations in a row or
    ``cfg.max_steps`` examinations.  A closing sweep over all pairs then
    applies improving swaps until none is left, so the result is 2-opt
    locally optimal.
    """
    n = r.n
    kind = cfg.error_kind
    perm = np.arange(n, dtype=np.int64)
    _check(r, grid, perm)
    rr = r.ranks
    qp = grid.q.ranks[np.ix_(perm, perm)].copy()
    error = igtd_error(r, grid, perm, kind)
    trace = [error]

    last_seen = np.full(n, -1, dtype=np.int64)
    stale = 0
    for step in range(cfg.max_steps):
        # argmin returns the first (lowest index) minimum
        i = int(np.argmin(last_seen))
        deltas = _swap_deltas(rr, qp, i, kind)
        deltas[i] = np.inf
        j = int(np.argmin(deltas))
        if deltas[j] < 0:
            _apply_swap(perm, qp, i, j)
            error += float(deltas[j])
            trace.append(error)
            last_seen[i] = last_seen[j] = step
            stale = 0
        else:
            last_seen[i] = step
            stale += 1
            if stale >= cfg.patience:
                break

    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            deltas = _swap_deltas(rr, qp, i, kind)
            for j in range(i + 1, n):
                if deltas[j] < 0:
                    _apply_swap(perm, qp, i, j)
                    error += float(deltas[j])
                    trace.append(error)
                    improved = True
                    deltas = _swap_deltas(rr, qp, i, kind)
    return Assignment(perm, error, len(trace) - 1, trace)


def exhaustive_minimum(r: RankMatrix, grid: PixelGrid, kind=ErrorKind.ABS) -> float:
    """Global minimum over every permutation; only practical for n <= 8."""
    from itertools import permutations

    kind = ErrorKind(kind)
    n = r.n
    iu, ju = np.triu_indices(n, k=1)
    target = r.ranks[iu, ju]
    q = grid.q.ranks
    best = np.inf
    for p in permutations(range(n)):
        p = np.asarray(p)
        best = min(best, float(_weight(target - q[p[iu], p[ju]], kind).sum()))
    return best
