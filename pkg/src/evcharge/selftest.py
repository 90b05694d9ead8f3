"""Built-in consistency checks run by ``evcharge selftest``."""
from __future__ import annotations

import numpy as np

from . import igtd
from .igtd.optimize import ErrorKind
from .nn.gradcheck import TOLERANCE, run_all
from .rng import Rng


def _instance(seed: int, rows: int, n: int):
    x = Rng(seed).uniform_array((rows, n))
    return igtd.rank_matrix(igtd.feature_distance_matrix(x))


def igtd_checks(instances: int = 20, seed: int = 0) -> dict[str, tuple[bool, str]]:
    results = {}

    grid = igtd.pixel_rank_matrix(2, 3)
    cfg = igtd.IgtdConfig(ni=2, nj=3)
    above, equal = 0, 0
    for s in range(instances):
        r = _instance(seed + s, 30, 6)
        got = igtd.optimize_assignment(r, grid, cfg).error
        best = igtd.exhaustive_minimum(r, grid)
        above += got >= best
        equal += got == best
    results["igtd_oracle_bound"] = (above == instances,
                                    f"{above}/{instances} >= exhaustive minimum, {equal} equal")

    grid = igtd.pixel_rank_matrix(4, 4)
    cfg = igtd.IgtdConfig()
    local = 0
    for s in range(instances):
        r = _instance(seed + 1000 + s, 30, 16)
        a = igtd.optimize_assignment(r, grid, cfg)
        ok = all(igtd.swap_delta(r, grid, a, i, j) >= 0 for i in range(16) for j in range(i + 1, 16))
        ok &= all(b < a_ for a_, b in zip(a.trace, a.trace[1:]))
        ok &= a.error == igtd.igtd_error(r, grid, a)
        local += ok
    results["igtd_two_opt"] = (local == instances, f"{local}/{instances} locally optimal")

    rng = Rng(seed + 7)
    worst = 0.0
    for s in range(200):
        r = _instance(seed + 2000 + s, 10, 9)
        g = igtd.pixel_rank_matrix(3, 3)
        perm = rng.permutation(9)
        i, j = (int(v) for v in rng.sample(9, 2))
        kind = (ErrorKind.ABS, ErrorKind.SQ)[s % 2]
        after = perm.copy()
        after[i], after[j] = after[j], after[i]
        full = igtd.igtd_error(r, g, after, kind) - igtd.igtd_error(r, g, perm, kind)
        worst = max(worst, abs(full - igtd.swap_delta(r, g, perm, i, j, kind)))
    results["igtd_swap_delta"] = (worst <= 1e-9, f"max |delta - recompute| = {worst:.3g}")
    return results


def gradient_checks(trials: int = 10, seed: int = 0) -> dict[str, tuple[bool, str]]:
    return {f"gradcheck_{name}": (err < TOLERANCE, f"max relative error {err:.3g}")
            for name, err in run_all(trials, seed).items()}


def run_selftest(seed: int = 0) -> list[tuple[str, bool, str]]:
    results = {**gradient_checks(seed=seed), **igtd_checks(seed=seed)}
    return [(name, ok, detail) for name, (ok, detail) in results.items()]
