import math
from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from evcharge.errors import DimensionMismatch, FormatError, NotNormalized, TooFewFeatures
from evcharge.igtd import (
    Assignment,
    DistanceMetric,
    ErrorKind,
    IgtdConfig,
    RankMatrix,
    convert,
    exhaustive_minimum,
    feature_distance_matrix,
    igtd_error,
    optimize_assignment,
    pad_features,
    pixel_rank_matrix,
    rank_matrix,
    read_image_dir,
    render_pixels,
    swap_delta,
    write_image_dir,
)
from evcharge.igtd.render import ImageSample, parse_pgm, pgm_bytes
from evcharge.preprocess import EncodedMatrix


def _random_ranks(n, seed):
    return rank_matrix(feature_distance_matrix(np.random.default_rng(seed).random((20, n))))


def _naive_error(r, q, perm, sq=False):
    total = 0.0
    n = len(perm)
    for i in range(n):
        for j in range(i + 1, n):
            diff = abs(int(r[i][j]) - int(q[perm[i]][perm[j]]))
            total += diff * diff if sq else diff
    return total


# distances

def test_euclidean_and_manhattan_3_4_5():
    x = np.array([[0.0, 3.0], [0.0, 4.0]])  # columns u=[0,0], v=[3,4]
    assert feature_distance_matrix(x, "euclidean")[0, 1] == 5.0
    assert feature_distance_matrix(x, "manhattan")[0, 1] == 7.0


def test_pearson_linear_relation_is_zero():
    u = np.array([0.1, 0.5, 0.2, 0.9])
    d = feature_distance_matrix(np.stack([u, 2 * u + 1], axis=1), "pearson")
    assert d[0, 1] == pytest.approx(0.0, abs=1e-12)


def test_pearson_constant_column_is_uncorrelated():
    x = np.stack([np.array([0.1, 0.5, 0.2]), np.zeros(3)], axis=1)
    assert feature_distance_matrix(x, "pearson")[0, 1] == 1.0


def test_single_feature_rejected():
    with pytest.raises(TooFewFeatures):
        feature_distance_matrix(np.zeros((5, 1)))


@settings(max_examples=50)
@given(st.integers(2, 8), st.integers(2, 10), st.integers(0, 10_000),
       st.sampled_from(list(DistanceMetric)))
def test_distance_matrix_invariants(n, m, seed, metric):
    x = np.random.default_rng(seed).random((m, n))
    d = feature_distance_matrix(x, metric)
    assert np.allclose(d, d.T) and np.all(np.diag(d) == 0) and np.all(d >= 0)


# ranks

def test_ranks_three_features():
    d = np.array([[0, 5, 10], [5, 0, 5], [10, 5, 0]], dtype=float)
    r = rank_matrix(d).ranks
    assert (r[0, 1], r[1, 2], r[0, 2]) == (1, 2, 3)


def test_equal_distances_rank_lexicographically():
    n = 5
    r = rank_matrix(np.ones((n, n)) - np.eye(n)).ranks
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    assert [r[i, j] for i, j in pairs] == list(range(1, len(pairs) + 1))


@given(st.integers(2, 12), st.integers(0, 10_000))
def test_ranks_are_a_permutation(n, seed):
    d = feature_distance_matrix(np.random.default_rng(seed).integers(0, 3, (6, n)).astype(float))
    r = rank_matrix(d).ranks
    iu = np.triu_indices(n, 1)
    assert sorted(r[iu].tolist()) == list(range(1, n * (n - 1) // 2 + 1))
    assert np.array_equal(r, r.T)


def test_pixel_ranks_2x2():
    g = pixel_rank_matrix(2, 2, "euclidean")
    q = g.q.ranks
    # slots 0 1 / 2 3: neighbours (0,1) (0,2) (1,3) (2,3), diagonals (0,3) (1,2)
    assert [q[0, 1], q[0, 2], q[1, 3], q[2, 3]] == [1, 2, 3, 4]
    assert [q[0, 3], q[1, 2]] == [5, 6]


def test_pixel_ranks_1x2():
    assert pixel_rank_matrix(1, 2).q.ranks[0, 1] == 1


def test_pixel_grid_is_pure():
    a, b = pixel_rank_matrix(4, 4, "manhattan"), pixel_rank_matrix(4, 4, "manhattan")
    assert np.array_equal(a.q.ranks, b.q.ranks)


def test_pixel_grid_rejects_pearson():
    with pytest.raises(ValueError):
        pixel_rank_matrix(2, 2, "pearson")


# error and swaps

def test_zero_error_when_ranks_match():
    g = pixel_rank_matrix(2, 3)
    for kind in ErrorKind:
        assert igtd_error(g.q, g, np.arange(6), kind) == 0.0


def test_single_pair_squared_error():
    g = pixel_rank_matrix(1, 2)  # q(0,1)=1
    r = RankMatrix(np.array([[0, 3], [3, 0]]))
    assert igtd_error(r, g, [0, 1], "sq") == 4.0


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        igtd_error(_random_ranks(5, 0), pixel_rank_matrix(2, 3), np.arange(5))


@pytest.mark.parametrize("seed", range(50))
def test_error_matches_double_loop(seed):
    rng = np.random.default_rng(seed)
    ni, nj = int(rng.integers(1, 4)), int(rng.integers(2, 4))
    g = pixel_rank_matrix(ni, nj)
    r = _random_ranks(ni * nj, seed)
    perm = rng.permutation(ni * nj)
    assert igtd_error(r, g, perm, "abs") == _naive_error(r.ranks, g.q.ranks, perm)
    assert igtd_error(r, g, perm, "sq") == _naive_error(r.ranks, g.q.ranks, perm, sq=True)


@settings(max_examples=100)
@given(st.integers(0, 10_000), st.sampled_from(list(ErrorKind)))
def test_swap_delta_matches_recompute(seed, kind):
    rng = np.random.default_rng(seed)
    g = pixel_rank_matrix(3, 3)
    r = _random_ranks(9, seed)
    perm = rng.permutation(9)
    i, j = rng.choice(9, 2, replace=False)
    before = _naive_error(r.ranks, g.q.ranks, perm, kind is ErrorKind.SQ)
    swapped = perm.copy()
    swapped[[i, j]] = swapped[[j, i]]
    after = _naive_error(r.ranks, g.q.ranks, swapped, kind is ErrorKind.SQ)
    d1 = swap_delta(r, g, perm, int(i), int(j), kind)
    assert d1 == after - before
    # swapping back undoes it
    assert d1 + swap_delta(r, g, swapped, int(i), int(j), kind) == 0


def test_swap_delta_rejects_same_feature():
    g = pixel_rank_matrix(2, 2)
    with pytest.raises(ValueError):
        swap_delta(g.q, g, np.arange(4), 1, 1)


# optimizer

def test_identity_optimal_makes_no_swaps():
    g = pixel_rank_matrix(3, 3)
    a = optimize_assignment(g.q, g, IgtdConfig(ni=3, nj=3))
    assert a.perm.tolist() == list(range(9)) and a.error == 0 and a.history == 0


def _brute_minimum(r, q, n):
    return min(_naive_error(r, q, p) for p in permutations(range(n)))


@pytest.mark.parametrize("seed", range(5))
def test_result_not_below_brute_force_minimum(seed):
    g = pixel_rank_matrix(2, 3)
    r = _random_ranks(6, seed)
    a = optimize_assignment(r, g, IgtdConfig(ni=2, nj=3))
    best = _brute_minimum(r.ranks, g.q.ranks, 6)
    assert exhaustive_minimum(r, g) == best
    assert a.error >= best
    assert a.error == _naive_error(r.ranks, g.q.ranks, a.perm)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(ErrorKind)), st.integers(1, 40))
def test_optimizer_contract(seed, kind, patience):
    g = pixel_rank_matrix(3, 3)
    r = _random_ranks(9, seed)
    a = optimize_assignment(r, g, IgtdConfig(error_kind=kind, ni=3, nj=3, patience=patience))
    assert sorted(a.perm.tolist()) == list(range(9))
    assert all(b < t for t, b in zip(a.trace, a.trace[1:]))
    assert a.error == igtd_error(r, g, a.perm, kind)
    # no single transposition improves the result
    for i in range(9):
        for j in range(i + 1, 9):
            assert swap_delta(r, g, a.perm, i, j, kind) >= 0


def test_optimizer_deterministic():
    g = pixel_rank_matrix(4, 4)
    r = _random_ranks(16, 3)
    a = optimize_assignment(r, g, IgtdConfig())
    b = optimize_assignment(r, g, IgtdConfig())
    assert np.array_equal(a.perm, b.perm) and a.trace == b.trace


def test_assignment_json_round_trip():
    a = Assignment(np.array([2, 0, 1]), 4.0, 3)
    b = Assignment.from_json(a.to_json(IgtdConfig(ni=1, nj=3)))
    assert b.perm.tolist() == [2, 0, 1] and b.error == 4.0 and b.history == 3


# padding and rendering

def _enc(values):
    values = np.asarray(values, dtype=float)
    m, n = values.shape
    return EncodedMatrix(values, np.arange(m), tuple(f"f{k}" for k in range(n)), np.zeros(m, dtype=int))


def test_pad_10_to_16():
    x = pad_features(_enc(np.random.default_rng(0).random((4, 10))), 16)
    assert x.values.shape == (4, 16)
    assert x.column_names[10:] == tuple(f"_pad_{k}" for k in range(6))
    assert np.all(x.values[:, 10:] == 0)
    assert pad_features(x, 16) is x


def test_pad_distance_is_column_norm():
    x = pad_features(_enc([[0.3, 0.1], [0.4, 0.2], [0.0, 0.2]]), 3)
    d = feature_distance_matrix(x.values)
    assert d[0, 2] == pytest.approx(math.sqrt(0.09 + 0.16))
    assert d[1, 2] == pytest.approx(math.sqrt(0.01 + 0.04 + 0.04))


def test_render_endpoints():
    g = pixel_rank_matrix(2, 2)
    perm = np.array([3, 0, 1, 2])
    assert np.all(render_pixels(np.zeros((1, 4)), perm, g) == 0)
    img = render_pixels(np.array([[1.0, 0.0, 0.5, 0.0]]), perm, g)[0]
    assert img[1, 1] == 255 and img[0, 1] == 128  # 127.5 rounds up
    assert img.dtype == np.uint8


def test_padded_slots_are_zero():
    x = pad_features(_enc(np.random.default_rng(1).random((5, 10))), 16)
    images, a, grid, padded = convert(x, IgtdConfig())
    for im in images:
        assert np.all(im.pixels.reshape(-1)[a.perm[10:]] == 0)


def test_render_rejects_unnormalised():
    with pytest.raises(NotNormalized):
        render_pixels(np.array([[1.5, 0.0]]), np.arange(2), pixel_rank_matrix(1, 2))


def test_pgm_all_zero_4x4():
    data = pgm_bytes(np.zeros((4, 4), dtype=np.uint8))
    header = b"P5\n4 4\n255\n"
    assert data[:len(header)] == header
    assert len(data) == len(header) + 16 and data[len(header):] == bytes(16)


@settings(max_examples=100)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_pgm_round_trip(h, w, seed):
    px = np.random.default_rng(seed).integers(0, 256, (h, w), dtype=np.uint8)
    assert np.array_equal(parse_pgm(pgm_bytes(px)), px)


@pytest.mark.parametrize("data", [b"P5\n2 1\n65535\n\x00\x00\x00\x00", b"P2\n1 1\n255\n0", b"P5\n2 2\n255\n\x00"])
def test_pgm_format_errors(data):
    with pytest.raises(FormatError):
        parse_pgm(data)


def test_image_dir_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    images = [ImageSample(rng.integers(0, 256, (4, 4), dtype=np.uint8), k % 4, 10 + k) for k in range(6)]
    write_image_dir(images, tmp_path)
    back = read_image_dir(tmp_path)
    assert [(b.label, b.row_id) for b in back] == [(i.label, i.row_id) for i in images]
    assert all(np.array_equal(a.pixels, b.pixels) for a, b in zip(images, back))
    assert (tmp_path / "img_000010.pgm").exists()
