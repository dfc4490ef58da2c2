import numpy as np
import pytest
from hypothesis import given, strategies as st

from leaderlab import kernels as K
from leaderlab import sampling as S


def z_cov(x, y, target):
    """z-score of the sample mean of x*y against ``target`` (zero-mean variables)."""
    prod = x * y
    se = prod.std(ddof=1) / np.sqrt(prod.size)
    return (prod.mean() - target) / se


def test_circulant_white_noise_is_flat():
    eig = S.circulant_spectrum([1.0, 0.0, 0.0, 0.0, 0.0])
    assert np.allclose(eig, 1.0)


def test_circulant_exponential_matches_direct_dft():
    r = np.exp(-0.1 * np.arange(257) / 2)
    eig = S.circulant_spectrum(r)
    row = np.concatenate([r, r[-2:0:-1]])
    M = row.size
    j = np.arange(M)
    direct = np.array([np.sum(row * np.cos(2 * np.pi * j * k / M)) for k in range(M)])
    assert np.all(eig > 0)
    assert np.allclose(eig, direct, rtol=1e-10, atol=1e-12)


@given(st.floats(0.001, 5.0), st.integers(2, 200))
def test_circulant_trace_identity(rate, m):
    # exponential correlations always embed in the minimal circulant
    r = np.exp(-rate * np.arange(m + 1))
    eig = S.circulant_spectrum(r)
    assert eig.sum() == pytest.approx(eig.size * r[0], rel=1e-10)
    assert np.all(eig >= 0)


def test_circulant_rejects_genuine_negatives():
    with pytest.raises(S.NegativeEigenvalue):
        S.circulant_spectrum([1.0, 0.9, -0.9])


def test_stationary_lag_one_correlation():
    k = K.lamperti_fbm(0.5)
    grid = S.GridSpec(0.0, 12.7, 128)
    x = S.sample_stationary(k, grid, seed=11, batch=10_000).paths
    target = float(K.correlation(k, grid.spacing))
    assert abs(z_cov(x[:, 40], x[:, 41], target)) < 5
    assert abs(z_cov(x[:, 0], x[:, 0], 1.0)) < 5


def test_stationary_empty_and_deterministic():
    k = K.lamperti_fbm(0.3)
    grid = S.GridSpec(0.0, 4.0, 65)
    assert S.sample_stationary(k, grid, 1, 0).paths.shape == (0, 65)
    a = S.sample_stationary(k, grid, 5, 40).paths
    b = S.sample_stationary(k, grid, 5, 40).paths
    assert np.array_equal(a, b)
    assert not np.array_equal(a, S.sample_stationary(k, grid, 6, 40).paths)


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_fbm_variance_and_increments(H):
    grid = S.GridSpec(0.0, 2.0, 129)
    x = S.sample_fbm(H, grid, seed=3, batch=10_000).paths
    assert np.all(x[:, 0] == 0.0)
    t = grid.times
    for k in (16, 64, 128):
        assert abs(z_cov(x[:, k], x[:, k], t[k] ** (2 * H))) < 5
    d = x[:, 128] - x[:, 32]
    assert abs(z_cov(d, d, (t[128] - t[32]) ** (2 * H))) < 5


def test_brownian_independent_increments():
    grid = S.GridSpec(0.0, 2.0, 65)
    x = S.sample_fbm(0.5, grid, seed=4, batch=10_000).paths
    assert abs(z_cov(x[:, 32], x[:, 64], 1.0)) < 5


def test_fbm_needs_grid_from_zero():
    with pytest.raises(ValueError):
        S.sample_fbm(0.5, S.GridSpec(1.0, 2.0, 10), 0, 4)


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_self_similarity(H):
    lam = 2.0
    grid = S.GridSpec(0.0, 4.0, 65)
    x = S.sample_fbm(H, grid, seed=8, batch=10_000).paths
    # lam^{-H} B(lam t) at t = 1, 2 uses columns 32 and 64; B(t) at t = 1, 2 uses 16 and 32
    a = x[:, [32, 64]] * lam**-H
    y = S.sample_fbm(H, grid, seed=9, batch=10_000).paths[:, [16, 32]]
    ca, cy = (a[:, 0] * a[:, 1]).mean(), (y[:, 0] * y[:, 1]).mean()
    se = np.hypot((a[:, 0] * a[:, 1]).std() / 100, (y[:, 0] * y[:, 1]).std() / 100)
    assert abs(ca - cy) < 5 * se


@pytest.mark.parametrize("H", [0.3, 0.7])
def test_lamperti_transform_of_fbm(H):
    grid = S.GridSpec(0.0, np.exp(2.0), 513)
    x = S.sample_fbm(H, grid, seed=12, batch=10_000).paths
    t = grid.times
    i, j = np.searchsorted(t, 1.0), np.searchsorted(t, 5.0)
    xi, xj = x[:, i] * t[i] ** -H, x[:, j] * t[j] ** -H
    target = float(K.lamperti_corr(np.log(t[j] / t[i]), H))
    assert abs(z_cov(xi, xj, target)) < 5


def test_log_grid_self_similar_marginals():
    grid = S.GridSpec(0.5, 8.0, 129, log_time=True)
    b = S.sample_self_similar(0.5, 0.5, grid, seed=2, batch=10_000)
    t = grid.times
    for k in (0, 64, 128):
        assert abs(z_cov(b.paths[:, k], b.paths[:, k], t[k])) < 5
    assert abs(z_cov(b.paths[:, 0], b.paths[:, 128], t[0])) < 5


def test_chunking_concatenates_to_stream_chunks():
    k = K.lamperti_fbm(0.5)
    grid = S.GridSpec(0.0, 2.0, 33)
    sampler = S.make_sampler(k, grid)
    sizes = S.chunk_sizes(50, 16)
    assert sizes == [16, 16, 16, 2]
    parts = [sampler.draw(S.stream_rng(7, c, 0), r) for c, r in enumerate(sizes)]
    again = [sampler.draw(S.stream_rng(7, c, 0), r) for c, r in reversed(list(enumerate(sizes)))]
    assert np.array_equal(np.vstack(parts), np.vstack(again[::-1]))


@given(st.integers(0, 500), st.integers(1, 64))
def test_chunk_sizes_partition(total, rows):
    s = S.chunk_sizes(total, rows)
    assert sum(s) == total and all(0 < r <= rows for r in s)


def test_stream_rng_rejects_bad_seed():
    with pytest.raises(ValueError):
        S.stream_rng(-1)


def test_cholesky_identity_moments():
    x = S.cholesky_sample(np.eye(3), seed=1, batch=20_000).paths
    assert np.all(np.abs(x.mean(axis=0)) < 5 / np.sqrt(20_000))
    assert np.all(np.abs(x.var(axis=0) - 1) < 5 * np.sqrt(2 / 20_000))
    kurt = (x**4).mean(axis=0)
    assert np.all(np.abs(kurt - 3) < 5 * np.sqrt(96 / 20_000))


def test_cholesky_correlated_pair():
    x = S.cholesky_sample([[1.0, 0.9], [0.9, 1.0]], seed=2, batch=10_000).paths
    assert abs(z_cov(x[:, 0], x[:, 1], 0.9)) < 5


def test_cholesky_scalar_and_determinism():
    a = S.cholesky_sample([[4.0]], seed=3, batch=5).paths
    z = S.stream_rng(3).standard_normal((5, 1))
    assert np.allclose(a, 2 * z)
    assert np.array_equal(a, S.cholesky_sample([[4.0]], seed=3, batch=5).paths)


def test_cholesky_rejects_indefinite():
    with pytest.raises(S.NotPositiveDefinite):
        S.cholesky_sample([[1.0, 2.0], [2.0, 1.0]], seed=0, batch=2)


def test_path_dump_round_trip(tmp_path):
    grid = S.GridSpec(0.0, 1.0, 9)
    b = S.sample_fbm(0.7, grid, seed=5, batch=3)
    S.save_paths(b, tmp_path / "p.txt")
    c = S.load_paths(tmp_path / "p.txt")
    assert np.array_equal(b.paths, c.paths)
    assert c.grid == grid and c.kernel == b.kernel and c.seed == 5


def test_grid_index_of():
    g = S.GridSpec(0.0, 4.0, 257)
    assert g.index_of(1.0) == 64
    with pytest.raises(ValueError):
        g.index_of(1.001)


def test_pathbatch_rejects_nonfinite():
    with pytest.raises(ValueError):
        S.PathBatch(None, np.array([[0.0, np.nan]]), None, 0)
