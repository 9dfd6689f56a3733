import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from occupancy.transforms import (
    DegenerateDataError,
    FeatureTransform,
    RankBoundError,
    SingleClassError,
    TransformError,
    fisher_ratio,
    fit_lda,
    fit_pca,
    scatter_matrices,
)


def test_isotropic_rotation_preserves_distances(g):
    x = g.normal(size=(500, 2))
    y = fit_pca(x, 2).project(x)
    dx = np.linalg.norm(x[:, None] - x[None], axis=2)
    dy = np.linalg.norm(y[:, None] - y[None], axis=2)
    np.testing.assert_allclose(dy, dx, atol=1e-8)


def test_full_rank_preserves_total_variance(g):
    x = g.normal(size=(300, 5)) @ g.normal(size=(5, 5))
    y = fit_pca(x, 5).project(x)
    assert np.var(y, axis=0, ddof=1).sum() == pytest.approx(np.var(x, axis=0, ddof=1).sum(), rel=1e-10)


def test_anisotropic_cloud_aligns_with_largest_axis(g):
    q, _ = np.linalg.qr(g.normal(size=(3, 3)))
    x = (g.normal(size=(10_000, 3)) * np.sqrt([10, 1, 0.1])) @ q.T
    pca = fit_pca(x, 3)
    assert abs(pca.basis[:, 0] @ q[:, 0]) >= 0.99
    assert np.all(np.diff(pca.eigenvalues) < 0)


@given(seed=st.integers(0, 10_000), d=st.integers(1, 8))
def test_basis_orthonormal_and_signs_fixed(seed, d):
    g = np.random.default_rng(seed)
    x = g.normal(size=(60, 8)) @ g.normal(size=(8, 8))
    pca = fit_pca(x, d)
    assert np.max(np.abs(pca.basis.T @ pca.basis - np.eye(d))) <= 1e-8
    idx = np.argmax(np.abs(pca.basis), axis=0)
    assert np.all(pca.basis[idx, np.arange(d)] > 0)


def test_pca_matches_svd(g):
    x = g.normal(size=(200, 6)) @ g.normal(size=(6, 6))
    pca = fit_pca(x, 3)
    _, s, vt = np.linalg.svd(x - x.mean(0), full_matrices=False)
    np.testing.assert_allclose(pca.eigenvalues, s[:3] ** 2 / 199, rtol=1e-10)
    for k in range(3):
        assert abs(pca.basis[:, k] @ vt[k]) == pytest.approx(1.0, abs=1e-10)


def test_pca_errors(g):
    with pytest.raises(DegenerateDataError):
        fit_pca(g.normal(size=(3, 5)), 3)
    with pytest.raises(DegenerateDataError):
        fit_pca(np.outer(g.normal(size=50), [1.0, 2.0, 3.0]), 2)
    with pytest.raises(TransformError):
        fit_pca(g.normal(size=(50, 3)), 4)


def test_scatter_oracle(g):
    x = g.normal(size=(30, 2))
    y = np.repeat([0, 1, 2], 10)
    sw, sb = scatter_matrices(x, y)
    mu = x.mean(0)
    sw_ref = sum(np.outer(v - x[y == c].mean(0), v - x[y == c].mean(0)) for c in range(3) for v in x[y == c])
    sb_ref = sum(10 * np.outer(x[y == c].mean(0) - mu, x[y == c].mean(0) - mu) for c in range(3))
    np.testing.assert_allclose(sw, sw_ref, atol=1e-12)
    np.testing.assert_allclose(sb, sb_ref, atol=1e-12)
    np.testing.assert_allclose(sw + sb, (x - mu).T @ (x - mu), atol=1e-12)


def test_lda_separates_classes(g):
    a = g.normal(size=(500, 2)) + [5, 0]
    b = g.normal(size=(500, 2)) - [5, 0]
    x, y = np.vstack([a, b]), np.repeat([0, 1], 500)
    lda = fit_lda(x, y, 1)
    p = lda.project(x)[:, 0]
    pooled = np.sqrt((p[:500].var(ddof=1) + p[500:].var(ddof=1)) / 2)
    assert abs(p[:500].mean() - p[500:].mean()) >= 5 * pooled


def test_lda_generalised_eigen_identity(g):
    x = g.normal(size=(300, 4)) + np.repeat(g.normal(size=(3, 4)) * 2, 100, axis=0)
    y = np.repeat([0, 1, 2], 100)
    lda = fit_lda(x, y, 2)
    sw, sb = scatter_matrices(x, y)
    swr = sw + 1e-6 * np.trace(sw) / 4 * np.eye(4)
    np.testing.assert_allclose(sb @ lda.basis, swr @ lda.basis * lda.eigenvalues, atol=1e-8 * np.abs(sb).max())
    assert np.all(np.diff(lda.eigenvalues) <= 0)


def test_identical_classes_give_small_fisher_ratio(g):
    x = g.normal(size=(2000, 3))
    y = np.tile([0, 1], 1000)
    lda = fit_lda(x, y, 1)
    assert fisher_ratio(lda.project(x), y) < 1e-2


def test_lda_errors(g):
    x = g.normal(size=(30, 4))
    with pytest.raises(SingleClassError):
        fit_lda(x, np.zeros(30), 1)
    with pytest.raises(RankBoundError):
        fit_lda(x, np.repeat([0, 1, 2], 10), 3)


def test_transform_round_trip(g):
    x = g.normal(size=(90, 6))
    y = np.repeat([0, 1, 2], 30)
    pca = fit_pca(x, 4)
    t = FeatureTransform(pca, fit_lda(pca.project(x), y, 2))
    back = FeatureTransform.from_dict(t.to_dict())
    np.testing.assert_array_equal(back(x), t(x))
    assert t.output_dim == 2
