"""
Tests de las rutinas de covarianza intra-clase y del factor WCCN.
"""

import numpy as np
import pytest

from emovar.core.covariance import (
    batch_within_class_cov,
    classic_wccn,
    cumulative_update,
    factor_residual,
    project,
    smooth,
    wccn_factor,
)
from emovar.core.exceptions import (
    BetaOutOfRangeError,
    DimensionMismatchError,
    EmptyBatchError,
    NoEstimableClassError,
    NotPositiveDefiniteError,
)


def random_spd(rng, dim: int) -> np.ndarray:
    b = rng.normal(size=(dim, dim))
    return b @ b.T + dim * np.eye(dim)


# ── batch_within_class_cov ───────────────────────────

def test_per_class_cov_by_hand():
    stats = batch_within_class_cov([[0, 0], [2, 0]], [0, 0])
    np.testing.assert_allclose(stats.per_class[0], [[1, 0], [0, 0]])
    np.testing.assert_allclose(stats.averaged, [[1, 0], [0, 0]])


def test_identical_vectors_give_zero_matrix():
    stats = batch_within_class_cov([[1.5, -2.0], [1.5, -2.0]], [3, 3])
    np.testing.assert_array_equal(stats.averaged, np.zeros((2, 2)))


def test_single_sample_class_is_excluded(rng):
    x = rng.normal(size=(4, 3))
    stats = batch_within_class_cov(x, [1, 1, 1, 2])
    assert stats.classes_used == frozenset({1})
    expected = np.cov(x[:3].T, bias=True)
    np.testing.assert_allclose(stats.averaged, expected, atol=1e-12)


def test_averaged_is_unweighted_over_classes(rng):
    x = rng.normal(size=(7, 2))
    labels = [0, 0, 0, 0, 0, 1, 1]
    stats = batch_within_class_cov(x, labels)
    expected = 0.5 * (np.cov(x[:5].T, bias=True) + np.cov(x[5:].T, bias=True))
    np.testing.assert_allclose(stats.averaged, expected, atol=1e-12)


def test_returned_matrices_are_symmetric(rng):
    x = rng.normal(size=(40, 6)) * 1e3
    stats = batch_within_class_cov(x, rng.integers(0, 4, size=40))
    for matrix in [stats.averaged, *stats.per_class.values()]:
        assert np.array_equal(matrix, matrix.T)


def test_empty_batch():
    with pytest.raises(EmptyBatchError):
        batch_within_class_cov(np.zeros((0, 3)), [])


def test_no_estimable_class():
    with pytest.raises(NoEstimableClassError):
        batch_within_class_cov([[0.0], [1.0], [2.0]], [0, 1, 2])


# ── cumulative_update ────────────────────────────────

def test_first_update_returns_batch(rng):
    m = random_spd(rng, 3)
    mean, n = cumulative_update(np.eye(3) * 9, 0, m)
    np.testing.assert_allclose(mean, m)
    assert n == 1


def test_second_update_is_two_term_mean(rng):
    m1, m2 = random_spd(rng, 3), random_spd(rng, 3)
    mean, n = cumulative_update(m1, 1, m2)
    np.testing.assert_allclose(mean, (m1 + m2) / 2, atol=1e-12)
    assert n == 2


def test_k_updates_equal_arithmetic_mean(rng):
    matrices = [random_spd(rng, 4) for _ in range(25)]
    mean, n = np.eye(4), 0
    for m in matrices:
        mean, n = cumulative_update(mean, n, m)
    assert n == 25
    np.testing.assert_allclose(mean, np.mean(matrices, axis=0), atol=1e-10)


def test_cumulative_update_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        cumulative_update(np.eye(2), 1, np.eye(3))


# ── smooth ───────────────────────────────────────────

def test_smooth_extremes(rng):
    m = random_spd(rng, 3)
    np.testing.assert_array_equal(smooth(m, 1.0), np.eye(3))
    np.testing.assert_array_equal(smooth(m, 0.0), m)


def test_smooth_dech_beta(rng):
    m = random_spd(rng, 3)
    np.testing.assert_allclose(smooth(m, 0.2), 0.8 * m + 0.2 * np.eye(3))


@pytest.mark.parametrize("beta", [-0.1, 1.5])
def test_smooth_beta_out_of_range(beta):
    with pytest.raises(BetaOutOfRangeError):
        smooth(np.eye(2), beta)


def test_smoothing_bounds_eigenvalues(rng):
    x = rng.normal(size=(2, 5))
    psd = x.T @ x  # rango 2
    for beta in (0.1, 0.4, 0.9):
        eigenvalues = np.linalg.eigvalsh(smooth(psd, beta))
        assert eigenvalues.min() >= beta - 1e-12


# ── wccn_factor / project ────────────────────────────

def test_factor_of_identity():
    np.testing.assert_allclose(wccn_factor(np.eye(3)), np.eye(3))


def test_factor_of_diagonal():
    np.testing.assert_allclose(wccn_factor(np.diag([4.0, 1.0])), np.diag([0.5, 1.0]))


def test_factor_residual_on_random_spd(rng):
    for _ in range(100):
        dim = int(rng.integers(1, 65))
        s = random_spd(rng, dim)
        assert factor_residual(wccn_factor(s), s) <= 1e-8


def test_factor_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        wccn_factor(np.diag([1.0, -1.0]))


def test_factor_symmetrizes_round_off(rng):
    s = random_spd(rng, 5)
    s[0, 1] += 1e-13
    a = wccn_factor(s)
    assert factor_residual(a, 0.5 * (s + s.T)) <= 1e-8


def test_project_identity_and_diagonal(rng):
    w = rng.normal(size=4)
    np.testing.assert_array_equal(project(np.eye(4), w), w)
    np.testing.assert_allclose(project(np.diag([0.5, 1.0]), [2.0, 3.0]), [1.0, 3.0])


def test_project_matches_matrix_vector_product(rng):
    a = rng.normal(size=(5, 5))
    w = rng.normal(size=5)
    np.testing.assert_allclose(project(a, w), a.T @ w)
    batch = rng.normal(size=(7, 5))
    np.testing.assert_allclose(project(a, batch), np.stack([a.T @ row for row in batch]))


def test_project_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        project(np.eye(3), np.ones(2))


# ── classic_wccn ─────────────────────────────────────

def test_whitening_property(rng):
    labels = np.repeat(np.arange(4), 50)
    x = rng.normal(size=(200, 6)) @ rng.normal(size=(6, 6)) + labels[:, None] * 3.0
    a = classic_wccn(x, labels, beta=0.0)
    s = batch_within_class_cov(x, labels).averaged
    np.testing.assert_allclose(a.T @ s @ a, np.eye(6), atol=1e-8)


def test_classic_wccn_identity_covariance():
    # Cada clase: ±e_i sobre d = 2 da covarianza I.
    base = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    x = np.vstack([base + c * 10 for c in range(4)])
    labels = np.repeat(np.arange(4), 4)
    stats = batch_within_class_cov(x, labels)
    np.testing.assert_allclose(stats.averaged, 0.5 * np.eye(2))
    a = classic_wccn(x * np.sqrt(2), labels, beta=0.0)
    np.testing.assert_allclose(a, np.eye(2), atol=1e-12)


def test_classic_wccn_needs_two_samples_per_class(rng):
    with pytest.raises(NoEstimableClassError):
        classic_wccn(rng.normal(size=(5, 2)), [0, 0, 1, 1, 2], 0.2)
