"""Class statistics fitting and the four post-hoc scoring rules."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eihf import (
    ClassStats,
    FeatureMatrix,
    ScoreSet,
    ValidationError,
    energy_score,
    fit_class_stats,
    knn_score,
    mahalanobis_distances,
    mahalanobis_score,
    mahalanobis_scores,
    msp_score,
)


def labeled_blobs(seed=0, n_per_class=200, centers=((0.0, 0.0), (4.0, 0.0), (0.0, 4.0))):
    rng = np.random.default_rng(seed)
    rows, labels = [], []
    for c, center in enumerate(centers):
        rows.append(rng.standard_normal((n_per_class, len(center))) + center)
        labels += [c] * n_per_class
    return FeatureMatrix(np.vstack(rows), np.asarray(labels))


# -- fitting -----------------------------------------------------------------------


def test_fit_means_are_exact():
    feats = FeatureMatrix(
        np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, 3.0]]),
        np.array([0, 0, 1, 1]),
    )
    stats = fit_class_stats(feats, shrinkage=0.5)
    np.testing.assert_array_equal(stats.mu, [[1.0, 0.0], [1.0, 2.0]])


def test_fit_degenerate_singletons_errors_at_full_shrinkage():
    # one point per class: pooled covariance is zero, so the shrinkage target
    # (trace/d * I) is zero too and factorization must refuse
    feats = FeatureMatrix(np.array([[0.0, 0.0], [2.0, 0.0]]), np.array([0, 1]))
    with pytest.raises(ValidationError, match="shrinkage"):
        fit_class_stats(feats, shrinkage=1.0)


def test_fit_with_noise_recovers_identity():
    rng = np.random.default_rng(1)
    values = np.vstack([rng.standard_normal((5000, 2)), rng.standard_normal((5000, 2)) + 10.0])
    labels = np.array([0] * 5000 + [1] * 5000)
    stats = fit_class_stats(FeatureMatrix(values, labels), shrinkage=0.0)
    assert np.linalg.norm(stats.sigma_hat - np.eye(2)) < 0.1


def test_fit_single_class_standard_normal():
    rng = np.random.default_rng(2)
    feats = FeatureMatrix(rng.standard_normal((10_000, 3)), np.zeros(10_000, dtype=int))
    stats = fit_class_stats(feats, shrinkage=0.0)
    assert np.linalg.norm(stats.sigma_hat - np.eye(3)) < 0.1


def test_fit_permutation_invariant():
    feats = labeled_blobs(seed=3, n_per_class=50)
    perm = np.random.default_rng(4).permutation(feats.n)
    shuffled = FeatureMatrix(feats.values[perm], feats.labels[perm])
    a = fit_class_stats(feats)
    b = fit_class_stats(shuffled)
    np.testing.assert_allclose(a.mu, b.mu, atol=1e-12)
    np.testing.assert_allclose(a.sigma_hat, b.sigma_hat, atol=1e-12)


def test_fit_missing_class_errors():
    feats = FeatureMatrix(np.zeros((4, 2)), np.array([0, 0, 2, 2]))
    with pytest.raises(ValidationError, match="class 1"):
        fit_class_stats(feats)


def test_fit_requires_labels():
    with pytest.raises(ValidationError, match="label"):
        fit_class_stats(FeatureMatrix(np.zeros((4, 2))))


def test_shrinkage_moves_toward_scaled_identity():
    feats = labeled_blobs(seed=5, n_per_class=100)
    raw = fit_class_stats(feats, shrinkage=0.0).sigma_hat
    shrunk = fit_class_stats(feats, shrinkage=0.3).sigma_hat
    target = (np.trace(raw) / raw.shape[0]) * np.eye(raw.shape[0])
    np.testing.assert_allclose(shrunk, 0.7 * raw + 0.3 * target, atol=1e-12)


# -- mahalanobis --------------------------------------------------------------------


def identity_stats(mu):
    mu = np.asarray(mu, dtype=float)
    return ClassStats(mu=mu, sigma_hat=np.eye(mu.shape[1]), shrinkage=0.0)


def test_identity_covariance_is_squared_euclidean():
    stats = identity_stats([[0.0, 0.0]])
    assert mahalanobis_score([3.0, 4.0], stats) == pytest.approx(-25.0, abs=1e-9)


def test_score_at_class_mean_is_zero():
    stats = identity_stats([[1.0, -2.0], [5.0, 5.0]])
    assert mahalanobis_score([1.0, -2.0], stats) == 0.0
    assert mahalanobis_score([5.0, 5.0], stats) == 0.0


def test_diagonal_covariance_hand_value():
    stats = ClassStats(mu=np.zeros((1, 2)), sigma_hat=np.diag([4.0, 1.0]), shrinkage=0.0)
    assert mahalanobis_score([2.0, 0.0], stats) == pytest.approx(-1.0, rel=1e-12)


def test_solve_matches_explicit_inverse():
    rng = np.random.default_rng(6)
    a = rng.standard_normal((4, 4))
    sigma = a @ a.T + 0.5 * np.eye(4)
    assert np.linalg.cond(sigma) < 1e6
    stats = ClassStats(mu=rng.standard_normal((3, 4)), sigma_hat=sigma, shrinkage=0.0)
    inv = np.linalg.inv(sigma)
    for _ in range(20):
        z = rng.standard_normal(4)
        direct = np.array([(z - mu) @ inv @ (z - mu) for mu in stats.mu])
        via_solve = mahalanobis_distances(z, stats)
        np.testing.assert_allclose(via_solve, direct, rtol=1e-8)


def test_argmin_class_is_nearest_centroid_under_identity():
    rng = np.random.default_rng(7)
    stats = identity_stats(rng.standard_normal((5, 3)) * 4.0)
    for _ in range(50):
        z = rng.standard_normal(3) * 3.0
        dists = mahalanobis_distances(z, stats)
        euclid = np.linalg.norm(stats.mu - z, axis=1)
        assert int(np.argmin(dists)) == int(np.argmin(euclid))


def test_batch_matches_single():
    rng = np.random.default_rng(8)
    stats = fit_class_stats(labeled_blobs(seed=9, n_per_class=40))
    rows = rng.standard_normal((6, 2))
    batch = mahalanobis_scores(rows, stats)
    assert isinstance(batch, ScoreSet)
    for row, score in zip(rows, batch.scores):
        assert score == pytest.approx(mahalanobis_score(row, stats), rel=1e-12)


def test_mahalanobis_dim_mismatch():
    stats = identity_stats([[0.0, 0.0]])
    with pytest.raises(ValidationError, match="dim mismatch"):
        mahalanobis_score([1.0, 2.0, 3.0], stats)


def test_non_pd_covariance_rejected():
    with pytest.raises(ValidationError, match="positive definite"):
        ClassStats(mu=np.zeros((1, 2)), sigma_hat=np.zeros((2, 2)), shrinkage=0.0)


# -- msp ----------------------------------------------------------------------------


def test_msp_symmetric_logits():
    assert msp_score([0.0, 0.0]) == 0.5


def test_msp_closed_form():
    want = math.exp(2.0) / (math.exp(2.0) + 1.0)
    assert msp_score([2.0, 0.0]) == pytest.approx(want, rel=1e-12)
    assert msp_score([2.0, 0.0]) == pytest.approx(0.880797, abs=1e-6)


def test_msp_shift_invariant():
    assert msp_score([1002.0, 1000.0]) == msp_score([2.0, 0.0])
    assert msp_score([1e4, 0.0]) == pytest.approx(1.0)
    assert math.isfinite(msp_score([-1e4, 1e4]))


def test_msp_empty():
    with pytest.raises(ValidationError, match="empty"):
        msp_score([])


# -- energy -------------------------------------------------------------------------


def test_energy_two_zeros():
    assert energy_score([0.0, 0.0], 1.0) == pytest.approx(math.log(2.0), rel=1e-12)


def test_energy_single_logit_equals_value():
    for t in (0.5, 1.0, 7.0):
        assert energy_score([3.25], t) == 3.25


def test_energy_shift_equivariant():
    base = energy_score([1.0, 2.0, -0.5], 1.5)
    shifted = energy_score([1.0 + 10.0, 2.0 + 10.0, -0.5 + 10.0], 1.5)
    assert shifted == pytest.approx(base + 10.0, rel=1e-12)


def test_energy_stable_at_extremes():
    assert math.isfinite(energy_score([1e4, -1e4], 1.0))
    assert math.isfinite(energy_score([-1e4, -1e4], 1.0))


def test_energy_rejects_bad_temperature():
    with pytest.raises(ValidationError, match="temperature"):
        energy_score([0.0], 0.0)


# -- knn ----------------------------------------------------------------------------


def test_knn_nearest_distance():
    bank = np.array([[0.0], [10.0]])
    assert knn_score([1.0], bank, k=1, normalize=False) == -1.0


def test_knn_query_in_bank():
    bank = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert knn_score([1.0, 2.0], bank, k=1, normalize=False) == 0.0


def test_knn_k_equals_bank_size():
    bank = np.array([[0.0], [3.0], [7.0]])
    assert knn_score([0.0], bank, k=3, normalize=False) == -7.0


def test_knn_monotone_in_k():
    rng = np.random.default_rng(10)
    bank = rng.standard_normal((30, 4))
    z = rng.standard_normal(4)
    scores = [knn_score(z, bank, k=k, normalize=False) for k in range(1, 31)]
    assert all(b <= a for a, b in zip(scores, scores[1:]))


def test_knn_bank_permutation_invariant():
    rng = np.random.default_rng(11)
    bank = rng.standard_normal((20, 3))
    z = rng.standard_normal(3)
    a = knn_score(z, bank, k=5)
    b = knn_score(z, bank[rng.permutation(20)], k=5)
    assert a == b


def test_knn_normalization_projects_to_sphere():
    bank = np.array([[2.0, 0.0], [0.0, 5.0]])
    # after normalization both rows are unit vectors; query (1,0) hits the first
    assert knn_score([3.0, 0.0], bank, k=1, normalize=True) == 0.0


def test_knn_zero_vector_warns():
    bank = np.array([[0.0, 0.0], [1.0, 0.0]])
    with pytest.warns(RuntimeWarning, match="zero vector"):
        knn_score([1.0, 0.0], bank, k=1, normalize=True)


def test_knn_k_out_of_range():
    with pytest.raises(ValidationError, match="k must be"):
        knn_score([0.0], np.zeros((3, 1)), k=4)


# -- score set ----------------------------------------------------------------------


def test_score_set_validation():
    with pytest.raises(ValidationError, match="empty"):
        ScoreSet(np.array([]))
    with pytest.raises(ValidationError, match="non-finite"):
        ScoreSet(np.array([1.0, np.nan]))
    assert ScoreSet(np.array([1.0])).convention == "larger_is_id"


@settings(max_examples=20, deadline=None)
@given(shift=st.floats(-100.0, 100.0))
def test_energy_shift_property(shift):
    logits = np.array([0.3, -1.2, 2.2])
    assert energy_score(logits + shift) == pytest.approx(
        energy_score(logits) + shift, rel=1e-9, abs=1e-9
    )
