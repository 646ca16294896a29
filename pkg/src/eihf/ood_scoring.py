"""Post-hoc ID-confidence scores over features and logits.

Every scorer follows one sign convention, larger score = more ID, which
is recorded on the ScoreSet type so downstream metrics can refuse
mismatched inputs instead of silently inverting.

The Mahalanobis detector uses per-class means with a single tied
covariance, pooled over within-class deviations with denominator N and
shrunk toward a scaled identity: (1 - lambda) * Sigma + lambda *
(trace(Sigma)/D) * I. Distances are computed through a Cholesky solve,
never an explicit inverse.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ValidationError
from .tensor_io import FeatureMatrix, _freeze

SCORE_CONVENTION = "larger_is_id"


@dataclass(frozen=True)
class ScoreSet:
    """Score vector tagged with its sign convention."""

    scores: np.ndarray
    convention: str = SCORE_CONVENTION

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if scores.size < 1:
            raise ValidationError("score set is empty")
        if not np.all(np.isfinite(scores)):
            raise ValidationError("score set contains non-finite values")
        object.__setattr__(self, "scores", _freeze(scores))

    @property
    def n(self) -> int:
        return self.scores.shape[0]


@dataclass(frozen=True)
class ClassStats:
    """Per-class means plus a shrinkage-regularized tied covariance.

    The Cholesky factor is computed at construction time; failure to
    factorize means the shrunk covariance is not positive definite.
    per_class_cov holds population class covariances for diagnostics.
    """

    mu: np.ndarray  # (C, D)
    sigma_hat: np.ndarray  # (D, D)
    shrinkage: float
    per_class_cov: np.ndarray | None = None  # (C, D, D)
    _factor: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=np.float64)
        sigma = np.asarray(self.sigma_hat, dtype=np.float64)
        if mu.ndim != 2:
            raise ValidationError("mu must be a (C, D) matrix")
        d = mu.shape[1]
        if sigma.shape != (d, d):
            raise ValidationError(f"sigma_hat must be {d}x{d}, got {sigma.shape}")
        if not np.allclose(sigma, sigma.T, atol=1e-10):
            raise ValidationError("sigma_hat must be symmetric")
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValidationError(f"shrinkage must be in [0, 1], got {self.shrinkage}")
        try:
            factor = linalg.cho_factor(sigma, lower=True)
        except linalg.LinAlgError:
            raise ValidationError(
                "covariance is not positive definite after shrinkage "
                f"lambda={self.shrinkage}; try a larger shrinkage"
            ) from None
        object.__setattr__(self, "mu", _freeze(mu))
        object.__setattr__(self, "sigma_hat", _freeze(sigma))
        object.__setattr__(self, "_factor", factor)
        if self.per_class_cov is not None:
            cov = np.asarray(self.per_class_cov, dtype=np.float64)
            if cov.shape != (mu.shape[0], d, d):
                raise ValidationError(
                    f"per_class_cov must be (C, D, D) = {(mu.shape[0], d, d)}, got {cov.shape}"
                )
            object.__setattr__(self, "per_class_cov", _freeze(cov))

    @property
    def class_count(self) -> int:
        return self.mu.shape[0]

    @property
    def dim(self) -> int:
        return self.mu.shape[1]

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """sigma_hat^{-1} @ rhs via the cached Cholesky factorization."""
        return linalg.cho_solve(self._factor, rhs)


def fit_class_stats(
    feats: FeatureMatrix, shrinkage: float = 0.05, keep_per_class: bool = True
) -> ClassStats:
    """Fit class means and the shrunk tied covariance from labeled features.

    Every class id in [0, max label] must appear at least once. The tied
    covariance pools within-class deviations with denominator N; per-class
    covariances (population, denominator N_c) are kept for diagnostics
    unless keep_per_class is False.
    """
    if feats.labels is None:
        raise ValidationError("fit_class_stats needs labeled features")
    values, labels = feats.values, feats.labels
    n, d = values.shape
    class_count = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=class_count)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValidationError(f"class {int(missing[0])} has no samples")

    mu = np.zeros((class_count, d))
    for c in range(class_count):
        mu[c] = values[labels == c].mean(axis=0)
    centered = values - mu[labels]
    sigma = centered.T @ centered / n

    target = (np.trace(sigma) / d) * np.eye(d)
    sigma_hat = (1.0 - shrinkage) * sigma + shrinkage * target

    per_class = None
    if keep_per_class:
        per_class = np.zeros((class_count, d, d))
        for c in range(class_count):
            dev = values[labels == c] - mu[c]
            per_class[c] = dev.T @ dev / counts[c]

    return ClassStats(
        mu=mu, sigma_hat=sigma_hat, shrinkage=shrinkage, per_class_cov=per_class
    )


def mahalanobis_distances(z, stats: ClassStats) -> np.ndarray:
    """d_c(z) = (z - mu_c)^T sigma_hat^{-1} (z - mu_c) for every class.

    Accepts a single D-vector or an (N, D) matrix; returns (C,) or (N, C).
    """
    arr = np.asarray(z, dtype=np.float64)
    single = arr.ndim == 1
    rows = arr.reshape(1, -1) if single else arr
    if rows.shape[1] != stats.dim:
        raise ValidationError(f"dim mismatch: features {rows.shape[1]}, stats {stats.dim}")
    out = np.empty((rows.shape[0], stats.class_count))
    for c in range(stats.class_count):
        diff = rows - stats.mu[c]
        solved = stats.solve(diff.T)
        out[:, c] = np.einsum("ij,ji->i", diff, solved)
    return out[0] if single else out


def mahalanobis_score(z, stats: ClassStats) -> float:
    """-min_c d_c(z); zero is the maximum, attained at a class mean."""
    return float(-mahalanobis_distances(z, stats).min())


def mahalanobis_scores(feats, stats: ClassStats) -> ScoreSet:
    values = feats.values if isinstance(feats, FeatureMatrix) else np.asarray(feats)
    return ScoreSet(-mahalanobis_distances(values, stats).min(axis=1))


def msp_score(logits) -> float:
    """Maximum softmax probability, max-subtracted for stability; in (0, 1]."""
    arr = np.asarray(logits, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ValidationError("logit vector is empty")
    shifted = arr - arr.max()
    probs = np.exp(shifted)
    return float(probs.max() / probs.sum())


def energy_score(logits, temperature: float = 1.0) -> float:
    """Negative free energy T * log sum exp(logit / T); shift-equivariant."""
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    arr = np.asarray(logits, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ValidationError("logit vector is empty")
    top = arr.max()
    return float(top + temperature * np.log(np.exp((arr - top) / temperature).sum()))


def msp_scores(logits) -> ScoreSet:
    rows = logits.values if isinstance(logits, FeatureMatrix) else np.asarray(logits)
    return ScoreSet(np.array([msp_score(row) for row in rows]))


def energy_scores(logits, temperature: float = 1.0) -> ScoreSet:
    rows = logits.values if isinstance(logits, FeatureMatrix) else np.asarray(logits)
    return ScoreSet(np.array([energy_score(row, temperature) for row in rows]))


def _l2_normalize(rows: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    zero = norms[:, 0] == 0.0
    if np.any(zero):
        warnings.warn(
            f"{what}: {int(zero.sum())} zero vector(s) left unnormalized",
            RuntimeWarning,
            stacklevel=3,
        )
        norms = np.where(norms == 0.0, 1.0, norms)
    return rows / norms


def knn_score(z, bank, k: int = 50, normalize: bool = True) -> float:
    """Negated distance to the k-th nearest bank row (optionally on the unit sphere)."""
    bank_rows = bank.values if isinstance(bank, FeatureMatrix) else np.asarray(bank, dtype=np.float64)
    if bank_rows.ndim != 2:
        raise ValidationError("bank must be a 2-D matrix")
    if not 1 <= k <= bank_rows.shape[0]:
        raise ValidationError(f"k must be in [1, {bank_rows.shape[0]}], got {k}")
    query = np.asarray(z, dtype=np.float64).reshape(1, -1)
    if query.shape[1] != bank_rows.shape[1]:
        raise ValidationError(f"dim mismatch: query {query.shape[1]}, bank {bank_rows.shape[1]}")
    if normalize:
        query = _l2_normalize(query, "knn query")
        bank_rows = _l2_normalize(bank_rows, "knn bank")
    dists = np.linalg.norm(bank_rows - query, axis=1)
    return float(-np.partition(dists, k - 1)[k - 1])


def knn_scores(feats, bank, k: int = 50, normalize: bool = True) -> ScoreSet:
    rows = feats.values if isinstance(feats, FeatureMatrix) else np.asarray(feats)
    return ScoreSet(np.array([knn_score(row, bank, k, normalize) for row in rows]))
