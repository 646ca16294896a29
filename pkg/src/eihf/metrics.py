"""Detection metrics and feature-geometry diagnostics.

AUROC is the Mann-Whitney statistic P(id > ood) + 0.5 P(id = ood),
computed by sorting, and agrees exactly with the all-pairs count. The
FPR95 threshold tau is the largest observed ID score whose >= count
reaches the TPR target, so ties at tau count as positives on both sides.
Score overlap histograms both sets with shared bins over the pooled
min-max range and sums the per-bin minima of the two normalized
histograms.

Geometry diagnostics use population (1/N) covariances throughout, which
makes the within-class variance equal to the mean trace of the class
covariances; v_intra checks that identity internally on every call.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EihfError, ValidationError
from .ood_scoring import ClassStats, ScoreSet
from .tensor_io import FeatureMatrix


def _score_values(scores, other=None) -> np.ndarray:
    if isinstance(scores, ScoreSet):
        if isinstance(other, ScoreSet) and scores.convention != other.convention:
            raise ValidationError(
                f"score convention mismatch: {scores.convention!r} vs {other.convention!r}"
            )
        return scores.scores
    arr = np.asarray(scores, dtype=np.float64).reshape(-1)
    if arr.size < 1:
        raise ValidationError("score set is empty")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("score set contains non-finite values")
    return arr


def auroc(id_scores, ood_scores) -> float:
    """P(id > ood) + 0.5 P(id = ood), ties half-credit, exact."""
    ids = _score_values(id_scores, ood_scores)
    oods = _score_values(ood_scores, id_scores)
    sorted_ood = np.sort(oods)
    lo = np.searchsorted(sorted_ood, ids, side="left")
    hi = np.searchsorted(sorted_ood, ids, side="right")
    # per-ID credit = (#ood below) + 0.5 (#ood equal); all terms are exact halves
    total = float(lo.sum()) + 0.5 * float((hi - lo).sum())
    return total / (ids.size * oods.size)


def fpr_at_tpr(id_scores, ood_scores, tpr_target: float = 0.95) -> tuple[float, float]:
    """(FPR, tau): tau is the largest observed ID score keeping TPR >= target."""
    ids = _score_values(id_scores, ood_scores)
    oods = _score_values(ood_scores, id_scores)
    if not 0.0 < tpr_target <= 1.0:
        raise ValidationError(f"tpr_target must be in (0, 1], got {tpr_target}")
    desc = np.sort(ids)[::-1]
    n = ids.size
    achieved = np.arange(1, n + 1, dtype=np.float64) / n
    k = int(np.argmax(achieved >= tpr_target))
    if achieved[k] < tpr_target:
        raise ValidationError(f"TPR target {tpr_target} is unreachable")
    tau = float(desc[k])
    fpr = float(np.count_nonzero(oods >= tau)) / oods.size
    return fpr, tau


def score_overlap(id_scores, ood_scores, bins: int = 100) -> float:
    """Sum of per-bin minima of the two shared-bin normalized histograms, in [0, 1]."""
    ids = _score_values(id_scores, ood_scores)
    oods = _score_values(ood_scores, id_scores)
    if bins < 2:
        raise ValidationError(f"bins must be >= 2, got {bins}")
    lo = min(ids.min(), oods.min())
    hi = max(ids.max(), oods.max())
    if lo == hi:
        warnings.warn(
            "all pooled scores are identical; overlap is degenerate (1.0)",
            RuntimeWarning,
            stacklevel=2,
        )
        return 1.0
    p_in, _ = np.histogram(ids, bins=bins, range=(lo, hi))
    p_out, _ = np.histogram(oods, bins=bins, range=(lo, hi))
    return float(np.minimum(p_in / ids.size, p_out / oods.size).sum())


# ---------------------------------------------------------------------------
# Geometry diagnostics
# ---------------------------------------------------------------------------


def _class_means(feats: FeatureMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if feats.labels is None:
        raise ValidationError("geometry diagnostics need labeled features")
    labels = feats.labels
    class_count = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=class_count)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        raise ValidationError(f"class {int(missing[0])} has no samples")
    mu = np.zeros((class_count, feats.d))
    for c in range(class_count):
        mu[c] = feats.values[labels == c].mean(axis=0)
    return mu, labels, counts


def v_intra(feats: FeatureMatrix) -> float:
    """Average within-class variance: mean over classes of the mean squared
    distance to the class mean. Cross-checked against the mean trace of the
    population class covariances on every call."""
    mu, labels, counts = _class_means(feats)
    class_count = mu.shape[0]
    direct = 0.0
    trace_form = 0.0
    for c in range(class_count):
        dev = feats.values[labels == c] - mu[c]
        direct += float(np.square(dev).sum()) / counts[c]
        trace_form += float(np.trace(dev.T @ dev / counts[c]))
    direct /= class_count
    trace_form /= class_count
    if abs(direct - trace_form) > 1e-8 * max(abs(direct), 1e-30):
        raise EihfError(
            f"within-class variance identity violated: {direct!r} vs {trace_form!r}"
        )
    return direct


def mean_id_distance(feats: FeatureMatrix) -> float:
    """Mean over all samples of the Euclidean distance to the own-class mean."""
    mu, labels, _ = _class_means(feats)
    return float(np.linalg.norm(feats.values - mu[labels], axis=1).mean())


def expected_mahalanobis(stats: ClassStats, class_id: int) -> float:
    """trace(sigma_hat^{-1} Sigma_c): the expected Mahalanobis distance of a
    class-c sample under the class covariance, via factorized solves."""
    if stats.per_class_cov is None:
        raise ValidationError("stats were fitted without per-class covariances")
    if not 0 <= class_id < stats.class_count:
        raise ValidationError(f"class_id must be in [0, {stats.class_count}), got {class_id}")
    return float(np.trace(stats.solve(stats.per_class_cov[class_id])))


# ---------------------------------------------------------------------------
# Combined report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalReport:
    """Everything the `eval` surface reports for one ID/OOD pairing."""

    auroc: float
    fpr95: float
    tau95: float
    overlap: float
    bin_count: int
    bin_range: tuple[float, float]
    n_id: int
    n_ood: int
    geometry: dict | None = field(default=None)

    def to_dict(self) -> dict:
        out = {
            "auroc": self.auroc,
            "fpr95": self.fpr95,
            "tau95": self.tau95,
            "overlap": self.overlap,
            "bins": self.bin_count,
            "bin_range": list(self.bin_range),
            "n_id": self.n_id,
            "n_ood": self.n_ood,
        }
        if self.geometry is not None:
            out["geometry"] = dict(self.geometry)
        return out


def evaluate_scores(
    id_scores, ood_scores, bins: int = 100, tpr_target: float = 0.95
) -> EvalReport:
    """AUROC, FPR at the TPR target, and histogram overlap in one report."""
    ids = _score_values(id_scores, ood_scores)
    oods = _score_values(ood_scores, id_scores)
    fpr, tau = fpr_at_tpr(ids, oods, tpr_target)
    lo = float(min(ids.min(), oods.min()))
    hi = float(max(ids.max(), oods.max()))
    return EvalReport(
        auroc=auroc(ids, oods),
        fpr95=fpr,
        tau95=tau,
        overlap=score_overlap(ids, oods, bins),
        bin_count=bins,
        bin_range=(lo, hi),
        n_id=int(ids.size),
        n_ood=int(oods.size),
    )
