"""RBF-kernel two-sample machinery and the band-wise separability profile.

The kernel convention is k(x, y) = exp(-||x - y||^2 / (2 sigma^2)).
Two empirical MMD^2 estimators are provided: the biased V-statistic
(kernel means including diagonals, always >= 0) and the unbiased
U-statistic (self-pairs excluded from the within-sample means), which is
the default. The bandwidth is fixed once per comparison, by default the
median pairwise distance of the pooled full-image features, and reused
unchanged for every band so the profile is comparable across bands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist, pdist

from .errors import ValidationError
from .frequency import BandMaskSet, band_decompose
from .tensor_io import FeatureMatrix, ImageTensor, _freeze
from .util import parallel_map

ESTIMATORS = ("biased", "unbiased")


@dataclass(frozen=True)
class KernelParams:
    sigma_k: float
    estimator: str = "unbiased"

    def __post_init__(self):
        if self.sigma_k <= 0:
            raise ValidationError(f"sigma_k must be positive, got {self.sigma_k}")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(
                f"unknown estimator {self.estimator!r} (expected one of {ESTIMATORS})"
            )


@dataclass(frozen=True)
class BandProfile:
    """Per-band MMD^2 values, ordered low to high frequency, plus run metadata."""

    values: np.ndarray
    sigma_k: float
    estimator: str
    n_id: int
    n_ood: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size < 1:
            raise ValidationError("profile must have at least one band")
        if self.estimator == "biased" and values.min() < -1e-9:
            raise ValidationError(
                f"biased MMD^2 must be non-negative, got {values.min():.3e}"
            )
        object.__setattr__(self, "values", _freeze(values))

    @property
    def band_count(self) -> int:
        return self.values.shape[0]


def _rows(x) -> np.ndarray:
    if isinstance(x, FeatureMatrix):
        return x.values
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"expected a 2-D sample matrix, got {arr.ndim} dims")
    return arr


def median_bandwidth(features) -> float:
    """Median pairwise Euclidean distance, self-pairs excluded.

    Falls back to the mean distance when the median is zero; errors out if
    the mean is zero too (all points identical).
    """
    rows = _rows(features)
    if rows.shape[0] < 2:
        raise ValidationError("need at least 2 rows to pick a bandwidth")
    dists = pdist(rows)
    sigma = float(np.median(dists))
    if sigma == 0.0:
        sigma = float(dists.mean())
    if sigma == 0.0:
        raise ValidationError("degenerate point set: all pairwise distances are zero")
    return sigma


def rbf_kernel(x, y, sigma_k: float) -> float:
    """exp(-||x - y||^2 / (2 sigma_k^2)), in (0, 1]."""
    if sigma_k <= 0:
        raise ValidationError(f"sigma_k must be positive, got {sigma_k}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ValidationError(f"dim mismatch: {x.shape[0]} vs {y.shape[0]}")
    sq = float(np.square(x - y).sum())
    return float(np.exp(-sq / (2.0 * sigma_k**2)))


def _gram(a: np.ndarray, b: np.ndarray, sigma_k: float) -> np.ndarray:
    return np.exp(cdist(a, b, "sqeuclidean") / (-2.0 * sigma_k**2))


def mmd2(x, y, params: KernelParams) -> float:
    """Empirical squared MMD between the rows of x and the rows of y.

    biased:   mean(Kxx) + mean(Kyy) - 2 mean(Kxy), diagonals included.
    unbiased: the off-diagonal means of Kxx and Kyy with the same cross term.
    """
    xa, ya = _rows(x), _rows(y)
    if xa.shape[1] != ya.shape[1]:
        raise ValidationError(f"dim mismatch: {xa.shape[1]} vs {ya.shape[1]}")
    n, m = xa.shape[0], ya.shape[0]
    if params.estimator == "unbiased" and (n < 2 or m < 2):
        raise ValidationError(f"unbiased estimator needs n >= 2 and m >= 2, got n={n}, m={m}")
    kxx = _gram(xa, xa, params.sigma_k)
    kyy = _gram(ya, ya, params.sigma_k)
    kxy = _gram(xa, ya, params.sigma_k)
    # summing the cross gram both ways makes mmd2(x, y) == mmd2(y, x) bit for bit
    cross = 0.5 * (float(kxy.sum()) + float(np.ascontiguousarray(kxy.T).sum()))
    if params.estimator == "biased":
        return float(kxx.mean() + kyy.mean() - 2.0 * cross / (n * m))
    term_xx = (kxx.sum() - np.trace(kxx)) / (n * (n - 1))
    term_yy = (kyy.sum() - np.trace(kyy)) / (m * (m - 1))
    return float(term_xx + term_yy - 2.0 * cross / (n * m))


def bandwise_profile(
    encode: Callable[[ImageTensor], np.ndarray],
    id_images: Sequence[ImageTensor],
    ood_images: Sequence[ImageTensor],
    masks: BandMaskSet,
    params: KernelParams | None = None,
    estimator: str = "unbiased",
) -> BandProfile:
    """Band-wise MMD^2 between encoded band-limited ID and OOD image sets.

    Every image is split into its band-limited versions, each version is
    passed through the same fixed encoder, and one MMD^2 value is computed
    per band with a single shared bandwidth. When params is None the
    bandwidth is the median heuristic on the pooled full-image features,
    chosen before any band is compared.
    """
    if len(id_images) == 0 or len(ood_images) == 0:
        raise ValidationError("both image sets must be non-empty")
    if params is None:
        full = np.stack(
            [np.asarray(encode(img), dtype=np.float64) for img in id_images]
            + [np.asarray(encode(img), dtype=np.float64) for img in ood_images]
        )
        params = KernelParams(median_bandwidth(full), estimator)

    def encode_bands(img: ImageTensor) -> list[np.ndarray]:
        return [np.asarray(encode(b), dtype=np.float64) for b in band_decompose(img, masks)]

    id_feats = parallel_map(encode_bands, list(id_images))
    ood_feats = parallel_map(encode_bands, list(ood_images))
    values = []
    for b in range(masks.band_count):
        z_in = np.stack([feats[b] for feats in id_feats])
        z_out = np.stack([feats[b] for feats in ood_feats])
        values.append(mmd2(z_in, z_out, params))
    return BandProfile(
        values=np.asarray(values),
        sigma_k=params.sigma_k,
        estimator=params.estimator,
        n_id=len(id_images),
        n_ood=len(ood_images),
    )
