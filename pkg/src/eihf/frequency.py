"""Spectral band decomposition and the high-frequency residual channel.

Band masks live on the centered (DC-at-center) 2-D frequency grid. The
normalized radius of bin (u, v) is sqrt((du/H)^2 + (dv/W)^2) divided by
the largest radius on the grid, so it spans [0, 1] regardless of aspect
ratio. Band b of B covers radii in [(b-1)/B, b/B), the last band closes
at 1 inclusive, and the DC bin belongs to band 1. The masks partition
the grid exactly: they are pairwise disjoint and sum to one everywhere.

The residual channel is |G - K*G| where G is a fixed grayscale
projection and K a smoothing kernel (Gaussian by default; Sobel and
Laplace magnitudes are available as alternative high-pass operators).
The channel is rescaled by alpha = 1 / (sigma + epsilon) with sigma the
population standard deviation of all residual pixels over the fitting
set, so its magnitude matches normalized RGB inputs. The same alpha is
then applied to every image scored against those statistics.

All spatial filtering uses edge-inclusive symmetric ("reflect") padding,
the single padding rule used library-wide. Seeded operations use the
Philox counter-based generator, so identical seeds give identical output
on every platform.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import ValidationError
from .tensor_io import ImageTensor, _freeze
from .util import make_rng

GRAYSCALE_WEIGHTS = np.array([0.2989, 0.5870, 0.1140])

CHANNEL_VARIANTS = ("eihf", "zero", "random", "lowfreq", "shuffled_hf")
RESIDUAL_OPERATORS = ("gaussian", "sobel", "laplace")

IMAG_RESIDUE_TOL = 1e-6


@dataclass(frozen=True)
class BandMaskSet:
    """B disjoint binary masks partitioning the centered 2-D spectrum."""

    masks: np.ndarray  # (B, H, W) bool

    def __post_init__(self):
        masks = np.asarray(self.masks, dtype=bool)
        if masks.ndim != 3 or masks.shape[0] < 1:
            raise ValidationError("masks must be a (B, H, W) stack with B >= 1")
        counts = masks.sum(axis=0)
        if not np.all(counts == 1):
            raise ValidationError("masks must partition the grid (disjoint, covering)")
        object.__setattr__(self, "masks", _freeze(masks))

    @property
    def band_count(self) -> int:
        return self.masks.shape[0]

    @property
    def height(self) -> int:
        return self.masks.shape[1]

    @property
    def width(self) -> int:
        return self.masks.shape[2]


@dataclass(frozen=True)
class ResidualParams:
    """Configuration of the residual channel: smoothing kernel and scaling.

    alpha_hf is None until fitted on the training residual statistics.
    """

    kernel_size: int = 5
    sigma_blur: float = 1.0
    alpha_hf: float | None = None
    epsilon: float = 1e-6
    operator: str = "gaussian"

    def __post_init__(self):
        if self.kernel_size < 3 or self.kernel_size % 2 == 0:
            raise ValidationError(f"kernel_size must be odd and >= 3, got {self.kernel_size}")
        if self.sigma_blur <= 0:
            raise ValidationError(f"sigma_blur must be positive, got {self.sigma_blur}")
        if self.epsilon <= 0:
            raise ValidationError(f"epsilon must be positive, got {self.epsilon}")
        if self.alpha_hf is not None and self.alpha_hf <= 0:
            raise ValidationError(f"alpha_hf must be positive, got {self.alpha_hf}")
        if self.operator not in RESIDUAL_OPERATORS:
            raise ValidationError(
                f"unknown operator {self.operator!r} (expected one of {RESIDUAL_OPERATORS})"
            )

    @property
    def fitted(self) -> bool:
        return self.alpha_hf is not None

    def with_alpha(self, alpha: float) -> "ResidualParams":
        return replace(self, alpha_hf=float(alpha))


# ---------------------------------------------------------------------------
# Band masks and band-limited images
# ---------------------------------------------------------------------------


def make_band_masks(height: int, width: int, bands: int) -> BandMaskSet:
    """Partition the H x W spectrum into `bands` equal-radius annular masks."""
    if bands < 1:
        raise ValidationError(f"band count must be >= 1, got {bands}")
    if height < 1 or width < 1:
        raise ValidationError("grid must be at least 1x1")
    fu = np.fft.fftshift(np.fft.fftfreq(height))
    fv = np.fft.fftshift(np.fft.fftfreq(width))
    radius = np.hypot(fu[:, None], fv[None, :])
    rmax = radius.max()
    if rmax > 0:
        radius = radius / rmax
    # floor(r*B) with the closing band clamped keeps r=1 inside the last band
    idx = np.minimum(np.floor(radius * bands).astype(np.int64), bands - 1)
    masks = idx[None, :, :] == np.arange(bands)[:, None, None]
    empty = np.flatnonzero(~masks.any(axis=(1, 2)))
    if empty.size:
        raise ValidationError(
            f"band {int(empty[0]) + 1} of {bands} is empty on a {height}x{width} grid; "
            "reduce the band count"
        )
    return BandMaskSet(masks)


def band_limit(img: ImageTensor, mask: np.ndarray) -> ImageTensor:
    """Keep only the spectral content selected by one centered mask.

    Per channel: forward 2-D DFT, multiply by the mask, inverse DFT, keep
    the real part. A large imaginary residue indicates a mask that breaks
    conjugate symmetry and triggers a diagnostic warning.
    """
    mask = np.asarray(mask)
    if mask.shape != (img.height, img.width):
        raise ValidationError(
            f"mask shape {mask.shape} does not match image {img.height}x{img.width}"
        )
    spectrum = np.fft.fftshift(np.fft.fft2(img.data, axes=(-2, -1)), axes=(-2, -1))
    out = np.fft.ifft2(np.fft.ifftshift(spectrum * mask, axes=(-2, -1)), axes=(-2, -1))
    _warn_imag_residue(out)
    return ImageTensor(out.real, norm_meta=img.norm_meta)


def band_decompose(img: ImageTensor, masks: BandMaskSet) -> list[ImageTensor]:
    """All band-limited versions of img, sharing a single forward transform."""
    if (masks.height, masks.width) != (img.height, img.width):
        raise ValidationError(
            f"mask grid {masks.height}x{masks.width} does not match "
            f"image {img.height}x{img.width}"
        )
    spectrum = np.fft.fftshift(np.fft.fft2(img.data, axes=(-2, -1)), axes=(-2, -1))
    out = []
    for mask in masks.masks:
        inv = np.fft.ifft2(np.fft.ifftshift(spectrum * mask, axes=(-2, -1)), axes=(-2, -1))
        _warn_imag_residue(inv)
        out.append(ImageTensor(inv.real, norm_meta=img.norm_meta))
    return out


def _warn_imag_residue(arr: np.ndarray) -> None:
    residue = float(np.abs(arr.imag).max())
    if residue > IMAG_RESIDUE_TOL:
        warnings.warn(
            f"inverse DFT imaginary residue {residue:.3e} exceeds {IMAG_RESIDUE_TOL:.0e}; "
            "the mask may not be conjugate-symmetric",
            RuntimeWarning,
            stacklevel=3,
        )


# ---------------------------------------------------------------------------
# Grayscale, smoothing, residual
# ---------------------------------------------------------------------------


def grayscale(img: ImageTensor) -> np.ndarray:
    """Fixed linear intensity projection 0.2989 R + 0.5870 G + 0.1140 B."""
    if img.channels != 3:
        raise ValidationError(f"grayscale needs a 3-channel image, got {img.channels}")
    return np.tensordot(GRAYSCALE_WEIGHTS, img.data, axes=(0, 0))


def gaussian_kernel(kernel_size: int, sigma: float) -> np.ndarray:
    """Truncated 2-D Gaussian, renormalized to sum exactly 1."""
    half = kernel_size // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    kern = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    return kern / kern.sum()


def gaussian_smooth(image_map: np.ndarray, params: ResidualParams) -> np.ndarray:
    """2-D Gaussian smoothing with reflect padding; output dims equal input dims."""
    image_map = np.asarray(image_map, dtype=np.float64)
    if image_map.ndim != 2:
        raise ValidationError(f"expected a 2-D map, got {image_map.ndim} dims")
    if min(image_map.shape) < params.kernel_size:
        raise ValidationError(
            f"map {image_map.shape} is smaller than the {params.kernel_size}x"
            f"{params.kernel_size} kernel"
        )
    kern = gaussian_kernel(params.kernel_size, params.sigma_blur)
    # anchor subtraction: since the kernel sums to 1, K*G = r + K*(G - r);
    # filtering deviations keeps constant maps exactly fixed
    anchor = image_map.flat[0]
    return anchor + ndimage.correlate(image_map - anchor, kern, mode="reflect")


def hf_residual(img: ImageTensor, params: ResidualParams | None = None) -> np.ndarray:
    """Unscaled high-frequency residual map; non-negative everywhere.

    gaussian: |G - K*G|; sobel: gradient magnitude of G; laplace: |Laplacian of G|.
    """
    params = params or ResidualParams()
    gray = grayscale(img)
    if params.operator == "gaussian":
        return np.abs(gray - gaussian_smooth(gray, params))
    if params.operator == "sobel":
        gx = ndimage.sobel(gray, axis=0, mode="reflect")
        gy = ndimage.sobel(gray, axis=1, mode="reflect")
        return np.hypot(gx, gy)
    return np.abs(ndimage.laplace(gray, mode="reflect"))


# ---------------------------------------------------------------------------
# Residual scaling
# ---------------------------------------------------------------------------


class ResidualMoments:
    """Streaming accumulator for the residual scale fit.

    Tracks count, sum and sum of squares over all pixels seen, so partial
    accumulators from parallel workers can be merged associatively.
    """

    def __init__(self):
        self.count = 0
        self.total = 0.0
        self.total_sq = 0.0

    def update(self, image_map: np.ndarray) -> "ResidualMoments":
        arr = np.asarray(image_map, dtype=np.float64)
        self.count += arr.size
        self.total += float(arr.sum())
        self.total_sq += float(np.square(arr).sum())
        return self

    def merge(self, other: "ResidualMoments") -> "ResidualMoments":
        self.count += other.count
        self.total += other.total
        self.total_sq += other.total_sq
        return self

    def std(self) -> float:
        """Population standard deviation of all accumulated pixels."""
        if self.count < 2:
            raise ValidationError("need at least 2 residual pixels to fit a scale")
        mean = self.total / self.count
        var = self.total_sq / self.count - mean * mean
        return float(np.sqrt(max(var, 0.0)))

    def alpha(self, epsilon: float = 1e-6) -> float:
        return 1.0 / (self.std() + epsilon)


def fit_alpha(residual_maps: Iterable[np.ndarray], epsilon: float = 1e-6) -> float:
    """Scale 1/(sigma + epsilon) from a stream of unscaled residual maps.

    sigma is the population standard deviation over all pixels of all maps,
    computed in a single pass. Fit this on training data only.
    """
    moments = ResidualMoments()
    for image_map in residual_maps:
        moments.update(image_map)
    if moments.count == 0:
        raise ValidationError("cannot fit alpha on an empty stream of residual maps")
    return moments.alpha(epsilon)


# ---------------------------------------------------------------------------
# Channel injection
# ---------------------------------------------------------------------------


def eihf_transform(img: ImageTensor, params: ResidualParams) -> ImageTensor:
    """Append the scaled residual as a fourth channel; RGB passes through bitwise."""
    if not params.fitted:
        raise ValidationError("alpha_hf is unfitted; call fit_alpha on training residuals first")
    channel = params.alpha_hf * hf_residual(img, params)
    return _concat_channel(img, channel)


def ablation_channel(
    img: ImageTensor,
    variant: str,
    seed: int | np.random.SeedSequence = 0,
    params: ResidualParams | None = None,
) -> np.ndarray:
    """Control channels isolating what the residual contributes.

    zero: all zeros. random: seeded standard-normal pixels. lowfreq: the
    smoothed intensity K*G scaled by its own fitted alpha. shuffled_hf: a
    seeded spatial permutation of the scaled residual, which keeps the
    marginal pixel statistics but destroys alignment with the image.
    """
    params = params or ResidualParams()
    if variant == "zero":
        return np.zeros((img.height, img.width))
    if variant == "random":
        return make_rng(seed).standard_normal((img.height, img.width))
    if variant == "lowfreq":
        if not params.fitted:
            raise ValidationError("lowfreq variant needs an alpha fitted on smoothed maps")
        return params.alpha_hf * gaussian_smooth(grayscale(img), params)
    if variant == "shuffled_hf":
        if not params.fitted:
            raise ValidationError("shuffled_hf variant needs a fitted alpha")
        channel = params.alpha_hf * hf_residual(img, params)
        perm = make_rng(seed).permutation(channel.size)
        return channel.ravel()[perm].reshape(channel.shape)
    raise ValidationError(f"unknown variant {variant!r} (expected one of {CHANNEL_VARIANTS})")


def apply_channel_variant(
    img: ImageTensor,
    variant: str,
    params: ResidualParams,
    seed: int | np.random.SeedSequence = 0,
) -> ImageTensor:
    """Four-channel image for any variant; 'eihf' is the real residual channel."""
    if variant == "eihf":
        return eihf_transform(img, params)
    return _concat_channel(img, ablation_channel(img, variant, seed, params))


def _concat_channel(img: ImageTensor, channel: np.ndarray) -> ImageTensor:
    if img.channels != 3:
        raise ValidationError(f"channel injection needs a 3-channel image, got {img.channels}")
    data = np.concatenate([img.data, channel[None, :, :]], axis=0)
    return ImageTensor(data, norm_meta=None)


def smoothed_map(img: ImageTensor, params: ResidualParams | None = None) -> np.ndarray:
    """K*G(x), the map whose statistics calibrate the lowfreq ablation."""
    params = params or ResidualParams()
    return gaussian_smooth(grayscale(img), params)
