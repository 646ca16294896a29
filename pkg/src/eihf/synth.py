"""Deterministic synthetic fixtures for self-verification.

Three families: Gaussian score/feature sets with a known mean offset,
image sets whose ID/OOD discrepancy is confined to a single frequency
band, and a small labeled two-class image set with a texture-shifted OOD
companion. Everything is a pure function of its seed.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError
from .frequency import band_limit, make_band_masks
from .tensor_io import ImageTensor
from .util import make_rng


def make_gaussian_sets(
    mu: float, n: int, seed: int, dim: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """ID ~ N(mu, 1) and OOD ~ N(0, 1), i.i.d. per coordinate.

    dim == 1 gives flat score vectors; dim > 1 gives (n, dim) feature sets.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if dim < 1:
        raise ValidationError(f"dim must be >= 1, got {dim}")
    rng = make_rng(seed)
    shape = (n,) if dim == 1 else (n, dim)
    id_values = rng.standard_normal(shape) + mu
    ood_values = rng.standard_normal(shape)
    return id_values, ood_values


def make_band_textures(
    n: int,
    size: int = 32,
    bands: int = 8,
    target_band: int = 7,
    gain: float = 3.0,
    seed: int = 0,
) -> tuple[list[ImageTensor], list[ImageTensor]]:
    """Image sets identical in distribution except inside one frequency band.

    ID images are white noise. Each OOD image is the same kind of draw
    with its target-band content swapped for an independent draw amplified
    by `gain`, so only that band separates the two sets.
    """
    if not 1 <= target_band <= bands:
        raise ValidationError(f"target_band must be in [1, {bands}], got {target_band}")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    masks = make_band_masks(size, size, bands)
    target_mask = masks.masks[target_band - 1]
    rng = make_rng(seed)

    def draw() -> ImageTensor:
        return ImageTensor(rng.standard_normal((3, size, size)))

    id_images = [draw() for _ in range(n)]
    ood_images = []
    for _ in range(n):
        base = draw()
        fresh = draw()
        kept = base.data - band_limit(base, target_mask).data
        replaced = gain * band_limit(fresh, target_mask).data
        ood_images.append(ImageTensor(kept + replaced))
    return id_images, ood_images


def make_two_class_images(
    n_train_per_class: int = 40,
    n_test_per_set: int = 40,
    size: int = 32,
    seed: int = 0,
    texture_amp: float = 0.8,
) -> tuple[list[ImageTensor], np.ndarray, list[ImageTensor], list[ImageTensor]]:
    """Labeled two-class ID images plus a texture-shifted OOD set.

    Class 0 carries horizontal stripes, class 1 vertical stripes, both
    over smooth per-sample backgrounds. OOD images blend the two stripe
    patterns and add a strong checkerboard texture, shifting the local
    high-frequency statistics without moving the smooth content.

    Returns (train_images, train_labels, test_id_images, test_ood_images).
    """
    if n_train_per_class < 1 or n_test_per_set < 1:
        raise ValidationError("sample counts must be >= 1")
    rng = make_rng(seed)
    yy, xx = np.meshgrid(
        np.arange(size, dtype=np.float64), np.arange(size, dtype=np.float64), indexing="ij"
    )
    stripes = [
        0.5 * np.sin(2.0 * np.pi * 2.0 * yy / size),
        0.5 * np.sin(2.0 * np.pi * 2.0 * xx / size),
    ]
    checker = np.where((yy.astype(int) + xx.astype(int)) % 2 == 0, 1.0, -1.0)
    channel_gains = np.array([1.0, 0.9, 1.1])

    def smooth_field() -> np.ndarray:
        # low-frequency background: blurred white noise via spectral rolloff
        noise = rng.standard_normal((size, size))
        spec = np.fft.fftshift(np.fft.fft2(noise))
        fu = np.fft.fftshift(np.fft.fftfreq(size))
        rad = np.hypot(fu[:, None], fu[None, :])
        spec *= np.exp(-((rad / 0.1) ** 2))
        return np.fft.ifft2(np.fft.ifftshift(spec)).real

    def sample(pattern: np.ndarray, texture: float) -> ImageTensor:
        amp = 0.8 + 0.4 * rng.random()
        base = amp * pattern + 0.6 * smooth_field()
        if texture:
            base = base + texture * (0.7 + 0.3 * rng.random()) * checker
        base = base + 0.05 * rng.standard_normal((size, size))
        data = channel_gains[:, None, None] * base[None, :, :]
        data = data + 0.02 * rng.standard_normal((3, size, size))
        return ImageTensor(data)

    train_images: list[ImageTensor] = []
    train_labels: list[int] = []
    for c in (0, 1):
        for _ in range(n_train_per_class):
            train_images.append(sample(stripes[c], texture=0.0))
            train_labels.append(c)

    test_id = [sample(stripes[i % 2], texture=0.0) for i in range(n_test_per_set)]
    blended = 0.5 * (stripes[0] + stripes[1])
    test_ood = [sample(blended, texture=texture_amp) for _ in range(n_test_per_set)]
    return train_images, np.asarray(train_labels, dtype=np.int64), test_id, test_ood
