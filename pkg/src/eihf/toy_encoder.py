"""A deterministic, training-free image encoder for desk-scale pipelines.

One bank of seeded random convolution kernels (sliding dot product with
edge-inclusive reflect padding, the library-wide padding rule), a
rectifier, and global average pooling per filter. The whole encoder is
determined by (seed, in_channels, n_filters, kernel_size); the same seed
always reproduces the same filter bank bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ValidationError
from .tensor_io import ImageTensor, _freeze
from .util import make_rng


@dataclass(frozen=True)
class ToyEncoder:
    seed: int
    in_channels: int
    filters: np.ndarray  # (F, C, k, k)

    def __post_init__(self):
        filters = np.asarray(self.filters, dtype=np.float64)
        if filters.ndim != 4 or filters.shape[1] != self.in_channels:
            raise ValidationError("filters must be (F, in_channels, k, k)")
        object.__setattr__(self, "filters", _freeze(filters))

    @property
    def n_filters(self) -> int:
        return self.filters.shape[0]

    @property
    def kernel_size(self) -> int:
        return self.filters.shape[2]


def init_encoder(
    seed: int, in_channels: int = 3, n_filters: int = 64, kernel_size: int = 5
) -> ToyEncoder:
    """Draw a frozen bank of i.i.d. standard-normal kernels from the seed."""
    if in_channels < 1:
        raise ValidationError(f"in_channels must be >= 1, got {in_channels}")
    if n_filters < 1:
        raise ValidationError(f"n_filters must be >= 1, got {n_filters}")
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValidationError(f"kernel_size must be odd and >= 1, got {kernel_size}")
    filters = make_rng(seed).standard_normal(
        (n_filters, in_channels, kernel_size, kernel_size)
    )
    return ToyEncoder(seed=seed, in_channels=in_channels, filters=filters)


def encode(enc: ToyEncoder, img: ImageTensor) -> np.ndarray:
    """Feature vector of length n_filters: convolve, rectify, average.

    Implemented as one patch-matrix multiply per image, which keeps the
    band-profile loops fast without changing the math.
    """
    if img.channels != enc.in_channels:
        raise ValidationError(
            f"encoder expects {enc.in_channels} channels, image has {img.channels}"
        )
    k = enc.kernel_size
    half = k // 2
    padded = np.pad(img.data, ((0, 0), (half, half), (half, half)), mode="symmetric")
    # (C, H, W, k, k) -> (H*W, C*k*k) patch matrix
    windows = sliding_window_view(padded, (k, k), axis=(1, 2))
    patches = windows.transpose(1, 2, 0, 3, 4).reshape(img.height * img.width, -1)
    weights = enc.filters.reshape(enc.n_filters, -1)
    responses = patches @ weights.T
    return np.maximum(responses, 0.0).mean(axis=0)
