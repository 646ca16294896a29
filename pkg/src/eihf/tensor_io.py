"""Tensor and matrix I/O plus the core container types.

On-disk formats
---------------
FTB (little-endian binary): magic ``FTB1`` (4 bytes), dtype u8 (1=f32,
2=f64, 3=i64), ndim u8, reserved u16 (must be 0), then ndim u64 dims and
the row-major payload. The header for a 2-D tensor is 24 bytes, so a 1x1
f64 matrix occupies exactly 32 bytes. Round-trips are bitwise exact; f32
payloads are widened to f64 on load (lossless).

CSV: headerless, comma-separated, ``.`` decimal point, one row per line.
Floats are written as the shortest decimal string that round-trips
exactly, so ``-2.0`` serializes as ``-2``. Label files are a single
integer column.

PNG: 8-bit RGB only (no alpha), decoded to floats in [0, 1].

All container types are immutable after construction; loaders are pure
functions and safe to call concurrently on distinct files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import FormatError, ValidationError
from .util import atomic_write_bytes, format_value

FTB_MAGIC = b"FTB1"
_DTYPE_BY_CODE = {1: np.dtype("<f4"), 2: np.dtype("<f8"), 3: np.dtype("<i8")}
_CODE_BY_KIND = {"f4": 1, "f8": 2, "i8": 3}
_HEADER_FIXED = struct.Struct("<4sBBH")


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    if out is arr:
        out = arr.copy()
    out.flags.writeable = False
    return out


def _check_finite(values: np.ndarray, what: str) -> None:
    if values.dtype.kind == "f" and not np.all(np.isfinite(values)):
        bad = int(np.flatnonzero(~np.isfinite(values.ravel()))[0])
        raise ValidationError(f"{what} contains a non-finite value at flat index {bad}")


@dataclass(frozen=True)
class ImageTensor:
    """Channel-major real-valued image, shape (channels, height, width).

    norm_meta records the per-channel (mean, std) of a normalization that
    has already been applied, so it can be inverted later.
    """

    data: np.ndarray
    norm_meta: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValidationError(f"image data must be 3-D (C,H,W), got {data.ndim} dims")
        c, h, w = data.shape
        if c not in (1, 3, 4):
            raise ValidationError(f"channel count must be 1, 3 or 4, got {c}")
        if h < 8 or w < 8:
            raise ValidationError(f"image must be at least 8x8, got {h}x{w}")
        _check_finite(data, "image data")
        object.__setattr__(self, "data", _freeze(data))
        if self.norm_meta is not None:
            mean, std = self.norm_meta
            mean = _freeze(np.asarray(mean, dtype=np.float64).reshape(c))
            std = _freeze(np.asarray(std, dtype=np.float64).reshape(c))
            object.__setattr__(self, "norm_meta", (mean, std))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class FeatureMatrix:
    """N x D matrix of per-sample feature (or logit/score) rows, optionally labeled."""

    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValidationError(f"feature values must be 2-D, got {values.ndim} dims")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValidationError(f"feature matrix must be at least 1x1, got {values.shape}")
        _check_finite(values, "feature values")
        object.__setattr__(self, "values", _freeze(values))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.dtype.kind not in "iu":
                raise ValidationError("labels must be integers")
            labels = labels.astype(np.int64, copy=False).reshape(-1)
            if labels.shape[0] != values.shape[0]:
                raise ValidationError(
                    f"label count {labels.shape[0]} does not match row count {values.shape[0]}"
                )
            if labels.min() < 0:
                raise ValidationError("labels must be non-negative class ids")
            object.__setattr__(self, "labels", _freeze(labels))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def class_count(self) -> int:
        if self.labels is None:
            raise ValidationError("feature matrix has no labels")
        return int(self.labels.max()) + 1


@dataclass(frozen=True)
class LabelVector:
    """Integer class ids in [0, class_count)."""

    values: np.ndarray
    class_count: int = field(default=0)

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.dtype.kind not in "iu":
            raise ValidationError("labels must be integers")
        values = values.astype(np.int64, copy=False).reshape(-1)
        if values.size < 1:
            raise ValidationError("label vector is empty")
        if values.min() < 0:
            raise ValidationError("labels must be non-negative class ids")
        count = self.class_count or int(values.max()) + 1
        if count < 1:
            raise ValidationError("class_count must be >= 1")
        if values.max() >= count:
            raise ValidationError(
                f"label {int(values.max())} out of range for class_count {count}"
            )
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "class_count", count)

    @property
    def n(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# FTB encoding / decoding
# ---------------------------------------------------------------------------


def encode_ftb(array: np.ndarray, dtype: str | None = None) -> bytes:
    """Serialize an array to FTB bytes.

    dtype may be 'f4', 'f8' or 'i8'; by default float arrays are written
    as f8 and integer arrays as i8.
    """
    arr = np.asarray(array)
    if dtype is None:
        dtype = "i8" if arr.dtype.kind in "iu" else "f8"
    if dtype not in _CODE_BY_KIND:
        raise ValidationError(f"unsupported FTB dtype {dtype!r}")
    out = np.ascontiguousarray(arr, dtype=np.dtype("<" + dtype))
    if out.ndim < 1 or out.ndim > 3:
        raise ValidationError(f"FTB supports 1..3 dims, got {out.ndim}")
    header = _HEADER_FIXED.pack(FTB_MAGIC, _CODE_BY_KIND[dtype], out.ndim, 0)
    dims = struct.pack(f"<{out.ndim}Q", *out.shape)
    return header + dims + out.tobytes(order="C")


def decode_ftb(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one FTB record from buf at offset; returns (array, next_offset).

    Float payloads are widened to float64; i64 payloads stay int64.
    """
    if len(buf) - offset < _HEADER_FIXED.size:
        raise FormatError("truncated FTB header")
    magic, dtype_code, ndim, reserved = _HEADER_FIXED.unpack_from(buf, offset)
    if magic != FTB_MAGIC:
        raise FormatError(f"bad magic {magic!r} (expected {FTB_MAGIC!r})")
    if dtype_code not in _DTYPE_BY_CODE:
        raise FormatError(f"bad dtype code {dtype_code} (expected 1, 2 or 3)")
    if ndim < 1 or ndim > 3:
        raise FormatError(f"bad ndim {ndim} (expected 1..3)")
    if reserved != 0:
        raise FormatError(f"bad reserved field {reserved} (expected 0)")
    offset += _HEADER_FIXED.size
    if len(buf) - offset < 8 * ndim:
        raise FormatError("truncated FTB dims")
    dims = struct.unpack_from(f"<{ndim}Q", buf, offset)
    offset += 8 * ndim
    if any(d == 0 for d in dims):
        raise FormatError(f"bad dims {dims} (zero-sized dimension)")
    dtype = _DTYPE_BY_CODE[dtype_code]
    count = int(np.prod(dims, dtype=np.uint64))
    nbytes = count * dtype.itemsize
    if len(buf) - offset < nbytes:
        raise FormatError(
            f"payload size mismatch: dims {dims} declare {nbytes} bytes, "
            f"found {len(buf) - offset}"
        )
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=offset).reshape(dims)
    offset += nbytes
    if dtype.kind == "f":
        arr = arr.astype(np.float64)
    else:
        arr = arr.astype(np.int64)
    return arr, offset


def read_ftb(path: str | Path) -> np.ndarray:
    """Read a single-record FTB file; trailing bytes are a format error."""
    buf = Path(path).read_bytes()
    arr, end = decode_ftb(buf)
    if end != len(buf):
        raise FormatError(f"trailing bytes after payload: {len(buf) - end}")
    _check_finite(arr, f"payload of {path}")
    return arr


def write_ftb(path: str | Path, array: np.ndarray, dtype: str | None = None) -> None:
    atomic_write_bytes(path, encode_ftb(array, dtype))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def write_csv(path: str | Path, array: np.ndarray) -> None:
    arr = np.asarray(array)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValidationError(f"CSV writer takes 1-D or 2-D arrays, got {arr.ndim} dims")
    if arr.dtype.kind in "iu":
        lines = [",".join(str(int(v)) for v in row) for row in arr]
    else:
        _check_finite(arr, "CSV payload")
        lines = [",".join(format_value(v) for v in row) for row in arr]
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_csv(path: str | Path) -> np.ndarray:
    """Read a headerless numeric CSV into a 2-D float64 array."""
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"{path}:{line_no}: expected {len(rows[0])} columns, got {len(rows[-1])}"
                )
    if not rows:
        raise FormatError(f"{path}: empty CSV file")
    arr = np.asarray(rows, dtype=np.float64)
    _check_finite(arr, f"payload of {path}")
    return arr


# ---------------------------------------------------------------------------
# Typed loaders / savers
# ---------------------------------------------------------------------------


def load_feature_matrix(path: str | Path, fmt: str = "ftb") -> FeatureMatrix:
    if fmt == "ftb":
        arr = read_ftb(path)
        if arr.ndim != 2:
            raise FormatError(f"expected 2 dims for a feature matrix, got {arr.ndim}")
    elif fmt == "csv":
        arr = read_csv(path)
    else:
        raise ValidationError(f"unknown format {fmt!r} (expected 'ftb' or 'csv')")
    return FeatureMatrix(arr.astype(np.float64))


def load_image(path: str | Path) -> ImageTensor:
    """Load an image from FTB (3-D, channel-major) or 8-bit RGB PNG."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        return load_png(path)
    arr = read_ftb(path)
    if arr.ndim != 3:
        raise FormatError(f"expected 3 dims for an image, got {arr.ndim}")
    return ImageTensor(arr.astype(np.float64))


def load_png(path: str | Path) -> ImageTensor:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode != "RGB":
            raise FormatError(f"only 8-bit RGB PNG is supported, got mode {im.mode!r}")
        rgb = np.asarray(im, dtype=np.uint8)
    data = rgb.astype(np.float64).transpose(2, 0, 1) / 255.0
    return ImageTensor(data)


def load_labels(path: str | Path, fmt: str = "ftb") -> LabelVector:
    if fmt == "ftb":
        arr = read_ftb(path)
        if arr.ndim != 1:
            raise FormatError(f"expected 1 dim for a label vector, got {arr.ndim}")
        if arr.dtype.kind == "f":
            if not np.all(arr == np.round(arr)):
                raise ValidationError("label file contains non-integer values")
            arr = arr.astype(np.int64)
    elif fmt == "csv":
        raw = read_csv(path)
        if raw.shape[1] != 1:
            raise FormatError(f"label CSV must have a single column, got {raw.shape[1]}")
        if not np.all(raw == np.round(raw)):
            raise ValidationError("label file contains non-integer values")
        arr = raw[:, 0].astype(np.int64)
    else:
        raise ValidationError(f"unknown format {fmt!r} (expected 'ftb' or 'csv')")
    return LabelVector(arr)


def load_scores(path: str | Path) -> np.ndarray:
    """Load a score vector from a 1-D FTB file or a single-column CSV."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        arr = read_csv(path)
        if arr.shape[1] != 1:
            raise FormatError(f"score CSV must have a single column, got {arr.shape[1]}")
        return arr[:, 0]
    arr = read_ftb(path)
    if arr.ndim != 1:
        raise FormatError(f"expected 1 dim for a score vector, got {arr.ndim}")
    return arr.astype(np.float64)


def load_tensor(path: str | Path, fmt: str = "ftb") -> ImageTensor | FeatureMatrix:
    """Generic loader: 2-D records become FeatureMatrix, 3-D become ImageTensor."""
    if fmt == "csv":
        return FeatureMatrix(read_csv(path))
    if fmt != "ftb":
        raise ValidationError(f"unknown format {fmt!r} (expected 'ftb' or 'csv')")
    arr = read_ftb(path)
    if arr.ndim == 2:
        return FeatureMatrix(arr.astype(np.float64))
    if arr.ndim == 3:
        return ImageTensor(arr.astype(np.float64))
    raise FormatError(f"expected 2 or 3 dims, got {arr.ndim}")


def save_tensor(
    tensor: ImageTensor | FeatureMatrix | np.ndarray,
    path: str | Path,
    fmt: str = "ftb",
    dtype: str | None = None,
) -> None:
    if isinstance(tensor, ImageTensor):
        arr = tensor.data
    elif isinstance(tensor, FeatureMatrix):
        arr = tensor.values
    else:
        arr = np.asarray(tensor)
    if fmt == "ftb":
        write_ftb(path, arr, dtype)
    elif fmt == "csv":
        write_csv(path, arr)
    else:
        raise ValidationError(f"unknown format {fmt!r} (expected 'ftb' or 'csv')")


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


def normalize_image(
    img: ImageTensor, mean: Sequence[float], std: Sequence[float]
) -> ImageTensor:
    """Per-channel affine normalization out[c] = (in[c] - mean[c]) / std[c]."""
    mean_arr = np.asarray(mean, dtype=np.float64).reshape(-1)
    std_arr = np.asarray(std, dtype=np.float64).reshape(-1)
    if mean_arr.shape[0] != img.channels or std_arr.shape[0] != img.channels:
        raise ValidationError(
            f"mean/std must have {img.channels} entries, "
            f"got {mean_arr.shape[0]}/{std_arr.shape[0]}"
        )
    if np.any(std_arr <= 0):
        raise ValidationError("std must be strictly positive per channel")
    out = (img.data - mean_arr[:, None, None]) / std_arr[:, None, None]
    return ImageTensor(out, norm_meta=(mean_arr, std_arr))


def denormalize_image(img: ImageTensor) -> ImageTensor:
    """Invert normalize_image using the recorded norm_meta."""
    if img.norm_meta is None:
        raise ValidationError("image has no normalization metadata to invert")
    mean, std = img.norm_meta
    out = img.data * std[:, None, None] + mean[:, None, None]
    return ImageTensor(out)
