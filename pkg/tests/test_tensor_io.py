"""Tensor I/O: FTB round trips, CSV conventions, validation errors."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eihf import (
    FeatureMatrix,
    FormatError,
    ImageTensor,
    ValidationError,
    denormalize_image,
    load_feature_matrix,
    load_image,
    load_labels,
    load_scores,
    load_tensor,
    normalize_image,
    read_csv,
    read_ftb,
    save_tensor,
    write_csv,
    write_ftb,
)
from eihf.tensor_io import FTB_MAGIC, encode_ftb


def test_ftb_round_trip_small_matrix(tmp_path):
    path = tmp_path / "m.ftb"
    arr = np.arange(1.0, 7.0).reshape(2, 3)
    write_ftb(path, arr)
    back = read_ftb(path)
    assert back.shape == (2, 3)
    np.testing.assert_array_equal(back, arr)


def test_ftb_round_trip_random_matrix_bitwise(tmp_path):
    rng = np.random.default_rng(42)
    arr = rng.standard_normal((5, 4))
    path = tmp_path / "r.ftb"
    write_ftb(path, arr)
    assert np.array_equal(read_ftb(path), arr)  # bitwise for f64


@pytest.mark.parametrize("dtype", ["f4", "f8", "i8"])
def test_ftb_round_trip_all_dtypes(tmp_path, dtype):
    rng = np.random.default_rng(7)
    if dtype == "i8":
        arr = rng.integers(-(2**40), 2**40, size=(3, 5))
    else:
        arr = rng.standard_normal((3, 5)).astype("<" + dtype)
    path = tmp_path / "d.ftb"
    write_ftb(path, arr, dtype=dtype)
    back = read_ftb(path)
    # f4 widens losslessly to f8; i8 stays integral
    np.testing.assert_array_equal(back, arr.astype(back.dtype))


def test_ftb_f32_file_bytes_stable_through_round_trip(tmp_path):
    # f32 payload: load widens losslessly, re-encoding as f32 restores the bytes
    rng = np.random.default_rng(21)
    arr = rng.standard_normal((4, 3)).astype(np.float32)
    path = tmp_path / "f32.ftb"
    write_ftb(path, arr, dtype="f4")
    original = path.read_bytes()
    loaded = read_ftb(path)
    assert loaded.dtype == np.float64
    write_ftb(path, loaded, dtype="f4")
    assert path.read_bytes() == original


def test_ftb_1x1_f64_file_is_32_bytes(tmp_path):
    path = tmp_path / "one.ftb"
    write_ftb(path, np.zeros((1, 1)))
    assert path.stat().st_size == 24 + 8  # 24-byte 2-D header + one f64


def test_ftb_header_layout(tmp_path):
    payload = encode_ftb(np.array([[1.0, 2.0]]))
    magic, dtype, ndim, reserved = struct.unpack_from("<4sBBH", payload)
    assert magic == FTB_MAGIC and dtype == 2 and ndim == 2 and reserved == 0
    dims = struct.unpack_from("<2Q", payload, 8)
    assert dims == (1, 2)


def test_ftb_bad_magic(tmp_path):
    path = tmp_path / "bad.ftb"
    path.write_bytes(b"NOPE" + encode_ftb(np.zeros((2, 2)))[4:])
    with pytest.raises(FormatError, match="magic"):
        read_ftb(path)


def test_ftb_bad_dtype_code(tmp_path):
    good = bytearray(encode_ftb(np.zeros((2, 2))))
    good[4] = 9
    path = tmp_path / "bad.ftb"
    path.write_bytes(bytes(good))
    with pytest.raises(FormatError, match="dtype"):
        read_ftb(path)


def test_ftb_truncated_payload(tmp_path):
    path = tmp_path / "short.ftb"
    path.write_bytes(encode_ftb(np.zeros((2, 2)))[:-4])
    with pytest.raises(FormatError, match="payload size mismatch"):
        read_ftb(path)


def test_ftb_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "long.ftb"
    path.write_bytes(encode_ftb(np.zeros((2, 2))) + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        read_ftb(path)


def test_feature_matrix_load_rejects_3d(tmp_path):
    path = tmp_path / "img.ftb"
    write_ftb(path, np.zeros((3, 8, 8)))
    with pytest.raises(FormatError, match="expected 2 dims"):
        load_feature_matrix(path)


def test_ftb_nonfinite_payload_reports_index(tmp_path):
    arr = np.zeros((2, 3))
    arr[1, 2] = np.inf
    path = tmp_path / "inf.ftb"
    path.write_bytes(encode_ftb(arr))
    with pytest.raises(ValidationError, match="index 5"):
        read_ftb(path)


def test_save_tensor_empty_path_is_io_error():
    with pytest.raises(OSError):
        save_tensor(np.zeros((2, 2)), "")


def test_load_tensor_dispatch(tmp_path):
    write_ftb(tmp_path / "m.ftb", np.zeros((4, 2)))
    write_ftb(tmp_path / "i.ftb", np.zeros((3, 8, 8)))
    assert isinstance(load_tensor(tmp_path / "m.ftb"), FeatureMatrix)
    assert isinstance(load_tensor(tmp_path / "i.ftb"), ImageTensor)
    write_ftb(tmp_path / "v.ftb", np.zeros(4))
    with pytest.raises(FormatError, match="expected 2 or 3 dims"):
        load_tensor(tmp_path / "v.ftb")


def test_csv_exact_line(tmp_path):
    path = tmp_path / "row.csv"
    write_csv(path, np.array([[1.5, -2.0]]))
    assert path.read_text() == "1.5,-2\n"


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    arr = rng.standard_normal((6, 3))
    path = tmp_path / "t.csv"
    write_csv(path, arr)
    np.testing.assert_array_equal(read_csv(path), arr)


def test_csv_ragged_rows_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3\n")
    with pytest.raises(FormatError, match="columns"):
        read_csv(path)


def test_labels_round_trip(tmp_path):
    labels = np.array([0, 2, 1, 2], dtype=np.int64)
    path = tmp_path / "l.ftb"
    write_ftb(path, labels)
    vec = load_labels(path)
    np.testing.assert_array_equal(vec.values, labels)
    assert vec.class_count == 3


def test_scores_round_trip_both_formats(tmp_path):
    scores = np.array([0.5, -1.25, 3.0])
    write_ftb(tmp_path / "s.ftb", scores)
    write_csv(tmp_path / "s.csv", scores)
    np.testing.assert_array_equal(load_scores(tmp_path / "s.ftb"), scores)
    np.testing.assert_array_equal(load_scores(tmp_path / "s.csv"), scores)


def test_png_round_trip(tmp_path):
    from PIL import Image

    rgb = np.random.default_rng(0).integers(0, 256, size=(8, 10, 3), dtype=np.uint8)
    Image.fromarray(rgb, "RGB").save(tmp_path / "img.png")
    img = load_image(tmp_path / "img.png")
    assert img.channels == 3 and (img.height, img.width) == (8, 10)
    np.testing.assert_allclose(img.data, rgb.transpose(2, 0, 1) / 255.0)


def test_png_rejects_alpha(tmp_path):
    from PIL import Image

    rgba = np.zeros((8, 8, 4), dtype=np.uint8)
    Image.fromarray(rgba, "RGBA").save(tmp_path / "a.png")
    with pytest.raises(FormatError, match="RGB"):
        load_image(tmp_path / "a.png")


# -- domain type invariants --------------------------------------------------


def test_image_tensor_invariants():
    with pytest.raises(ValidationError, match="channel count"):
        ImageTensor(np.zeros((2, 8, 8)))
    with pytest.raises(ValidationError, match="8x8"):
        ImageTensor(np.zeros((3, 4, 8)))
    bad = np.zeros((3, 8, 8))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValidationError, match="non-finite"):
        ImageTensor(bad)


def test_feature_matrix_invariants():
    with pytest.raises(ValidationError):
        FeatureMatrix(np.zeros((0, 3)))
    with pytest.raises(ValidationError, match="label count"):
        FeatureMatrix(np.zeros((3, 2)), np.array([0, 1]))
    fm = FeatureMatrix(np.zeros((3, 2)), np.array([0, 1, 1]))
    assert fm.class_count == 2
    assert not fm.values.flags.writeable  # immutable after construction


# -- normalization ------------------------------------------------------------


def test_normalize_constant_image():
    img = ImageTensor(np.full((3, 8, 8), 0.5))
    out = normalize_image(img, mean=[0.5] * 3, std=[1.0] * 3)
    assert np.all(out.data == 0.0)


def test_normalize_scale():
    img = ImageTensor(np.ones((3, 8, 8)))
    out = normalize_image(img, mean=[0.0] * 3, std=[2.0] * 3)
    assert np.all(out.data == 0.5)


def test_normalize_denormalize_inverse():
    rng = np.random.default_rng(5)
    img = ImageTensor(rng.standard_normal((3, 8, 8)))
    normed = normalize_image(img, mean=[0.1, -0.2, 0.3], std=[0.5, 2.0, 1.5])
    back = denormalize_image(normed)
    np.testing.assert_allclose(back.data, img.data, atol=1e-12)


def test_normalize_rejects_nonpositive_std():
    img = ImageTensor(np.zeros((3, 8, 8)))
    with pytest.raises(ValidationError, match="positive"):
        normalize_image(img, mean=[0.0] * 3, std=[1.0, 0.0, 1.0])


@settings(max_examples=25, deadline=None)
@given(
    a=st.floats(0.1, 10.0),
    b=st.floats(-5.0, 5.0),
    mean=st.floats(-2.0, 2.0),
    std=st.floats(0.1, 5.0),
)
def test_normalize_is_affine_per_channel(a, b, mean, std):
    rng = np.random.default_rng(11)
    x = rng.standard_normal((3, 8, 8))
    lhs = normalize_image(ImageTensor(a * x + b), [mean] * 3, [std] * 3).data
    rhs = (a / std) * x + (b - mean) / std
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    values=st.lists(
        st.floats(allow_nan=False, allow_infinity=False, width=64),
        min_size=1,
        max_size=24,
    )
)
def test_ftb_round_trip_is_bitwise_for_arbitrary_finite_floats(tmp_path_factory, values):
    # includes subnormals, signed zeros, and extreme magnitudes
    path = tmp_path_factory.mktemp("ftb") / "h.ftb"
    arr = np.asarray(values, dtype=np.float64).reshape(1, -1)
    write_ftb(path, arr)
    back = read_ftb(path)
    assert arr.tobytes() == back.tobytes()
