"""Tests for dataset loaders, writers, resizing, and subset sampling."""

import os
import struct

import numpy as np
import pytest

from qcnnlab.datasets import (
    BadMagic,
    CountMismatch,
    Dataset,
    DatasetError,
    ImageSample,
    InsufficientSamples,
    MalformedRow,
    NonIntegerFactor,
    TruncatedFile,
    UnknownClassPrefix,
    UnsupportedPgm,
    binary_subset,
    load_digits_csv,
    load_idx,
    load_pgm,
    load_pgm_dir,
    resize_area,
    write_digits_csv,
    write_pgm,
)

DIGITS_CSV = os.path.join(os.path.dirname(__file__), "..", "data", "digits.csv")


# ---------------------------------------------------------------------------
# digits CSV
# ---------------------------------------------------------------------------

def _write_rows(path, rows):
    with open(path, "w") as fh:
        fh.write("\n".join(rows) + "\n")


def test_digits_row_parses_and_normalizes(tmp_path):
    path = tmp_path / "one.csv"
    _write_rows(path, ["3," + ",".join(["16"] + ["0"] * 63)])
    ds = load_digits_csv(path)
    assert len(ds) == 1
    assert ds.samples[0].label == 3
    assert ds.samples[0].pixels.shape == (8, 8)
    assert ds.samples[0].pixels[0, 0] == 1.0
    assert ds.samples[0].pixels[0, 1] == 0.0


def test_digits_all_zero_row_loads():
    """All-zero images are valid at load time (embedding rejects them later)."""
    ds_rows = ["0," + ",".join(["0"] * 64)]
    import tempfile
    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "z.csv")
        _write_rows(path, ds_rows)
        ds = load_digits_csv(path)
    assert np.all(ds.samples[0].pixels == 0.0)


def test_digits_rejects_wrong_field_count(tmp_path):
    path = tmp_path / "short.csv"
    _write_rows(path, ["1,2,3"])
    with pytest.raises(MalformedRow, match=":1:"):
        load_digits_csv(path)


def test_digits_rejects_out_of_range_pixel(tmp_path):
    path = tmp_path / "hot.csv"
    _write_rows(path, ["0," + ",".join(["17"] + ["0"] * 63)])
    with pytest.raises(MalformedRow, match="17"):
        load_digits_csv(path)


def test_digits_rejects_bad_label_with_line_number(tmp_path):
    path = tmp_path / "lab.csv"
    ok = "1," + ",".join(["0"] * 64)
    bad = "12," + ",".join(["0"] * 64)
    _write_rows(path, [ok, bad])
    with pytest.raises(MalformedRow, match=":2:"):
        load_digits_csv(path)


def test_digits_rejects_non_integer(tmp_path):
    path = tmp_path / "float.csv"
    _write_rows(path, ["0," + ",".join(["1.5"] + ["0"] * 63)])
    with pytest.raises(MalformedRow):
        load_digits_csv(path)


def test_bundled_digits_file_loads():
    ds = load_digits_csv(DIGITS_CSV)
    assert len(ds) == 1797
    labels = ds.labels()
    assert set(labels.tolist()) == set(range(10))
    for s in ds.samples[:50]:
        assert s.pixels.shape == (8, 8)
        assert s.pixels.min() >= 0.0 and s.pixels.max() <= 1.0


def test_digits_csv_round_trip(tmp_path):
    ds = load_digits_csv(DIGITS_CSV)
    subset = Dataset(ds.samples[:20], ds.class_names)
    out = tmp_path / "echo.csv"
    write_digits_csv(out, subset)
    again = load_digits_csv(out)
    assert len(again) == 20
    for a, b in zip(subset.samples, again.samples):
        assert a.label == b.label
        assert np.array_equal(a.pixels, b.pixels)


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _idx_pair(tmp_path, images, labels, image_magic=0x803, label_magic=0x801,
              label_count=None):
    images = np.asarray(images, dtype=np.uint8)
    n, h, w = images.shape
    ip = tmp_path / "imgs.idx"
    lp = tmp_path / "labs.idx"
    ip.write_bytes(struct.pack(">IIII", image_magic, n, h, w) + images.tobytes())
    labels = np.asarray(labels, dtype=np.uint8)
    lp.write_bytes(struct.pack(">II", label_magic,
                               len(labels) if label_count is None else label_count)
                   + labels.tobytes())
    return ip, lp


def test_idx_minimal_pair(tmp_path):
    ip, lp = _idx_pair(tmp_path, [[[0, 255], [0, 255]]], [7])
    ds = load_idx(ip, lp)
    assert len(ds) == 1
    assert ds.samples[0].label == 7
    assert np.array_equal(ds.samples[0].pixels, [[0.0, 1.0], [0.0, 1.0]])


def test_idx_label_magic_on_image_file(tmp_path):
    ip, lp = _idx_pair(tmp_path, [[[0]]], [0], image_magic=0x801)
    with pytest.raises(BadMagic):
        load_idx(ip, lp)


def test_idx_bad_label_magic(tmp_path):
    ip, lp = _idx_pair(tmp_path, [[[0]]], [0], label_magic=0x803)
    with pytest.raises(BadMagic):
        load_idx(ip, lp)


def test_idx_count_mismatch(tmp_path):
    ip, lp = _idx_pair(tmp_path, [[[0]]], [0, 1], label_count=2)
    with pytest.raises(CountMismatch):
        load_idx(ip, lp)


def test_idx_truncated_pixels(tmp_path):
    ip = tmp_path / "imgs.idx"
    lp = tmp_path / "labs.idx"
    ip.write_bytes(struct.pack(">IIII", 0x803, 2, 2, 2) + b"\x00" * 5)
    lp.write_bytes(struct.pack(">II", 0x801, 2) + b"\x00\x01")
    with pytest.raises(TruncatedFile):
        load_idx(ip, lp)


def test_fashion_mnist_train_file_loads_if_present():
    """Full 60000-image check; skipped when the public files are not on disk."""
    base = os.path.join(os.path.dirname(__file__), "..", "data", "fashion")
    ip = os.path.join(base, "train-images-idx3-ubyte")
    lp = os.path.join(base, "train-labels-idx1-ubyte")
    if not (os.path.exists(ip) and os.path.exists(lp)):
        pytest.skip("Fashion-MNIST files not present under data/fashion/")
    ds = load_idx(ip, lp)
    assert len(ds) == 60000
    assert ds.samples[0].pixels.shape == (28, 28)


# ---------------------------------------------------------------------------
# PGM
# ---------------------------------------------------------------------------

def test_pgm_minimal_file(tmp_path):
    path = tmp_path / "cat.0.pgm"
    path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 128, 255, 64]))
    img = load_pgm(path)
    assert img.shape == (2, 2)
    assert np.allclose(img, np.array([[0, 128], [255, 64]]) / 255.0)


def test_pgm_header_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n255\n" + bytes([10, 20]))
    img = load_pgm(path)
    assert np.allclose(img, [[10 / 255, 20 / 255]])


def test_pgm_rejects_ascii_p2(tmp_path):
    path = tmp_path / "a.pgm"
    path.write_bytes(b"P2\n2 2\n255\n0 1 2 3\n")
    with pytest.raises(UnsupportedPgm, match="P2"):
        load_pgm(path)


def test_pgm_rejects_wide_maxval(tmp_path):
    path = tmp_path / "wide.pgm"
    path.write_bytes(b"P5\n1 1\n65535\n\x00\x00")
    with pytest.raises(UnsupportedPgm, match="65535"):
        load_pgm(path)


def test_pgm_rejects_truncated_raster(tmp_path):
    path = tmp_path / "t.pgm"
    path.write_bytes(b"P5\n2 2\n255\n\x00\x01")
    with pytest.raises(TruncatedFile):
        load_pgm(path)


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    img = np.rint(rng.random((5, 7)) * 255) / 255.0
    path = tmp_path / "rt.pgm"
    write_pgm(path, img)
    assert np.array_equal(load_pgm(path), img)


def test_pgm_dir_classes_from_prefix(tmp_path):
    write_pgm(tmp_path / "cat.001.pgm", np.zeros((2, 2)))
    write_pgm(tmp_path / "dog.001.pgm", np.ones((2, 2)))
    write_pgm(tmp_path / "cat.002.pgm", np.full((2, 2), 0.5))
    ds = load_pgm_dir(tmp_path, {"cat": 0, "dog": 1})
    assert len(ds) == 3
    assert [s.label for s in ds.samples] == [0, 0, 1]  # sorted filename order
    assert ds.class_names == ("cat", "dog")


def test_pgm_dir_unknown_prefix(tmp_path):
    write_pgm(tmp_path / "bird.pgm", np.zeros((2, 2)))
    with pytest.raises(UnknownClassPrefix, match="bird"):
        load_pgm_dir(tmp_path, {"cat": 0, "dog": 1})


# ---------------------------------------------------------------------------
# resize and subset
# ---------------------------------------------------------------------------

def test_resize_identity():
    img = np.random.default_rng(1).random((8, 8))
    assert np.array_equal(resize_area(img, 8, 8), img)


def test_resize_constant_stays_constant():
    img = np.full((32, 32), 0.7)
    out = resize_area(img, 8, 8)
    assert np.allclose(out, 0.7)
    assert out.shape == (8, 8)


def test_resize_block_mean():
    img = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert resize_area(img, 1, 1)[0, 0] == pytest.approx(0.5)


def test_resize_512_to_32():
    img = np.random.default_rng(2).random((512, 512))
    out = resize_area(img, 32, 32)
    assert out.shape == (32, 32)
    assert out[0, 0] == pytest.approx(img[:16, :16].mean())


def test_resize_rejects_non_integer_factor():
    with pytest.raises(NonIntegerFactor):
        resize_area(np.zeros((10, 10)), 4, 4)


def test_binary_subset_counts_and_labels():
    ds = load_digits_csv(DIGITS_CSV)
    train, test = binary_subset(ds, 0, 1, n_per_class=50, n_test=100, seed=7)
    assert len(train) == 100 and len(test) == 100
    assert sorted(np.bincount(train.labels()).tolist()) == [50, 50]
    assert sorted(np.bincount(test.labels()).tolist()) == [50, 50]
    assert set(train.labels().tolist()) == {0, 1}


def test_binary_subset_is_seeded():
    ds = load_digits_csv(DIGITS_CSV)
    t1, _ = binary_subset(ds, 0, 9, 10, 20, seed=5)
    t2, _ = binary_subset(ds, 0, 9, 10, 20, seed=5)
    for a, b in zip(t1.samples, t2.samples):
        assert a.label == b.label and np.array_equal(a.pixels, b.pixels)
    t3, _ = binary_subset(ds, 0, 9, 10, 20, seed=6)
    assert any(not np.array_equal(a.pixels, b.pixels)
               for a, b in zip(t1.samples, t3.samples))


def test_binary_subset_train_test_disjoint():
    ds = load_digits_csv(DIGITS_CSV)
    train, test = binary_subset(ds, 3, 8, 30, 40, seed=11)
    train_keys = {s.pixels.tobytes() for s in train.samples}
    test_keys = {s.pixels.tobytes() for s in test.samples}
    # distinct scans of the same glyph can collide pixelwise, but a full
    # overlap would mean the split reused images; require no intersection
    assert not (train_keys & test_keys)


def test_binary_subset_insufficient_samples():
    ds = load_digits_csv(DIGITS_CSV)
    with pytest.raises(InsufficientSamples):
        binary_subset(ds, 0, 1, n_per_class=170, n_test=100, seed=0)


def test_binary_subset_rejects_odd_test_count():
    ds = load_digits_csv(DIGITS_CSV)
    with pytest.raises(DatasetError):
        binary_subset(ds, 0, 1, 5, 9, seed=0)


def test_binary_subset_five_per_class():
    ds = load_digits_csv(DIGITS_CSV)
    train, test = binary_subset(ds, 0, 1, n_per_class=5, n_test=100, seed=1)
    assert len(train) == 10
    assert sorted(np.bincount(train.labels()).tolist()) == [5, 5]
