"""Dataset loading, normalization, subsetting, and bit-exact file formats.

Three sources are supported: 8x8 hand-written digits re-hosted as a plain
CSV (one row per image: label then 64 integers 0..16), Fashion-MNIST in its
native big-endian IDX container, and grayscale photos as binary PGM ("P5")
files whose class is taken from the filename prefix.  All loaders produce
pixels in [0, 1] and refuse malformed records rather than skipping them.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np


class DatasetError(ValueError):
    pass


class MalformedRow(DatasetError):
    pass


class BadMagic(DatasetError):
    pass


class CountMismatch(DatasetError):
    pass


class TruncatedFile(DatasetError):
    pass


class UnsupportedPgm(DatasetError):
    pass


class UnknownClassPrefix(DatasetError):
    pass


class NonIntegerFactor(DatasetError):
    pass


class InsufficientSamples(DatasetError):
    pass


@dataclass(frozen=True)
class ImageSample:
    """One grayscale image (H x W floats in [0,1]) with an integer class id."""

    pixels: np.ndarray
    label: int


@dataclass(frozen=True)
class Dataset:
    samples: tuple[ImageSample, ...]
    class_names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.samples)

    def images(self) -> list[np.ndarray]:
        return [s.pixels for s in self.samples]

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


# ---------------------------------------------------------------------------
# digits CSV
# ---------------------------------------------------------------------------

DIGITS_FIELDS = 65  # label + 64 pixels
DIGITS_MAX = 16


def load_digits_csv(path: str | os.PathLike) -> Dataset:
    """Read 8x8 digit images: rows of `label,p0,...,p63` with pixels 0..16."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != DIGITS_FIELDS:
                raise MalformedRow(
                    f"{path}:{lineno}: expected {DIGITS_FIELDS} fields, got {len(fields)}")
            try:
                values = [int(f) for f in fields]
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: non-integer field ({exc})") from exc
            label, pixels = values[0], values[1:]
            if not 0 <= label <= 9:
                raise MalformedRow(f"{path}:{lineno}: label {label} outside 0..9")
            bad = [v for v in pixels if not 0 <= v <= DIGITS_MAX]
            if bad:
                raise MalformedRow(
                    f"{path}:{lineno}: pixel value {bad[0]} outside 0..{DIGITS_MAX}")
            img = np.array(pixels, dtype=np.float64).reshape(8, 8) / DIGITS_MAX
            samples.append(ImageSample(img, label))
    return Dataset(tuple(samples), tuple(str(d) for d in range(10)))


def write_digits_csv(path: str | os.PathLike, ds: Dataset) -> None:
    """Inverse of load_digits_csv: quantizes pixels back to integers 0..16."""
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds.samples:
            ints = np.rint(np.asarray(s.pixels) * DIGITS_MAX).astype(int).reshape(-1)
            fh.write(",".join([str(int(s.label))] + [str(v) for v in ints]) + "\n")


# ---------------------------------------------------------------------------
# IDX (Fashion-MNIST container)
# ---------------------------------------------------------------------------

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


def _read_exact(fh, n: int, path, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise TruncatedFile(f"{path}: wanted {n} bytes for {what}, got {len(buf)}")
    return buf


def load_idx(images_path: str | os.PathLike, labels_path: str | os.PathLike) -> Dataset:
    """Read an IDX image/label file pair (big-endian, magics 2051/2049)."""
    with open(images_path, "rb") as fh:
        magic, count, rows, cols = np.frombuffer(
            _read_exact(fh, 16, images_path, "image header"), dtype=">u4")
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagic(f"{images_path}: magic {magic:#010x}, wanted {IDX_IMAGE_MAGIC:#010x}")
        raw = _read_exact(fh, int(count) * int(rows) * int(cols), images_path, "pixel data")
    images = np.frombuffer(raw, dtype=np.uint8).reshape(int(count), int(rows), int(cols))

    with open(labels_path, "rb") as fh:
        magic, n_labels = np.frombuffer(
            _read_exact(fh, 8, labels_path, "label header"), dtype=">u4")
        if magic != IDX_LABEL_MAGIC:
            raise BadMagic(f"{labels_path}: magic {magic:#010x}, wanted {IDX_LABEL_MAGIC:#010x}")
        labels = np.frombuffer(_read_exact(fh, int(n_labels), labels_path, "labels"),
                               dtype=np.uint8)

    if int(count) != int(n_labels):
        raise CountMismatch(f"{count} images vs {n_labels} labels")

    samples = tuple(ImageSample(img.astype(np.float64) / 255.0, int(lab))
                    for img, lab in zip(images, labels))
    n_classes = int(labels.max()) + 1 if len(labels) else 0
    return Dataset(samples, tuple(str(c) for c in range(n_classes)))


# ---------------------------------------------------------------------------
# binary PGM
# ---------------------------------------------------------------------------

def _parse_pgm_header(data: bytes, path) -> tuple[int, int, int]:
    """Return (width, height, data offset); only 8-bit binary P5 accepted."""
    if data[:2] == b"P2":
        raise UnsupportedPgm(f"{path}: ASCII 'P2' files not supported, convert to binary 'P5'")
    if data[:2] != b"P5":
        raise UnsupportedPgm(f"{path}: not a PGM file (no 'P5' signature)")
    # header = magic, width, height, maxval as whitespace-separated tokens;
    # '#' starts a comment running to end of line
    tokens, pos = [], 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise UnsupportedPgm(f"{path}: truncated header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace byte after maxval, then raster data
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise UnsupportedPgm(f"{path}: non-numeric header fields {tokens}") from None
    if maxval != 255:
        raise UnsupportedPgm(f"{path}: maxval {maxval}, only 255 supported")
    return width, height, pos


def load_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read one binary PGM into an H x W float array in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    width, height, offset = _parse_pgm_header(data, path)
    need = width * height
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise TruncatedFile(f"{path}: wanted {need} raster bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width).astype(np.float64) / 255.0


def write_pgm(path: str | os.PathLike, img: np.ndarray) -> None:
    """Write a [0,1] float image as binary PGM (quantized to 8 bits)."""
    img = np.asarray(img)
    h, w = img.shape
    raster = np.rint(img * 255.0).astype(np.uint8).tobytes()
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(raster)


def load_pgm_dir(directory: str | os.PathLike, class_map: dict[str, int]) -> Dataset:
    """Load every .pgm in a directory; class comes from the filename prefix."""
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".pgm"))
    if not names:
        raise DatasetError(f"{directory}: no .pgm files found")
    samples = []
    for name in names:
        prefixes = [p for p in class_map if name.startswith(p)]
        if not prefixes:
            raise UnknownClassPrefix(
                f"{name}: no prefix from {sorted(class_map)} matches")
        label = class_map[max(prefixes, key=len)]
        samples.append(ImageSample(load_pgm(os.path.join(directory, name)), label))
    names_by_id = sorted(class_map, key=class_map.get)
    return Dataset(tuple(samples), tuple(names_by_id))


# ---------------------------------------------------------------------------
# resizing and subsetting
# ---------------------------------------------------------------------------

def resize_area(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Downscale by integer block averaging (each output pixel = block mean)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if out_h <= 0 or out_w <= 0 or h % out_h or w % out_w:
        raise NonIntegerFactor(f"cannot block-average {h}x{w} to {out_h}x{out_w}")
    fh, fw = h // out_h, w // out_w
    return img.reshape(out_h, fh, out_w, fw).mean(axis=(1, 3))


def binary_subset(ds: Dataset, class_a: int, class_b: int, n_per_class: int,
                  n_test: int, seed: int) -> tuple[Dataset, Dataset]:
    """Draw a balanced two-class train/test split with labels remapped a->0, b->1.

    Sampling is without replacement from a seeded shuffle, so the same seed
    selects the same images and train/test never overlap.
    """
    if n_test % 2:
        raise DatasetError(f"n_test {n_test} must be even for a balanced test set")
    if class_a == class_b:
        raise DatasetError("class_a and class_b must differ")
    rng = np.random.default_rng(seed)
    n_half = n_test // 2
    picked: dict[int, list[ImageSample]] = {}
    for cls in (class_a, class_b):
        idx = [i for i, s in enumerate(ds.samples) if s.label == cls]
        need = n_per_class + n_half
        if len(idx) < need:
            raise InsufficientSamples(
                f"class {cls}: need {need} samples, dataset has {len(idx)}")
        order = rng.permutation(len(idx))
        picked[cls] = [ds.samples[idx[j]] for j in order[:need]]

    def relabel(sample: ImageSample) -> ImageSample:
        return ImageSample(sample.pixels, 0 if sample.label == class_a else 1)

    train = [relabel(s) for cls in (class_a, class_b) for s in picked[cls][:n_per_class]]
    test = [relabel(s) for cls in (class_a, class_b) for s in picked[cls][n_per_class:]]
    names = (ds.class_names[class_a] if class_a < len(ds.class_names) else str(class_a),
             ds.class_names[class_b] if class_b < len(ds.class_names) else str(class_b))
    return Dataset(tuple(train), names), Dataset(tuple(test), names)
