"""Datasets: a deterministic synthetic street-sign-like generator, a CSV+PNG
directory loader, and stratified subsampling.

The synthetic set renders one procedural glyph per class (shape kind cycles
circle/triangle/octagon, fill and background hues rotate with the class, a
small numeral bitmap is stamped on the glyph) plus per-sample jitter and
Gaussian pixel noise. Train and test splits use independent random streams,
so their images never collide byte-for-byte.
"""

from __future__ import annotations

import colorsys
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from PIL import Image, UnidentifiedImageError


class DataError(ValueError):
    """Bad dataset input: missing files, unreadable images, out-of-range labels."""


@dataclass(eq=False)
class LabeledDataset:
    images: np.ndarray  # (N, H, W, C) float64 in [0, 1]
    labels: np.ndarray  # (N,) int64
    poisoned: np.ndarray  # (N,) bool
    class_count: int

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.poisoned = np.asarray(self.poisoned, dtype=bool)
        if self.images.ndim != 4:
            raise DataError(f"images must be (N, H, W, C), got shape {self.images.shape}")
        n = len(self.images)
        if len(self.labels) != n or len(self.poisoned) != n:
            raise DataError("images, labels, and poisoned flags must have equal length")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DataError("label out of range")
        if n and (self.images.min() < 0.0 or self.images.max() > 1.0):
            raise DataError("image values must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def take(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices)
        return LabeledDataset(
            images=self.images[indices].copy(),
            labels=self.labels[indices].copy(),
            poisoned=self.poisoned[indices].copy(),
            class_count=self.class_count,
        )

    def copy(self) -> "LabeledDataset":
        return LabeledDataset(
            images=self.images.copy(),
            labels=self.labels.copy(),
            poisoned=self.poisoned.copy(),
            class_count=self.class_count,
        )


def datasets_equal(a: LabeledDataset, b: LabeledDataset) -> bool:
    return (
        a.class_count == b.class_count
        and np.array_equal(a.images, b.images)
        and np.array_equal(a.labels, b.labels)
        and np.array_equal(a.poisoned, b.poisoned)
    )


@dataclass(frozen=True)
class SyntheticSpec:
    class_count: int = 10
    per_class_train: int = 60
    per_class_test: int = 20
    image_size: tuple[int, int, int] = (30, 30, 3)
    noise_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 2 or self.per_class_train < 1 or self.per_class_test < 1:
            raise DataError("synthetic spec counts must be positive (class_count >= 2)")
        if self.noise_std < 0:
            raise DataError("noise_std must be non-negative")
        if len(self.image_size) != 3 or min(self.image_size) < 1:
            raise DataError(f"bad image_size {self.image_size}")


_SHAPE_CYCLE = ("circle", "triangle", "octagon")

_DIGIT_FONT = {
    "0": ("01110", "10001", "10011", "10101", "11001", "10001", "01110"),
    "1": ("00100", "01100", "00100", "00100", "00100", "00100", "01110"),
    "2": ("01110", "10001", "00001", "00010", "00100", "01000", "11111"),
    "3": ("11111", "00010", "00100", "00010", "00001", "10001", "01110"),
    "4": ("00010", "00110", "01010", "10010", "11111", "00010", "00010"),
    "5": ("11111", "10000", "11110", "00001", "00001", "10001", "01110"),
    "6": ("00110", "01000", "10000", "11110", "10001", "10001", "01110"),
    "7": ("11111", "00001", "00010", "00100", "01000", "01000", "01000"),
    "8": ("01110", "10001", "10001", "01110", "10001", "10001", "01110"),
    "9": ("01110", "10001", "10001", "01111", "00001", "00010", "01100"),
}


def _class_palette(c: int, class_count: int):
    bg = colorsys.hsv_to_rgb(c / class_count, 0.55, 0.38)
    fg = colorsys.hsv_to_rgb((c / class_count + 0.45) % 1.0, 0.85, 0.95)
    return np.array(bg), np.array(fg)


def _glyph_mask(kind: str, h: int, w: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    if kind == "circle":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "octagon":
        u, v = np.abs(yy - cy), np.abs(xx - cx)
        return (np.maximum(u, v) <= r) & (u + v <= 1.35 * r)
    # upward-pointing triangle: apex at cy - r, base at cy + r
    return (yy >= cy - r) & (yy <= cy + r) & (np.abs(xx - cx) <= (yy - (cy - r)) * 0.6)


def _stamp_digit(canvas: np.ndarray, digit: int, cy: float, cx: float, color: np.ndarray, scale: int) -> None:
    rows = _DIGIT_FONT[str(digit)]
    h, w = canvas.shape[:2]
    top = int(round(cy)) - (7 * scale) // 2
    left = int(round(cx)) - (5 * scale) // 2
    for i, row in enumerate(rows):
        for j, ch in enumerate(row):
            if ch != "1":
                continue
            r0, r1 = max(0, top + i * scale), min(h, top + (i + 1) * scale)
            c0, c1 = max(0, left + j * scale), min(w, left + (j + 1) * scale)
            if r0 < r1 and c0 < c1:
                canvas[r0:r1, c0:c1] = color


def _render_sample(spec: SyntheticSpec, label: int, rng: np.random.Generator) -> np.ndarray:
    h, w, c = spec.image_size
    bg, fg = _class_palette(label, spec.class_count)
    jitter = max(1.0, min(h, w) / 15.0)
    cy = h / 2.0 + rng.uniform(-jitter, jitter)
    cx = w / 2.0 + rng.uniform(-jitter, jitter)
    r = 0.30 * min(h, w) + rng.uniform(-1.0, 1.0)
    canvas = np.tile(bg, (h, w, 1))
    mask = _glyph_mask(_SHAPE_CYCLE[label % len(_SHAPE_CYCLE)], h, w, cy, cx, r)
    canvas[mask] = fg
    digit_scale = 2 if min(h, w) >= 24 else 1
    _stamp_digit(canvas, label % 10, cy, cx, np.full(3, 0.05), digit_scale)
    if c != 3:
        canvas = np.repeat(canvas.mean(axis=2, keepdims=True), c, axis=2)
    canvas = canvas + rng.standard_normal(canvas.shape) * spec.noise_std
    return np.clip(canvas, 0.0, 1.0)


def _render_split(spec: SyntheticSpec, per_class: int, stream_tag: int) -> LabeledDataset:
    rng = np.random.default_rng([spec.seed, stream_tag])
    images, labels = [], []
    for label in range(spec.class_count):
        for _ in range(per_class):
            images.append(_render_sample(spec, label, rng))
            labels.append(label)
    n = len(images)
    return LabeledDataset(
        images=np.stack(images),
        labels=np.array(labels, dtype=np.int64),
        poisoned=np.zeros(n, dtype=bool),
        class_count=spec.class_count,
    )


def generate_synthetic(spec: SyntheticSpec) -> tuple[LabeledDataset, LabeledDataset]:
    """Deterministic (train, test) pair; disjoint noise/jitter streams per split."""
    train = _render_split(spec, spec.per_class_train, stream_tag=0)
    test = _render_split(spec, spec.per_class_test, stream_tag=1)
    return train, test


def load_directory(manifest_path, image_size: tuple[int, int, int] = (30, 30, 3),
                   class_count: int | None = None) -> LabeledDataset:
    """Load a `path,label` CSV manifest of PNG images, resized bilinearly.

    Paths are resolved relative to the manifest's directory. Labels must be
    non-negative integers below class_count (inferred as max+1 when omitted).
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataError(f"manifest not found: {manifest_path}")
    h, w, c = image_size
    rows = []
    with open(manifest_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [col.strip() for col in header] != ["path", "label"]:
            raise DataError("manifest must start with header 'path,label'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise DataError(f"manifest line {lineno}: expected 2 fields, got {len(row)}")
            rows.append((row[0].strip(), row[1].strip(), lineno))

    images, labels = [], []
    for rel_path, label_text, lineno in rows:
        try:
            label = int(label_text)
        except ValueError:
            raise DataError(f"manifest line {lineno}: label '{label_text}' is not an integer") from None
        if label < 0 or (class_count is not None and label >= class_count):
            raise DataError(f"manifest line {lineno}: label out of range")
        img_path = manifest_path.parent / rel_path
        if not img_path.is_file():
            raise DataError(f"manifest line {lineno}: missing file {img_path}")
        try:
            with Image.open(img_path) as img:
                img = img.convert("RGB").resize((w, h), Image.BILINEAR)
        except (UnidentifiedImageError, OSError) as exc:
            raise DataError(f"manifest line {lineno}: unreadable PNG {img_path}: {exc}") from None
        arr = np.asarray(img, dtype=np.float64) / 255.0
        if c == 1:
            arr = arr.mean(axis=2, keepdims=True)
        images.append(arr)
        labels.append(label)

    if not images:
        raise DataError("manifest lists no images")
    labels_arr = np.array(labels, dtype=np.int64)
    effective_count = class_count if class_count is not None else int(labels_arr.max()) + 1
    return LabeledDataset(
        images=np.stack(images),
        labels=labels_arr,
        poisoned=np.zeros(len(images), dtype=bool),
        class_count=effective_count,
    )


def subsample(data: LabeledDataset, fraction: float, seed: int) -> LabeledDataset:
    """Stratified subsample of floor(fraction * N) items, seeded shuffle.

    Per-class counts stay within one sample of the proportional share
    (largest-remainder apportionment, ties to the lower class index).
    """
    if not 0.0 < fraction <= 1.0:
        raise DataError("fraction must lie in (0, 1]")
    n_total = int(np.floor(fraction * len(data)))
    if n_total == 0:
        raise DataError("subsample would be empty")
    rng = np.random.default_rng(seed)

    class_indices = [np.flatnonzero(data.labels == c) for c in range(data.class_count)]
    exact = np.array([fraction * len(ci) for ci in class_indices])
    counts = np.floor(exact).astype(int)
    remainders = exact - counts
    short = n_total - counts.sum()
    for c in np.argsort(-remainders, kind="stable")[:short]:
        counts[c] += 1

    chosen = []
    for ci, k in zip(class_indices, counts):
        if k > 0:
            chosen.append(rng.permutation(ci)[:k])
    flat = np.concatenate(chosen) if chosen else np.array([], dtype=np.int64)
    return data.take(rng.permutation(flat))
