"""Image I/O and paired rain/clean datasets with seeded cropping and batching.

Images live on disk as 8-bit RGB PNG files and in memory as float arrays of
shape (1, 3, H, W) with values in [0, 1]. A dataset directory contains
``rain/`` and ``clean/`` subdirectories plus a ``manifest.tsv`` of
tab-separated ``rain_path<TAB>clean_path`` lines (paths relative to the
manifest's directory).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image, UnidentifiedImageError

from glahrr.errors import DecodeError, EmptyDatasetError, SizeError


def load_image(path: str | Path) -> np.ndarray:
    """Load an RGB PNG into a (1, 3, H, W) float32 array in [0, 1].

    Raises FileNotFoundError for missing files and DecodeError for files
    that are not decodable 8-bit RGB images.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                raise DecodeError(f"{path}: expected RGB image, got mode {img.mode!r}")
            arr = np.asarray(img, dtype=np.float32)
    except UnidentifiedImageError as exc:
        raise DecodeError(f"{path}: not a decodable image") from exc
    arr = arr / 255.0
    return arr.transpose(2, 0, 1)[None]


def save_image(img: np.ndarray, path: str | Path) -> None:
    """Write a (1, 3, H, W) array to an 8-bit RGB PNG.

    Values are clamped to [0, 1] and quantized with round-half-up, so a
    later load_image differs from the clamped input by at most 1/255 per
    channel.
    """
    img = np.asarray(img)
    if img.ndim != 4 or img.shape[0] != 1 or img.shape[1] != 3:
        raise SizeError(f"expected shape (1, 3, H, W), got {img.shape}")
    chw = np.clip(img[0], 0.0, 1.0)
    bytes_ = np.floor(chw * 255.0 + 0.5).astype(np.uint8)
    out = Image.fromarray(bytes_.transpose(1, 2, 0), mode="RGB")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out.save(path)


def random_crop_pair(
    rain: np.ndarray,
    clean: np.ndarray,
    crop_h: int,
    crop_w: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Crop the same seeded window from an aligned rain/clean pair.

    The window's top offset is drawn first, then the left offset, from
    ``np.random.default_rng(seed)``. A crop equal to the image size is the
    identity.
    """
    if rain.shape != clean.shape:
        raise SizeError(f"pair shapes differ: {rain.shape} vs {clean.shape}")
    h, w = rain.shape[-2:]
    if crop_h < 1 or crop_w < 1 or crop_h > h or crop_w > w:
        raise SizeError(f"crop {crop_h}x{crop_w} does not fit image {h}x{w}")
    rng = np.random.default_rng(seed)
    top = int(rng.integers(0, h - crop_h + 1))
    left = int(rng.integers(0, w - crop_w + 1))
    window = (..., slice(top, top + crop_h), slice(left, left + crop_w))
    return rain[window], clean[window]


@dataclass
class PairedDataset:
    """Aligned rain/clean image pairs, stored as absolute path tuples."""

    pairs: list[tuple[Path, Path]] = field(default_factory=list)
    name: str = "dataset"

    def __len__(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_manifest(cls, manifest_path: str | Path) -> "PairedDataset":
        manifest_path = Path(manifest_path)
        root = manifest_path.parent
        pairs = []
        for line_no, line in enumerate(manifest_path.read_text().splitlines(), 1):
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise DecodeError(
                    f"{manifest_path}:{line_no}: expected rain<TAB>clean, got {line!r}"
                )
            pairs.append((root / parts[0], root / parts[1]))
        return cls(pairs=pairs, name=root.name)

    def save_manifest(self, manifest_path: str | Path) -> None:
        manifest_path = Path(manifest_path)
        root = manifest_path.parent
        root.mkdir(parents=True, exist_ok=True)
        lines = []
        for rain, clean in self.pairs:
            lines.append(f"{_relative_to(rain, root)}\t{_relative_to(clean, root)}")
        manifest_path.write_text("\n".join(lines) + ("\n" if lines else ""))

    def load_pair(self, index: int) -> tuple[np.ndarray, np.ndarray]:
        rain_path, clean_path = self.pairs[index]
        return load_image(rain_path), load_image(clean_path)


def _relative_to(path: Path, root: Path) -> str:
    try:
        return path.relative_to(root).as_posix()
    except ValueError:
        return str(path)


def make_batches(
    dataset: PairedDataset,
    batch_size: int,
    crop_h: int,
    crop_w: int,
    seed: int,
) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield one epoch of seeded, shuffled (rain, clean) crop batches.

    Each pair is visited exactly once per epoch. The epoch order is a seeded
    permutation and each element gets its own crop seed drawn from the same
    generator, so a fixed seed reproduces the epoch exactly. The final batch
    is kept even when smaller than ``batch_size``.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError(f"dataset {dataset.name!r} has no pairs")
    if batch_size < 1:
        raise SizeError(f"batch_size must be >= 1, got {batch_size}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    crop_seeds = rng.integers(0, 2**31 - 1, size=len(dataset))
    n_batches = math.ceil(len(dataset) / batch_size)
    for b in range(n_batches):
        idx = order[b * batch_size : (b + 1) * batch_size]
        rains, cleans = [], []
        for j, i in enumerate(idx):
            rain, clean = dataset.load_pair(int(i))
            rc, cc = random_crop_pair(
                rain, clean, crop_h, crop_w, int(crop_seeds[b * batch_size + j])
            )
            rains.append(rc[0])
            cleans.append(cc[0])
        yield np.stack(rains), np.stack(cleans)
