"""Physically-grounded synthetic rain: scene generators and composers.

Two composition models turn a clean image into a rainy one:

* transmission model: ``rainy = transmission * (clean + streaks)
  + (1 - transmission) * atmospheric``, with the per-pixel transmission map
  derived from scene depth and a scalar atmospheric light;
* rain/fog model: ``rainy = clean * (1 - rain - fog) + rain
  + atmospheric * fog``, with ``rain + fog <= 0.95`` pointwise so the
  composition stays invertible.

Clean images are (1, 3, H, W), single-channel layers (1, 1, H, W); all
values live in [0, 1] unless noted. Generators are pure functions of their
seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from glahrr.data import PairedDataset, save_image
from glahrr.errors import (
    CompositionError,
    ConfigurationError,
    DomainError,
    SingularityError,
    SizeError,
)

MIN_INVERTIBLE_TRANSMISSION = 0.05
RAIN_FOG_BUDGET = 0.95


def _bilinear_resize(a: np.ndarray, h: int, w: int) -> np.ndarray:
    """Resize a 2-D array with align-corners bilinear interpolation."""
    sh, sw = a.shape
    ys = np.linspace(0.0, sh - 1.0, h)
    xs = np.linspace(0.0, sw - 1.0, w)
    y0 = np.clip(np.floor(ys).astype(int), 0, sh - 2)
    x0 = np.clip(np.floor(xs).astype(int), 0, sw - 2)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    tl = a[np.ix_(y0, x0)]
    tr = a[np.ix_(y0, x0 + 1)]
    bl = a[np.ix_(y0 + 1, x0)]
    br = a[np.ix_(y0 + 1, x0 + 1)]
    return (1 - fy) * ((1 - fx) * tl + fx * tr) + fy * ((1 - fx) * bl + fx * br)


def gen_clean_scene(seed: int, height: int, width: int) -> np.ndarray:
    """Generate a deterministic clean test scene, (1, 3, H, W) in [0, 1].

    Recipe, with all draws taken in order from
    ``np.random.default_rng(seed)``:

    1. ``corners = rng.uniform(size=(2, 2, 3))``: RGB colors for the
       top-left, top-right, bottom-left, bottom-right corners. The base
       image interpolates them bilinearly with weights from
       ``u = linspace(0, 1, height)`` down rows and
       ``v = linspace(0, 1, width)`` across columns.
    2. ``n = int(rng.integers(5, 21))`` shapes. For each shape, draw
       ``kind = int(rng.integers(0, 2))`` (0 rectangle, 1 ellipse), then
       ``cy = rng.uniform(0, height)``, ``cx = rng.uniform(0, width)``,
       ``ry = rng.uniform(height / 16, height / 3)``,
       ``rx = rng.uniform(width / 16, width / 3)``,
       ``color = rng.uniform(size=3)``, ``alpha = rng.uniform(0.4, 0.9)``.
       A rectangle covers pixels with ``|y - cy| <= ry`` and
       ``|x - cx| <= rx``; an ellipse covers
       ``((y - cy) / ry)**2 + ((x - cx) / rx)**2 <= 1``. Each shape is
       alpha-blended over the image:
       ``img = img * (1 - alpha * mask) + color * alpha * mask``.
    """
    if height < 16 or width < 16:
        raise SizeError(f"scene must be at least 16x16, got {height}x{width}")
    rng = np.random.default_rng(seed)
    corners = rng.uniform(size=(2, 2, 3))
    u = np.linspace(0.0, 1.0, height)[:, None, None]
    v = np.linspace(0.0, 1.0, width)[None, :, None]
    img = (
        (1 - u) * (1 - v) * corners[0, 0]
        + (1 - u) * v * corners[0, 1]
        + u * (1 - v) * corners[1, 0]
        + u * v * corners[1, 1]
    )
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    n_shapes = int(rng.integers(5, 21))
    for _ in range(n_shapes):
        kind = int(rng.integers(0, 2))
        cy = rng.uniform(0, height)
        cx = rng.uniform(0, width)
        ry = rng.uniform(height / 16, height / 3)
        rx = rng.uniform(width / 16, width / 3)
        color = rng.uniform(size=3)
        alpha = rng.uniform(0.4, 0.9)
        if kind == 0:
            mask = (np.abs(ys - cy) <= ry) & (np.abs(xs - cx) <= rx)
        else:
            mask = ((ys - cy) / ry) ** 2 + ((xs - cx) / rx) ** 2 <= 1.0
        m = mask.astype(np.float64)[:, :, None]
        img = img * (1 - alpha * m) + color * alpha * m
    return img.transpose(2, 0, 1)[None]


def gen_depth(seed: int, height: int, width: int, d_max: float = 1.0) -> np.ndarray:
    """Generate a smooth positive depth map, (1, 1, H, W) in (0.05*d_max, d_max].

    Recipe: draw ``coarse = rng.uniform(size=(4, 4))`` from
    ``np.random.default_rng(seed)`` and upsample it bilinearly
    (align-corners) to H x W. Add it, scaled by 0.5, to a vertical ramp
    that falls from 1 at the top row to 0 at the bottom row (top of frame
    is far). Normalize the sum to [0, 1] and map it affinely onto
    (0.05 * d_max, d_max], keeping the minimum strictly above 0.05 * d_max.
    """
    if d_max <= 0:
        raise DomainError(f"d_max must be positive, got {d_max}")
    rng = np.random.default_rng(seed)
    coarse = rng.uniform(size=(4, 4))
    ramp = np.linspace(1.0, 0.0, height)[:, None] * np.ones((1, width))
    field = ramp + 0.5 * _bilinear_resize(coarse, height, width)
    u = (field - field.min()) / (field.max() - field.min())
    u = 1e-6 + (1.0 - 1e-6) * u
    depth = d_max * (MIN_INVERTIBLE_TRANSMISSION + (1 - MIN_INVERTIBLE_TRANSMISSION) * u)
    return depth[None, None]


def transmission_from_depth(depth: np.ndarray, beta: float) -> np.ndarray:
    """Per-pixel transmission ``T = exp(-beta * depth)`` for beta >= 0."""
    if beta < 0:
        raise DomainError(f"beta must be non-negative, got {beta}")
    depth = np.asarray(depth)
    if (depth <= 0).any():
        raise DomainError("depth must be strictly positive")
    return np.exp(-beta * depth)


def _line_kernel(angle_deg: float, length: int) -> np.ndarray:
    """Unit-mass line kernel of side ``length`` at ``angle_deg`` from the x axis."""
    kernel = np.zeros((length, length))
    c = (length - 1) / 2.0
    theta = math.radians(angle_deg)
    dy, dx = math.sin(theta), math.cos(theta)
    for t in np.linspace(-c, c, 4 * length + 1):
        y, x = c + t * dy, c + t * dx
        y0, x0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - y0, x - x0
        for oy, wy in ((0, 1 - fy), (1, fy)):
            for ox, wx in ((0, 1 - fx), (1, fx)):
                yy, xx = y0 + oy, x0 + ox
                if 0 <= yy < length and 0 <= xx < length:
                    kernel[yy, xx] += wy * wx
    return kernel / kernel.sum()


def gen_streaks(
    seed: int,
    height: int,
    width: int,
    angle: float = 90.0,
    length: int = 9,
    density: float = 0.04,
) -> np.ndarray:
    """Generate a rain-streak layer, (1, 1, H, W) in [0, 1].

    Seeded salt noise (each pixel lit with probability ``density``) is
    convolved with a length-``length`` line kernel oriented ``angle``
    degrees counterclockwise from the image x axis (90 gives vertical
    streaks), then rescaled so the brightest pixel is 1. Zero density
    yields an all-zero layer.
    """
    if length < 1:
        raise SizeError(f"streak length must be >= 1, got {length}")
    if not 0.0 <= density <= 1.0:
        raise DomainError(f"density must be in [0, 1], got {density}")
    rng = np.random.default_rng(seed)
    salt = (rng.random((height, width)) < density).astype(np.float64)
    if salt.sum() == 0:
        return np.zeros((1, 1, height, width))
    resp = ndimage.convolve(salt, _line_kernel(angle, length), mode="constant")
    peak = resp.max()
    if peak > 0:
        resp = resp / peak
    return resp[None, None]


def _check_layer(name: str, layer: np.ndarray, spatial: tuple[int, int]) -> None:
    layer = np.asarray(layer)
    if layer.ndim != 4 or layer.shape[:2] != (1, 1) or layer.shape[2:] != spatial:
        raise CompositionError(
            f"{name}: expected shape (1, 1, {spatial[0]}, {spatial[1]}), got {layer.shape}"
        )


def _check_clean(clean: np.ndarray) -> tuple[int, int]:
    clean = np.asarray(clean)
    if clean.ndim != 4 or clean.shape[:2] != (1, 3):
        raise CompositionError(f"clean: expected shape (1, 3, H, W), got {clean.shape}")
    if clean.min() < 0 or clean.max() > 1:
        raise DomainError("clean image values must lie in [0, 1]")
    return clean.shape[2], clean.shape[3]


def _check_atmospheric(a: float) -> None:
    if not 0.0 <= a <= 1.0:
        raise DomainError(f"atmospheric light must be in [0, 1], got {a}")


@dataclass
class RainSceneATS:
    """Components of the transmission composition model."""

    clean: np.ndarray
    streaks: np.ndarray
    transmission: np.ndarray
    atmospheric: float

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        spatial = _check_clean(self.clean)
        _check_layer("streaks", self.streaks, spatial)
        _check_layer("transmission", self.transmission, spatial)
        if np.asarray(self.streaks).min() < 0:
            raise DomainError("streak values must be non-negative")
        t = np.asarray(self.transmission)
        if t.min() < 0 or t.max() > 1:
            raise DomainError("transmission values must lie in [0, 1]")
        _check_atmospheric(self.atmospheric)


@dataclass
class RainSceneRF:
    """Components of the rain/fog composition model."""

    clean: np.ndarray
    rain: np.ndarray
    fog: np.ndarray
    atmospheric: float

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        spatial = _check_clean(self.clean)
        _check_layer("rain", self.rain, spatial)
        _check_layer("fog", self.fog, spatial)
        r, f = np.asarray(self.rain), np.asarray(self.fog)
        if r.min() < 0 or r.max() > 1 or f.min() < 0 or f.max() > 1:
            raise DomainError("rain and fog values must lie in [0, 1]")
        if (r + f).max() > RAIN_FOG_BUDGET + 1e-9:
            raise DomainError(
                f"rain + fog must stay <= {RAIN_FOG_BUDGET} pointwise, "
                f"got max {(r + f).max():.4f}"
            )
        _check_atmospheric(self.atmospheric)


def compose_ats(scene: RainSceneATS, clamp: bool = True) -> np.ndarray:
    """Render ``transmission * (clean + streaks) + (1 - transmission) * atmospheric``."""
    scene.validate()
    t, a = scene.transmission, scene.atmospheric
    j = t * (scene.clean + scene.streaks) + (1.0 - t) * a
    return np.clip(j, 0.0, 1.0) if clamp else j


def compose_rf(scene: RainSceneRF, clamp: bool = True) -> np.ndarray:
    """Render ``clean * (1 - rain - fog) + rain + atmospheric * fog``."""
    scene.validate()
    r, f, a = scene.rain, scene.fog, scene.atmospheric
    j = scene.clean * (1.0 - r - f) + r + a * f
    return np.clip(j, 0.0, 1.0) if clamp else j


def invert_rf(rainy: np.ndarray, scene: RainSceneRF) -> np.ndarray:
    """Recover the clean image from a rain/fog rendering and its components.

    Computes ``(rainy - rain - atmospheric * fog) / (1 - rain - fog)`` and
    refuses inputs whose denominator dips below 0.05 anywhere (the guard
    runs on the scene's current field values, so mutated scenes are caught
    here).
    """
    r, f, a = scene.rain, scene.fog, scene.atmospheric
    if np.asarray(r).shape != np.asarray(f).shape:
        raise CompositionError(f"rain/fog shapes differ: {r.shape} vs {f.shape}")
    denom = 1.0 - r - f
    if denom.min() < MIN_INVERTIBLE_TRANSMISSION - 1e-12:
        raise SingularityError(
            f"1 - rain - fog reaches {denom.min():.4f}, below the invertibility "
            f"floor {MIN_INVERTIBLE_TRANSMISSION}"
        )
    return (rainy - r - a * f) / denom


def build_synthetic_dataset(
    n: int,
    seed: int,
    out_dir: str | Path,
    model: str = "rf",
    height: int = 128,
    width: int = 192,
) -> PairedDataset:
    """Render ``n`` seeded rain/clean pairs into ``out_dir`` and return the dataset.

    Writes ``rain/NNNN.png``, ``clean/NNNN.png``, a ``manifest.tsv`` of
    relative path pairs, and a ``params.tsv`` recording the per-pair draw
    (composition model, beta, atmospheric light, streak angle/length/density,
    component seeds). Per pair, the parameter draws come in a fixed order
    from ``np.random.default_rng(seed)``: three component seeds, then beta
    in [1, 3], atmospheric in [0.7, 1], angle in [60, 120] degrees, length
    in {7..15}, density in [0.02, 0.06]. The rain/fog model uses
    ``R = 0.8 * streaks`` and ``F = 1 - T``, rescaling both jointly when
    their sum would exceed the 0.95 budget.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one pair, got n={n}")
    if model not in ("ats", "rf"):
        raise ConfigurationError(f"unknown composition model {model!r}")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    rows = []
    pairs = []
    for i in range(n):
        clean_seed, depth_seed, streak_seed = (
            int(s) for s in rng.integers(0, 2**31 - 1, size=3)
        )
        beta = float(rng.uniform(1.0, 3.0))
        atmospheric = float(rng.uniform(0.7, 1.0))
        angle = float(rng.uniform(60.0, 120.0))
        length = int(rng.integers(7, 16))
        density = float(rng.uniform(0.02, 0.06))

        clean = gen_clean_scene(clean_seed, height, width)
        depth = gen_depth(depth_seed, height, width, d_max=1.0)
        t = transmission_from_depth(depth, beta)
        streaks = gen_streaks(streak_seed, height, width, angle, length, density)
        if model == "ats":
            rainy = compose_ats(RainSceneATS(clean, streaks, t, atmospheric))
        else:
            rain, fog = 0.8 * streaks, 1.0 - t
            total = (rain + fog).max()
            if total > RAIN_FOG_BUDGET:
                rain, fog = rain * (RAIN_FOG_BUDGET / total), fog * (RAIN_FOG_BUDGET / total)
            rainy = compose_rf(RainSceneRF(clean, rain, fog, atmospheric))

        rain_rel, clean_rel = f"rain/{i:04d}.png", f"clean/{i:04d}.png"
        save_image(rainy, out_dir / rain_rel)
        save_image(clean, out_dir / clean_rel)
        pairs.append((out_dir / rain_rel, out_dir / clean_rel))
        rows.append(
            f"{i}\t{model}\t{beta:.6f}\t{atmospheric:.6f}\t{angle:.6f}"
            f"\t{length}\t{density:.6f}\t{clean_seed}\t{depth_seed}\t{streak_seed}"
        )

    header = "index\tmodel\tbeta\tatmospheric\tangle\tlength\tdensity\tclean_seed\tdepth_seed\tstreak_seed"
    (out_dir / "params.tsv").write_text("\n".join([header] + rows) + "\n")
    dataset = PairedDataset(pairs=pairs, name=out_dir.name)
    dataset.save_manifest(out_dir / "manifest.tsv")
    return dataset
