"""Image quality metrics (PSNR, SSIM) and per-image evaluation reports."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from glahrr.errors import SizeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def psnr(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor) -> float:
    """Peak signal-to-noise ratio in dB for unit-range images.

    Identical inputs give ``inf``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(dtype: torch.dtype) -> torch.Tensor:
    half = SSIM_WINDOW // 2
    coords = torch.arange(-half, half + 1, dtype=dtype)
    g = torch.exp(-(coords**2) / (2 * SSIM_SIGMA**2))
    window = g[:, None] * g[None, :]
    return (window / window.sum())[None, None]


def ssim(a: np.ndarray | torch.Tensor, b: np.ndarray | torch.Tensor) -> float:
    """Mean structural similarity for (B, C, H, W) unit-range images.

    Uses an 11x11 Gaussian window (sigma 1.5) over valid positions only,
    population (biased) covariances, and stability constants
    K1=0.01, K2=0.03; channels and batch entries are averaged.
    """
    a = torch.as_tensor(np.asarray(a), dtype=torch.float64)
    b = torch.as_tensor(np.asarray(b), dtype=torch.float64)
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.dim() != 4:
        raise SizeError(f"expected (B, C, H, W) images, got shape {tuple(a.shape)}")
    if a.shape[-2] < SSIM_WINDOW or a.shape[-1] < SSIM_WINDOW:
        raise SizeError(
            f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {tuple(a.shape[-2:])}"
        )
    bsz, ch = a.shape[:2]
    x = a.reshape(bsz * ch, 1, *a.shape[2:])
    y = b.reshape(bsz * ch, 1, *b.shape[2:])
    win = _gaussian_window(x.dtype)

    mu_x = F.conv2d(x, win)
    mu_y = F.conv2d(y, win)
    var_x = F.conv2d(x * x, win) - mu_x**2
    var_y = F.conv2d(y * y, win) - mu_y**2
    cov = F.conv2d(x * y, win) - mu_x * mu_y

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float((num / den).mean())


@dataclass
class MetricRow:
    image_id: str
    psnr_db: float
    ssim: float


@dataclass
class MetricReport:
    """Per-image metric rows plus dataset means and run metadata."""

    rows: list[MetricRow] = field(default_factory=list)
    parameter_count: Optional[int] = None
    seconds_per_image: Optional[float] = None

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r.psnr_db for r in self.rows])) if self.rows else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r.ssim for r in self.rows])) if self.rows else math.nan

    def to_tsv(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = ["image_id\tpsnr_db\tssim"]
        for r in self.rows:
            lines.append(f"{r.image_id}\t{r.psnr_db:.6f}\t{r.ssim:.6f}")
        lines.append(f"mean\t{self.mean_psnr:.6f}\t{self.mean_ssim:.6f}")
        if self.parameter_count is not None:
            lines.append(f"# parameters\t{self.parameter_count}")
        if self.seconds_per_image is not None:
            lines.append(f"# seconds_per_image\t{self.seconds_per_image:.6f}")
        path.write_text("\n".join(lines) + "\n")

    @classmethod
    def from_rows(cls, rows: Sequence[tuple[str, float, float]], **kwargs) -> "MetricReport":
        return cls(rows=[MetricRow(i, p, s) for i, p, s in rows], **kwargs)
