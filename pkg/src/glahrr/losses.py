"""Training objective: per-sub-net MSE terms plus an edge-consistency term.

The total loss against the clean target is

    total = w_coarse * MSE(target, coarse)
          + w_additive * MSE(target, additive)
          + w_multiplicative * MSE(target, multiplicative)
          + w_mse * MSE(target, fused) + w_edge * edge(target, fused)

where coarse/additive/multiplicative are the sub-net estimates, fused the
blended output, and edge the mean absolute difference of horizontal and
vertical forward differences. Terms for disabled sub-nets are dropped.
All weights default to 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from glahrr.errors import SizeError
from glahrr.model import ModelOutput


@dataclass
class LossWeights:
    """Multipliers for the five loss terms."""

    coarse: float = 1.0
    additive: float = 1.0
    multiplicative: float = 1.0
    mse: float = 1.0
    edge: float = 1.0


@dataclass
class LossReport:
    """All loss terms from one batch, as differentiable 0-dim tensors.

    ``inter`` is the weighted sum of the per-sub-net terms, ``final`` the
    weighted sum of the fused MSE and edge terms, and
    ``total = inter + final``. Terms for disabled sub-nets are zero.
    """

    coarse: torch.Tensor
    additive: torch.Tensor
    multiplicative: torch.Tensor
    inter: torch.Tensor
    mse: torch.Tensor
    edge: torch.Tensor
    final: torch.Tensor
    total: torch.Tensor

    FIELDS = ("coarse", "additive", "multiplicative", "inter", "mse", "edge", "final", "total")

    def values(self) -> list[float]:
        return [float(getattr(self, name).detach()) for name in self.FIELDS]


def mse_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    return torch.mean((a - b) ** 2)


def edge_loss(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    """Mean L1 distance between the forward-difference gradients of a and b.

    Horizontal differences are taken over the H x (W-1) valid region and
    vertical over (H-1) x W; the two means are summed. Invariant to adding
    the same constant to either image.
    """
    if a.shape != b.shape:
        raise SizeError(f"shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-2] < 2 or a.shape[-1] < 2:
        raise SizeError(f"edge loss needs at least 2x2 images, got {a.shape}")
    dx_a, dx_b = a[..., :, 1:] - a[..., :, :-1], b[..., :, 1:] - b[..., :, :-1]
    dy_a, dy_b = a[..., 1:, :] - a[..., :-1, :], b[..., 1:, :] - b[..., :-1, :]
    return torch.mean(torch.abs(dx_a - dx_b)) + torch.mean(torch.abs(dy_a - dy_b))


def total_loss(
    output: ModelOutput,
    target: torch.Tensor,
    weights: Optional[LossWeights] = None,
) -> LossReport:
    """Score a forward pass against the clean target."""
    w = weights if weights is not None else LossWeights()
    zero = torch.zeros((), dtype=target.dtype)

    coarse = w.coarse * mse_loss(output.coarse, target) if output.coarse is not None else zero
    additive = (
        w.additive * mse_loss(output.additive, target) if output.additive is not None else zero
    )
    multiplicative = (
        w.multiplicative * mse_loss(output.multiplicative, target)
        if output.multiplicative is not None
        else zero
    )
    inter = coarse + additive + multiplicative
    mse = w.mse * mse_loss(output.fused, target)
    edge = w.edge * edge_loss(output.fused, target)
    final = mse + edge
    return LossReport(
        coarse=coarse,
        additive=additive,
        multiplicative=multiplicative,
        inter=inter,
        mse=mse,
        edge=edge,
        final=final,
        total=inter + final,
    )
