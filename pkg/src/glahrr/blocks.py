"""Attention and inception building blocks for the derain network."""

from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from glahrr.errors import ConfigurationError


class SpatialAttention(nn.Module):
    """Rescale features by a per-pixel gate.

    The gate is a sigmoid of a 7x7 convolution over the channelwise mean
    and max maps, so output magnitudes never exceed the input's.
    """

    def __init__(self, kernel_size: int = 7):
        super().__init__()
        self.conv = nn.Conv2d(2, 1, kernel_size, padding=kernel_size // 2)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        pooled = torch.cat([x.mean(dim=1, keepdim=True), x.max(dim=1, keepdim=True)[0]], dim=1)
        return torch.sigmoid(self.conv(pooled))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class ChannelAttention(nn.Module):
    """Rescale features by a per-channel gate.

    The gate is a sigmoid of a squeeze-excite bottleneck: global average
    pool, 1x1 conv to ``channels / reduction``, ReLU, 1x1 conv back.
    A spatially constant input stays spatially constant.
    """

    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        if channels % reduction != 0:
            raise ConfigurationError(
                f"channels ({channels}) must be divisible by reduction ({reduction})"
            )
        self.squeeze = nn.Conv2d(channels, channels // reduction, 1)
        self.excite = nn.Conv2d(channels // reduction, channels, 1)

    def gate(self, x: torch.Tensor) -> torch.Tensor:
        g = F.adaptive_avg_pool2d(x, 1)
        return torch.sigmoid(self.excite(F.relu(self.squeeze(g))))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * self.gate(x)


class SCABlock(nn.Module):
    """Resampling block with optional spatial and channel attention.

    A ``down`` block halves the spatial size (ceil division) with a strided
    3x3 convolution; an ``up`` block exactly doubles it with a transposed
    3x3 convolution. The resampled features pass through ReLU, then spatial
    attention, then channel attention; each attention stage can be disabled.
    """

    def __init__(
        self,
        c_in: int,
        c_out: int,
        direction: str = "down",
        use_sa: bool = True,
        use_ca: bool = True,
        reduction: int = 16,
    ):
        super().__init__()
        if direction == "down":
            self.resample = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
        elif direction == "up":
            self.resample = nn.ConvTranspose2d(
                c_in, c_out, 3, stride=2, padding=1, output_padding=1
            )
        else:
            raise ConfigurationError(f"direction must be 'down' or 'up', got {direction!r}")
        self.sa = SpatialAttention() if use_sa else None
        self.ca = ChannelAttention(c_out, reduction) if use_ca else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.resample(x))
        if self.sa is not None:
            x = self.sa(x)
        if self.ca is not None:
            x = self.ca(x)
        return x


class _InceptionBranches(nn.Module):
    """Parallel 3x3 / 5x5 / 7x7 convolutions, ReLU'd and concatenated."""

    def __init__(self, channels: int, branch_width: int):
        super().__init__()
        self.b3 = nn.Conv2d(channels, branch_width, 3, padding=1)
        self.b5 = nn.Conv2d(channels, branch_width, 5, padding=2)
        self.b7 = nn.Conv2d(channels, branch_width, 7, padding=3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([F.relu(self.b3(x)), F.relu(self.b5(x)), F.relu(self.b7(x))], dim=1)


class ResidualInception(nn.Module):
    """Multi-scale residual block: inception branches, 1x1 fuse, add, ReLU.

    With every weight and bias zeroed the block reduces to ``relu(x)``.
    """

    def __init__(self, channels: int = 256, branch_width: int = 128):
        super().__init__()
        self.channels = channels
        self.branches = _InceptionBranches(channels, branch_width)
        self.fuse = nn.Conv2d(3 * branch_width, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ConfigurationError(f"expected {self.channels} channels, got {x.shape[1]}")
        return F.relu(x + self.fuse(self.branches(x)))


class ChannelInception(nn.Module):
    """Residual inception block with channel attention on the concatenated branches."""

    def __init__(self, channels: int = 256, branch_width: int = 128, reduction: int = 16):
        super().__init__()
        self.channels = channels
        self.branches = _InceptionBranches(channels, branch_width)
        self.ca = ChannelAttention(3 * branch_width, reduction)
        self.fuse = nn.Conv2d(3 * branch_width, channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[1] != self.channels:
            raise ConfigurationError(f"expected {self.channels} channels, got {x.shape[1]}")
        return F.relu(x + self.fuse(self.ca(self.branches(x))))


class BlendBlock(nn.Module):
    """Produce per-pixel blending weights for a set of candidate images.

    The candidates (each (B, 3, H, W)) are concatenated and passed through
    three 3x3 convolutions (width 32, ReLU), a channel-attention rescale,
    and a 1x1 convolution to one map per candidate; a sigmoid keeps every
    weight in (0, 1). Weights are not normalized across candidates.
    """

    def __init__(self, n_sources: int, width: int = 32, reduction: int = 4):
        super().__init__()
        if n_sources < 2:
            raise ConfigurationError(f"blending needs at least 2 sources, got {n_sources}")
        self.n_sources = n_sources
        self.conv1 = nn.Conv2d(3 * n_sources, width, 3, padding=1)
        self.conv2 = nn.Conv2d(width, width, 3, padding=1)
        self.conv3 = nn.Conv2d(width, width, 3, padding=1)
        self.ca = ChannelAttention(width, reduction)
        self.head = nn.Conv2d(width, n_sources, 1)

    def forward(self, sources: list[torch.Tensor]) -> list[torch.Tensor]:
        if len(sources) != self.n_sources:
            raise ConfigurationError(
                f"expected {self.n_sources} sources, got {len(sources)}"
            )
        x = torch.cat(sources, dim=1)
        x = F.relu(self.conv1(x))
        x = F.relu(self.conv2(x))
        x = F.relu(self.conv3(x))
        x = self.ca(x)
        weights = torch.sigmoid(self.head(x))
        return [weights[:, k : k + 1] for k in range(self.n_sources)]
