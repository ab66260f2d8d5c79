"""The heavy-rain removal network: three sub-nets blended per pixel.

A rainy input produces up to three candidate clean images that are fused
by learned sigmoid weight maps:

* a U-shaped spatial/channel-attention sub-net predicts a coarse clean
  image and exposes its 256-channel quarter-resolution encoder features;
* an additive sub-net predicts a signed residual from those features,
  giving ``additive = input + residual``;
* a multiplicative sub-net predicts a positive per-pixel gain, giving
  ``multiplicative = input * gain``.

The final output is ``fused = sum_k estimate_k * weight_k`` with per-pixel
weights from a small blending block. Any subset of sub-nets can be
enabled; with a single sub-net the blending stage is bypassed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from glahrr.blocks import BlendBlock, ChannelInception, ResidualInception, SCABlock
from glahrr.errors import ConfigurationError, DomainError

FEATURE_CHANNELS = 256
SIZE_MULTIPLE = 16


@dataclass
class VariantConfig:
    """Which sub-nets and attention stages the network is built with."""

    use_sca: bool = True
    use_add: bool = True
    use_mul: bool = True
    use_sa: bool = True
    use_ca: bool = True
    extra_conv_when_no_attn: bool = False

    def validate(self) -> None:
        if not (self.use_sca or self.use_add or self.use_mul):
            raise ConfigurationError("at least one sub-net must be enabled")

    def n_subnets(self) -> int:
        return int(self.use_sca) + int(self.use_add) + int(self.use_mul)


@dataclass
class ModelOutput:
    """All tensors produced by one forward pass.

    Disabled sub-nets leave their estimate, residual, and weight fields as
    None; ``fused`` and ``features`` are always present. When only one
    sub-net is enabled, ``fused`` is that sub-net's estimate and all weight
    fields are None.
    """

    fused: torch.Tensor
    features: torch.Tensor
    coarse: Optional[torch.Tensor] = None
    additive: Optional[torch.Tensor] = None
    multiplicative: Optional[torch.Tensor] = None
    residual_add: Optional[torch.Tensor] = None
    residual_mul: Optional[torch.Tensor] = None
    weight_coarse: Optional[torch.Tensor] = None
    weight_additive: Optional[torch.Tensor] = None
    weight_multiplicative: Optional[torch.Tensor] = None


def _pad_to_multiple(x: torch.Tensor, multiple: int) -> torch.Tensor:
    """Reflect-pad right/bottom until H and W are multiples of ``multiple``.

    Reflection can pad at most size-1 per step, so small inputs pad in
    several rounds.
    """
    pad_h = -x.shape[-2] % multiple
    pad_w = -x.shape[-1] % multiple
    while pad_h or pad_w:
        dh = min(pad_h, x.shape[-2] - 1)
        dw = min(pad_w, x.shape[-1] - 1)
        x = F.pad(x, (0, dw, 0, dh), mode="reflect")
        pad_h -= dh
        pad_w -= dw
    return x


class SCASubnet(nn.Module):
    """U-shaped encoder/decoder of attention blocks.

    The encoder front is three stride-1 3x3 convolutions at width 64
    (plus one compensating convolution when both attentions are disabled
    and ``extra_front_conv`` is set), followed by down blocks at widths
    128/256/512/1024. The decoder mirrors it with up blocks and skip
    concatenations, ending in a 3x3 convolution to RGB with no activation.
    With ``with_decoder=False`` only the encoder up to the 256-channel
    feature tap is built and the coarse estimate is None.
    """

    def __init__(
        self,
        use_sa: bool = True,
        use_ca: bool = True,
        extra_front_conv: bool = False,
        with_decoder: bool = True,
    ):
        super().__init__()
        self.with_decoder = with_decoder
        front = [
            nn.Conv2d(3, 64, 3, padding=1),
            nn.Conv2d(64, 64, 3, padding=1),
            nn.Conv2d(64, 64, 3, padding=1),
        ]
        if extra_front_conv:
            front.append(nn.Conv2d(64, 64, 3, padding=1))
        self.front = nn.ModuleList(front)
        kw = {"use_sa": use_sa, "use_ca": use_ca}
        self.down1 = SCABlock(64, 128, "down", **kw)
        self.down2 = SCABlock(128, 256, "down", **kw)
        if with_decoder:
            self.down3 = SCABlock(256, 512, "down", **kw)
            self.down4 = SCABlock(512, 1024, "down", **kw)
            self.up1 = SCABlock(1024, 512, "up", **kw)
            self.up2 = SCABlock(1024, 256, "up", **kw)
            self.up3 = SCABlock(512, 128, "up", **kw)
            self.up4 = SCABlock(256, 64, "up", **kw)
            self.out_conv = nn.Conv2d(64, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> tuple[Optional[torch.Tensor], torch.Tensor]:
        for conv in self.front:
            x = F.relu(conv(x))
        e1 = self.down1(x)
        e2 = self.down2(e1)
        if not self.with_decoder:
            return None, e2
        e3 = self.down3(e2)
        e4 = self.down4(e3)
        d = self.up1(e4)
        d = self.up2(torch.cat([d, e3], dim=1))
        d = self.up3(torch.cat([d, e2], dim=1))
        d = self.up4(torch.cat([d, e1], dim=1))
        return self.out_conv(d), e2


class _ResidueHead(nn.Module):
    """Upsample quarter-resolution features back to an RGB residual."""

    def __init__(self, channels: int = FEATURE_CHANNELS):
        super().__init__()
        self.up1 = nn.ConvTranspose2d(channels, 64, 4, stride=2, padding=1)
        self.up2 = nn.ConvTranspose2d(64, 16, 4, stride=2, padding=1)
        self.out_conv = nn.Conv2d(16, 3, 3, padding=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.up1(x))
        x = F.relu(self.up2(x))
        return self.out_conv(x)


class AdditiveSubnet(nn.Module):
    """Predict a signed residual in [-1, 1] from encoder features."""

    def __init__(self):
        super().__init__()
        self.block1 = ResidualInception()
        self.block2 = ResidualInception()
        self.head = _ResidueHead()

    def forward_parts(self, f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mid = self.block2(self.block1(f))
        return mid, torch.tanh(self.head(mid))

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return self.forward_parts(f)[1]


class MultiplicativeSubnet(nn.Module):
    """Predict a per-pixel gain in (0, 2) from encoder features."""

    def __init__(self):
        super().__init__()
        self.block1 = ChannelInception()
        self.block2 = ChannelInception()
        self.head = _ResidueHead()

    def forward_parts(self, f: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        mid = self.block2(self.block1(f))
        return mid, 2.0 * torch.sigmoid(self.head(mid))

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return self.forward_parts(f)[1]


class GlaHrrNet(nn.Module):
    """Blend the enabled sub-net estimates into one clean image.

    Inputs are (B, 3, H, W) tensors with finite values in [0, 1]; any H, W
    is accepted (the forward pass reflect-pads to a multiple of 16 and
    crops back). Inputs are cast to the module's parameter dtype.
    """

    def __init__(self, config: VariantConfig | None = None):
        super().__init__()
        config = config if config is not None else VariantConfig()
        config.validate()
        self.config = config
        extra = config.extra_conv_when_no_attn and not config.use_sa and not config.use_ca
        self.sca = SCASubnet(
            use_sa=config.use_sa,
            use_ca=config.use_ca,
            extra_front_conv=extra,
            with_decoder=config.use_sca,
        )
        self.additive = AdditiveSubnet() if config.use_add else None
        self.multiplicative = MultiplicativeSubnet() if config.use_mul else None
        self.blend = BlendBlock(config.n_subnets()) if config.n_subnets() > 1 else None

    def _validate_input(self, x: torch.Tensor) -> None:
        if not isinstance(x, torch.Tensor) or x.dim() != 4 or x.shape[1] != 3:
            shape = getattr(x, "shape", None)
            raise DomainError(f"expected a (B, 3, H, W) tensor, got shape {shape}")
        if not torch.isfinite(x).all():
            raise DomainError("input contains non-finite values")
        if x.min() < 0 or x.max() > 1:
            raise DomainError(
                f"input values must lie in [0, 1], got [{x.min():.4f}, {x.max():.4f}]"
            )

    def forward(self, x: torch.Tensor) -> ModelOutput:
        self._validate_input(x)
        x = x.to(next(self.parameters()).dtype)
        h, w = x.shape[-2:]
        xp = _pad_to_multiple(x, SIZE_MULTIPLE)

        coarse_p, feat_p = self.sca(xp)
        features = feat_p[..., : math.ceil(h / 4), : math.ceil(w / 4)]

        coarse = coarse_p[..., :h, :w] if coarse_p is not None else None
        residual_add = additive = None
        if self.additive is not None:
            residual_add = self.additive(feat_p)[..., :h, :w]
            additive = x + residual_add
        residual_mul = multiplicative = None
        if self.multiplicative is not None:
            residual_mul = self.multiplicative(feat_p)[..., :h, :w]
            multiplicative = x * residual_mul

        estimates = [e for e in (coarse, additive, multiplicative) if e is not None]
        weights: list[Optional[torch.Tensor]] = [None, None, None]
        if len(estimates) == 1:
            fused = estimates[0]
        else:
            maps = self.blend(estimates)
            fused = sum(e * m for e, m in zip(estimates, maps))
            k = 0
            for slot, enabled in enumerate((coarse, additive, multiplicative)):
                if enabled is not None:
                    weights[slot] = maps[k]
                    k += 1

        return ModelOutput(
            fused=fused,
            features=features,
            coarse=coarse,
            additive=additive,
            multiplicative=multiplicative,
            residual_add=residual_add,
            residual_mul=residual_mul,
            weight_coarse=weights[0],
            weight_additive=weights[1],
            weight_multiplicative=weights[2],
        )

    @torch.no_grad()
    def inspect_features(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        """Return quarter-resolution feature maps for visualization.

        Keys: ``sca`` (encoder tap), plus ``add``/``mul`` (second inception
        block outputs) when those sub-nets exist.
        """
        self._validate_input(x)
        x = x.to(next(self.parameters()).dtype)
        h, w = x.shape[-2:]
        crop = (..., slice(0, math.ceil(h / 4)), slice(0, math.ceil(w / 4)))
        xp = _pad_to_multiple(x, SIZE_MULTIPLE)
        _, feat_p = self.sca(xp)
        out = {"sca": feat_p[crop]}
        if self.additive is not None:
            out["add"] = self.additive.forward_parts(feat_p)[0][crop]
        if self.multiplicative is not None:
            out["mul"] = self.multiplicative.forward_parts(feat_p)[0][crop]
        return out


def xavier_init(model: nn.Module, seed: int) -> None:
    """Initialize weights Xavier-uniform and biases to zero, from one seed.

    Parameters are visited in registration order with a dedicated torch
    generator, so the same seed always produces the same parameters. The
    uniform bound is sqrt(6 / (fan_in + fan_out)); the fan sum is symmetric
    in the weight layout, so the same formula covers transposed
    convolutions.
    """
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in model.parameters():
            if p.dim() >= 2:
                receptive = p.shape[2:].numel() if p.dim() > 2 else 1
                fan_sum = (p.shape[0] + p.shape[1]) * receptive
                bound = math.sqrt(6.0 / fan_sum)
                p.uniform_(-bound, bound, generator=g)
            else:
                p.zero_()


def build_variant(config: VariantConfig, seed: int) -> GlaHrrNet:
    """Construct and deterministically initialize a network variant."""
    model = GlaHrrNet(config)
    xavier_init(model, seed)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
