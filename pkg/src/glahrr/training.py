"""Training loop, polynomial LR schedule, evaluation, and ablation grids.

Training follows a fixed recipe: Xavier-initialized weights, seeded random
crops re-drawn every epoch, Adam with default moments, and a polynomial
decay of the learning rate over all steps composed with a hard halving
once a configured epoch is reached. Every run writes a per-step TSV log
and a final checkpoint; all randomness derives from the config seed.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
import torch
import torch.nn as nn

from glahrr.checkpoint import load_checkpoint, save_checkpoint
from glahrr.data import PairedDataset, make_batches
from glahrr.errors import ConfigurationError, DivergenceError, EmptyDatasetError
from glahrr.losses import LossReport, LossWeights, total_loss
from glahrr.metrics import MetricReport, MetricRow, psnr, ssim
from glahrr.model import GlaHrrNet, ModelOutput, VariantConfig, build_variant, parameter_count

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class TrainConfig:
    """Declarative description of one training run (JSON-serializable)."""

    data_dir: str = ""
    crop_h: int = 200
    crop_w: int = 300
    batch_size: int = 4
    epochs: int = 200
    base_lr: float = 1e-4
    poly_power: float = 0.9
    halve_at_epoch: int = 100
    seed: int = 0
    dtype: str = "float32"
    eval_every: int = 0
    steps_per_epoch: int = 0
    checkpoint_dir: str = "checkpoints"
    log_dir: str = "logs"
    loss_weights: LossWeights = field(default_factory=LossWeights)
    variant: VariantConfig = field(default_factory=VariantConfig)

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigurationError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0:
            raise ConfigurationError(f"base_lr must be positive, got {self.base_lr}")
        if self.poly_power <= 0:
            raise ConfigurationError(f"poly_power must be positive, got {self.poly_power}")
        if self.crop_h < 1 or self.crop_w < 1:
            raise ConfigurationError(f"crop {self.crop_h}x{self.crop_w} is invalid")
        if self.dtype not in _DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(_DTYPES)}, got {self.dtype!r}")
        if self.eval_every < 0 or self.steps_per_epoch < 0 or self.halve_at_epoch < 0:
            raise ConfigurationError("eval_every, steps_per_epoch, halve_at_epoch must be >= 0")
        self.variant.validate()

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "loss_weights" in d and isinstance(d["loss_weights"], dict):
            d["loss_weights"] = LossWeights(**d["loss_weights"])
        if "variant" in d and isinstance(d["variant"], dict):
            d["variant"] = VariantConfig(**d["variant"])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ConfigurationError(f"{path}: invalid config file: {exc}") from exc

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass
class TrainResult:
    checkpoint_path: Path
    log_path: Path
    steps: int
    final_loss: float


@dataclass
class AblationRow:
    name: str
    variant: VariantConfig
    mean_psnr: float
    mean_ssim: float
    parameters: int


def learning_rate(epoch: int, step_in_epoch: int, config: TrainConfig) -> float:
    """Learning rate at a global step under polynomial decay plus halving.

    With ``t = epoch * steps_per_epoch + step_in_epoch`` and ``T`` total
    steps, the rate is ``base_lr * (1 - t/T) ** poly_power``, multiplied by
    0.5 from ``halve_at_epoch`` onward. It starts at ``base_lr``, never
    increases, and reaches 0 at ``t = T``.
    """
    spe = config.steps_per_epoch
    if spe < 1:
        raise ConfigurationError("steps_per_epoch must be set (>= 1) to compute the rate")
    t = epoch * spe + step_in_epoch
    total = config.epochs * spe
    frac = min(max(t / total, 0.0), 1.0)
    lr = config.base_lr * (1.0 - frac) ** config.poly_power
    if epoch >= config.halve_at_epoch:
        lr *= 0.5
    return lr


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1)[0])


def _resolve_dataset(config: TrainConfig, dataset: Optional[PairedDataset]) -> PairedDataset:
    if dataset is not None:
        return dataset
    if not config.data_dir:
        raise ConfigurationError("config.data_dir is empty and no dataset was passed")
    return PairedDataset.from_manifest(Path(config.data_dir) / "manifest.tsv")


def train(config: TrainConfig, dataset: Optional[PairedDataset] = None) -> TrainResult:
    """Run one full training job and return the artifact paths.

    Identical configs and datasets reproduce identical checkpoints; only
    the timestamped log name differs between runs. A non-finite loss
    aborts with a diagnostic checkpoint (``diverged.ckpt``).
    """
    config.validate()
    dataset = _resolve_dataset(config, dataset)
    if len(dataset) == 0:
        raise EmptyDatasetError(f"dataset {dataset.name!r} has no pairs")

    spe = math.ceil(len(dataset) / config.batch_size)
    config = replace(config, steps_per_epoch=spe)
    dtype = _DTYPES[config.dtype]
    model = build_variant(config.variant, config.seed).to(dtype)
    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.base_lr, betas=(0.9, 0.999), eps=1e-8
    )

    ckpt_dir = Path(config.checkpoint_dir)
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    log_dir = Path(config.log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)
    stamp = time.strftime("%Y%m%d_%H%M%S") + f"_{time.time_ns() % 1_000_000:06d}"
    log_path = log_dir / f"train_{stamp}.tsv"

    step = 0
    last_total = math.nan
    with open(log_path, "w") as log:
        log.write("epoch\tstep\tlr\t" + "\t".join(LossReport.FIELDS) + "\n")
        for epoch in range(config.epochs):
            batches = make_batches(
                dataset,
                config.batch_size,
                config.crop_h,
                config.crop_w,
                _epoch_seed(config.seed, epoch),
            )
            for step_in_epoch, (rain, clean) in enumerate(batches):
                lr = learning_rate(epoch, step_in_epoch, config)
                for group in optimizer.param_groups:
                    group["lr"] = lr
                rain_t = torch.from_numpy(rain).to(dtype)
                clean_t = torch.from_numpy(clean).to(dtype)
                report = total_loss(model(rain_t), clean_t, config.loss_weights)
                if not torch.isfinite(report.total):
                    save_checkpoint(
                        model,
                        ckpt_dir / "diverged.ckpt",
                        extra={"epoch": epoch, "step": step},
                    )
                    raise DivergenceError(
                        f"non-finite loss at epoch {epoch}, step {step}; "
                        f"diagnostic checkpoint written to {ckpt_dir / 'diverged.ckpt'}"
                    )
                optimizer.zero_grad()
                report.total.backward()
                optimizer.step()
                values = "\t".join(f"{v:.8e}" for v in report.values())
                log.write(f"{epoch}\t{step}\t{lr:.8e}\t{values}\n")
                last_total = float(report.total.detach())
                step += 1
            if config.eval_every and (epoch + 1) % config.eval_every == 0:
                save_checkpoint(
                    model, ckpt_dir / f"epoch_{epoch + 1:04d}.ckpt", extra={"epoch": epoch}
                )

    final_path = ckpt_dir / "final.ckpt"
    save_checkpoint(
        model,
        final_path,
        extra={
            "epochs": config.epochs,
            "steps": step,
            "seed": config.seed,
            "final_loss": last_total,
        },
    )
    return TrainResult(
        checkpoint_path=final_path, log_path=log_path, steps=step, final_loss=last_total
    )


DerainFn = Union[nn.Module, Callable[[torch.Tensor], torch.Tensor]]


def evaluate_model(model: DerainFn, dataset: PairedDataset) -> MetricReport:
    """Score a derainer on full (uncropped) images against the clean targets.

    ``model`` may be a network or any callable mapping a rainy tensor to a
    clean estimate; outputs are clamped to [0, 1] before PSNR/SSIM. Rows
    are labeled by the rain file's stem.
    """
    if len(dataset) == 0:
        raise EmptyDatasetError(f"dataset {dataset.name!r} has no pairs")
    is_module = isinstance(model, nn.Module)
    if is_module:
        model.eval()
    rows = []
    elapsed = 0.0
    for index in range(len(dataset)):
        rain, clean = dataset.load_pair(index)
        rain_t = torch.from_numpy(rain)
        start = time.perf_counter()
        with torch.no_grad():
            out = model(rain_t)
        elapsed += time.perf_counter() - start
        if isinstance(out, ModelOutput):
            out = out.fused
        estimate = out.clamp(0.0, 1.0).numpy().astype(np.float64)
        rows.append(
            MetricRow(dataset.pairs[index][0].stem, psnr(estimate, clean), ssim(estimate, clean))
        )
    return MetricReport(
        rows=rows,
        parameter_count=parameter_count(model) if is_module else None,
        seconds_per_image=elapsed / len(dataset),
    )


def evaluate(checkpoint_path: str | Path, dataset: PairedDataset) -> MetricReport:
    """Load a checkpoint and score it on a dataset."""
    model, _ = load_checkpoint(checkpoint_path)
    return evaluate_model(model, dataset)


SUBNET_GRID: list[tuple[str, VariantConfig]] = [
    ("coarse", VariantConfig(use_sca=True, use_add=False, use_mul=False)),
    ("additive", VariantConfig(use_sca=False, use_add=True, use_mul=False)),
    ("multiplicative", VariantConfig(use_sca=False, use_add=False, use_mul=True)),
    ("coarse+additive", VariantConfig(use_sca=True, use_add=True, use_mul=False)),
    ("coarse+multiplicative", VariantConfig(use_sca=True, use_add=False, use_mul=True)),
    ("additive+multiplicative", VariantConfig(use_sca=False, use_add=True, use_mul=True)),
    ("full", VariantConfig()),
]

SCA_BLOCK_GRID: list[tuple[str, VariantConfig]] = [
    ("no_channel_attention", VariantConfig(use_ca=False)),
    ("no_spatial_attention", VariantConfig(use_sa=False)),
    (
        "no_attention_extra_conv",
        VariantConfig(use_sa=False, use_ca=False, extra_conv_when_no_attn=True),
    ),
    ("full", VariantConfig()),
]

ABLATION_GRIDS = {"subnets": SUBNET_GRID, "sca_block": SCA_BLOCK_GRID}


def run_ablation(
    grid: str, config: TrainConfig, dataset: Optional[PairedDataset] = None
) -> list[AblationRow]:
    """Train and score every variant in a named grid with a shared config.

    Each variant trains from the same seed on the same dataset and is
    scored on that dataset (a desk-scale sanity protocol, not a held-out
    benchmark). Results are returned and written to
    ``log_dir/ablation_<grid>.tsv``.
    """
    if grid not in ABLATION_GRIDS:
        raise ConfigurationError(f"unknown grid {grid!r}; choose from {sorted(ABLATION_GRIDS)}")
    config.validate()
    dataset = _resolve_dataset(config, dataset)
    rows = []
    for name, variant in ABLATION_GRIDS[grid]:
        run_config = replace(
            config,
            variant=variant,
            checkpoint_dir=str(Path(config.checkpoint_dir) / name.replace("+", "_")),
        )
        result = train(run_config, dataset)
        model, _ = load_checkpoint(result.checkpoint_path)
        report = evaluate_model(model, dataset)
        rows.append(
            AblationRow(
                name=name,
                variant=variant,
                mean_psnr=report.mean_psnr,
                mean_ssim=report.mean_ssim,
                parameters=report.parameter_count or 0,
            )
        )

    table_path = Path(config.log_dir) / f"ablation_{grid}.tsv"
    table_path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["variant\tsca\tadd\tmul\tsa\tca\tpsnr_db\tssim\tparameters"]
    for row in rows:
        v = row.variant
        lines.append(
            f"{row.name}\t{int(v.use_sca)}\t{int(v.use_add)}\t{int(v.use_mul)}"
            f"\t{int(v.use_sa)}\t{int(v.use_ca)}"
            f"\t{row.mean_psnr:.4f}\t{row.mean_ssim:.6f}\t{row.parameters}"
        )
    table_path.write_text("\n".join(lines) + "\n")
    return rows
