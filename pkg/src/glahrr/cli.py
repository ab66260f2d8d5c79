"""Command-line entry point.

Verbs: ``synthesize`` (render a synthetic dataset), ``train``, ``evaluate``,
``derain`` (run a checkpoint on images), ``ablate`` (train a variant grid),
``inspect`` (dump feature maps), and ``params`` (count parameters).

Exit codes: 0 success, 1 runtime failure, 2 usage error. ``train`` and
``ablate`` accept ``--config FILE`` with a JSON training config; explicit
flags override file values. ``--data`` falls back to the
``GLA_HRR_DATA_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import torch

from glahrr.checkpoint import load_checkpoint
from glahrr.data import PairedDataset, load_image, save_image
from glahrr.errors import ConfigurationError, GlahrrError
from glahrr.model import GlaHrrNet, VariantConfig, parameter_count
from glahrr.synth import build_synthetic_dataset
from glahrr.training import TrainConfig, evaluate_model, run_ablation, train

DATA_ENV_VAR = "GLA_HRR_DATA_DIR"

_VARIANT_TOKENS = {
    "full": (True, True, True),
    "coarse": (True, False, False),
    "additive": (False, True, False),
    "multiplicative": (False, False, True),
    "coarse+additive": (True, True, False),
    "coarse+multiplicative": (True, False, True),
    "additive+multiplicative": (False, True, True),
}


def _variant_from_args(args: argparse.Namespace) -> VariantConfig | None:
    """Build a VariantConfig from CLI flags; None when no flag was given."""
    if args.variant is None and not (args.no_sa or args.no_ca or args.extra_conv):
        return None
    token = args.variant or "full"
    if token not in _VARIANT_TOKENS:
        raise ConfigurationError(
            f"unknown variant {token!r}; choose from {sorted(_VARIANT_TOKENS)}"
        )
    use_sca, use_add, use_mul = _VARIANT_TOKENS[token]
    return VariantConfig(
        use_sca=use_sca,
        use_add=use_add,
        use_mul=use_mul,
        use_sa=not args.no_sa,
        use_ca=not args.no_ca,
        extra_conv_when_no_attn=args.extra_conv,
    )


def _add_variant_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--variant",
        help="sub-net combination: " + ", ".join(sorted(_VARIANT_TOKENS)),
    )
    parser.add_argument("--no-sa", action="store_true", help="disable spatial attention")
    parser.add_argument("--no-ca", action="store_true", help="disable channel attention")
    parser.add_argument(
        "--extra-conv",
        action="store_true",
        help="add the compensating front convolution when both attentions are off",
    )


def _add_train_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON training config; flags override its values")
    parser.add_argument("--data", help=f"dataset directory (default: ${DATA_ENV_VAR})")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--crop-h", type=int)
    parser.add_argument("--crop-w", type=int)
    parser.add_argument("--lr", type=float, dest="base_lr")
    parser.add_argument("--poly-power", type=float)
    parser.add_argument("--halve-at", type=int, dest="halve_at_epoch")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--dtype", choices=["float32", "float64"])
    parser.add_argument("--eval-every", type=int)
    parser.add_argument("--checkpoints", dest="checkpoint_dir")
    parser.add_argument("--logs", dest="log_dir")
    _add_variant_flags(parser)


def _resolve_data_dir(args: argparse.Namespace, fallback: str = "") -> str:
    if getattr(args, "data", None):
        return args.data
    env = os.environ.get(DATA_ENV_VAR)
    if env:
        return env
    return fallback


def _train_config_from_args(args: argparse.Namespace) -> TrainConfig:
    config = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    overrides = {}
    for key in (
        "epochs",
        "batch_size",
        "crop_h",
        "crop_w",
        "base_lr",
        "poly_power",
        "halve_at_epoch",
        "seed",
        "dtype",
        "eval_every",
        "checkpoint_dir",
        "log_dir",
    ):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    data_dir = _resolve_data_dir(args, fallback=config.data_dir)
    if data_dir:
        overrides["data_dir"] = data_dir
    variant = _variant_from_args(args)
    if variant is not None:
        overrides["variant"] = variant
    return TrainConfig.from_dict({**config.to_dict(), **overrides})


def _cmd_synthesize(args: argparse.Namespace) -> int:
    dataset = build_synthetic_dataset(
        n=args.n,
        seed=args.seed,
        out_dir=args.out,
        model=args.model,
        height=args.height,
        width=args.width,
    )
    print(f"wrote {len(dataset)} pairs to {args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    config = _train_config_from_args(args)
    result = train(config)
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    print(f"steps: {result.steps} final_loss: {result.final_loss:.6e}")
    return 0


def _load_eval_dataset(args: argparse.Namespace) -> PairedDataset:
    data_dir = _resolve_data_dir(args)
    if not data_dir:
        raise ConfigurationError(f"no dataset given: pass --data or set ${DATA_ENV_VAR}")
    return PairedDataset.from_manifest(Path(data_dir) / "manifest.tsv")


def _cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = _load_eval_dataset(args)
    if args.stub:
        if args.stub != "identity":
            raise ConfigurationError(f"unknown stub {args.stub!r}")
        model = lambda x: x  # noqa: E731
    elif args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
    else:
        raise ConfigurationError("pass --checkpoint or --stub identity")
    report = evaluate_model(model, dataset)
    if args.out:
        report.to_tsv(args.out)
        print(f"report: {args.out}")
    for row in report.rows:
        print(f"{row.image_id}\t{row.psnr_db:.4f}\t{row.ssim:.6f}")
    print(f"mean\t{report.mean_psnr:.4f}\t{report.mean_ssim:.6f}")
    return 0


def _derain_one(model: GlaHrrNet, in_path: Path, out_path: Path, components: Path | None) -> None:
    rainy = load_image(in_path)
    with torch.no_grad():
        output = model(torch.from_numpy(rainy))
    save_image(output.fused.clamp(0, 1).numpy(), out_path)
    if components is None:
        return
    gray = lambda t: np.repeat(t.numpy(), 3, axis=1)  # noqa: E731
    maps = {
        "coarse": output.coarse,
        "additive": output.additive,
        "multiplicative": output.multiplicative,
    }
    for name, tensor in maps.items():
        if tensor is not None:
            save_image(tensor.clamp(0, 1).numpy(), components / f"{name}.png")
    if output.residual_add is not None:
        save_image((output.residual_add.numpy() + 1.0) / 2.0, components / "residual_add.png")
    if output.residual_mul is not None:
        save_image(output.residual_mul.numpy() / 2.0, components / "residual_mul.png")
    weights = {
        "weight_coarse": output.weight_coarse,
        "weight_additive": output.weight_additive,
        "weight_multiplicative": output.weight_multiplicative,
    }
    for name, tensor in weights.items():
        if tensor is not None:
            save_image(gray(tensor), components / f"{name}.png")


def _cmd_derain(args: argparse.Namespace) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    model.eval()
    in_path = Path(args.input)
    out_path = Path(args.output)
    components = Path(args.components) if args.components else None
    if in_path.is_dir():
        pngs = sorted(in_path.glob("*.png"))
        if not pngs:
            raise ConfigurationError(f"no .png files in {in_path}")
        for png in pngs:
            _derain_one(model, png, out_path / png.name, None)
        print(f"derained {len(pngs)} images into {out_path}")
    else:
        _derain_one(model, in_path, out_path, components)
        print(f"derained {in_path} -> {out_path}")
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = _train_config_from_args(args)
    rows = run_ablation(args.grid, config)
    print("variant\tpsnr_db\tssim\tparameters")
    for row in rows:
        print(f"{row.name}\t{row.mean_psnr:.4f}\t{row.mean_ssim:.6f}\t{row.parameters}")
    print(f"table: {Path(config.log_dir) / f'ablation_{args.grid}.tsv'}")
    return 0


def _cmd_inspect(args: argparse.Namespace) -> int:
    model, _ = load_checkpoint(args.checkpoint)
    model.eval()
    image = load_image(args.input)
    features = model.inspect_features(torch.from_numpy(image))
    if args.stage not in features:
        raise ConfigurationError(
            f"stage {args.stage!r} not available; this variant offers {sorted(features)}"
        )
    maps = features[args.stage][0]
    try:
        channels = [int(c) for c in args.channels.split(",") if c.strip() != ""]
    except ValueError as exc:
        raise ConfigurationError(f"bad --channels value {args.channels!r}") from exc
    if not channels:
        raise ConfigurationError("no channels requested")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = ["channel\tmin\tmax"]
    for c in channels:
        if not 0 <= c < maps.shape[0]:
            raise ConfigurationError(f"channel {c} out of range [0, {maps.shape[0]})")
        fmap = maps[c].numpy().astype(np.float64)
        lo, hi = float(fmap.min()), float(fmap.max())
        norm = (fmap - lo) / (hi - lo) if hi > lo else np.zeros_like(fmap)
        save_image(np.repeat(norm[None, None], 3, axis=1), out_dir / f"{args.stage}_c{c:03d}.png")
        stats.append(f"{c}\t{lo:.6e}\t{hi:.6e}")
    (out_dir / f"{args.stage}_stats.tsv").write_text("\n".join(stats) + "\n")
    print(f"wrote {len(channels)} feature maps to {out_dir}")
    return 0


def _cmd_params(args: argparse.Namespace) -> int:
    variant = _variant_from_args(args) or VariantConfig()
    model = GlaHrrNet(variant)
    for name, module in (
        ("sca", model.sca),
        ("additive", model.additive),
        ("multiplicative", model.multiplicative),
        ("blend", model.blend),
    ):
        if module is not None:
            print(f"{name}\t{parameter_count(module)}")
    print(f"total\t{parameter_count(model)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glahrr", description="Heavy-rain removal: synthesis, training, inference."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synthesize", help="render a synthetic rain/clean dataset")
    p.add_argument("--n", type=int, required=True, help="number of pairs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--model", choices=["rf", "ats"], default="rf")
    p.add_argument("--height", type=int, default=128)
    p.add_argument("--width", type=int, default=192)
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("train", help="train a model")
    _add_train_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a dataset")
    p.add_argument("--checkpoint")
    p.add_argument("--stub", help="'identity' scores the rainy input itself")
    p.add_argument("--data", help=f"dataset directory (default: ${DATA_ENV_VAR})")
    p.add_argument("--out", help="write a TSV report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("derain", help="run a checkpoint on an image or directory")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--components", help="directory for estimates, residuals, weight maps")
    p.set_defaults(func=_cmd_derain)

    p = sub.add_parser("ablate", help="train and score a variant grid")
    p.add_argument("--grid", choices=["subnets", "sca_block"], required=True)
    _add_train_flags(p)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("inspect", help="dump normalized feature maps")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stage", choices=["sca", "add", "mul"], default="sca")
    p.add_argument("--channels", default="0", help="comma-separated channel indices")
    p.set_defaults(func=_cmd_inspect)

    p = sub.add_parser("params", help="print parameter counts for a variant")
    _add_variant_flags(p)
    p.set_defaults(func=_cmd_params)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return int(args.func(args) or 0)
    except GlahrrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FileNotFoundError, NotADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
