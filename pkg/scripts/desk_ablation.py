#!/usr/bin/env python3
"""Train and score an ablation grid at desk scale.

Renders a 64-pair synthetic set and trains every variant in the chosen grid
under one shared schedule (64x96 crops, 30 epochs by default). Scores are
train-set sanity numbers for comparing variants against each other; they are
far below what full-scale training on a real benchmark would produce.

Usage:
    python3 scripts/desk_ablation.py --grid subnets --work /tmp/ablation
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from glahrr.data import PairedDataset
from glahrr.synth import build_synthetic_dataset
from glahrr.training import TrainConfig, run_ablation


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", choices=["subnets", "sca_block"], default="subnets")
    parser.add_argument("--work", required=True, help="working directory for data and artifacts")
    parser.add_argument("--pairs", type=int, default=64)
    parser.add_argument("--epochs", type=int, default=30)
    parser.add_argument("--data-seed", type=int, default=21)
    parser.add_argument("--train-seed", type=int, default=0)
    parser.add_argument("--lr", type=float, default=1e-3)
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    work = Path(args.work)

    data_dir = work / "data"
    if (data_dir / "manifest.tsv").exists():
        dataset = PairedDataset.from_manifest(data_dir / "manifest.tsv")
        print(f"reusing {len(dataset)} pairs from {data_dir}")
    else:
        dataset = build_synthetic_dataset(
            n=args.pairs, seed=args.data_seed, out_dir=data_dir, height=64, width=96
        )
        print(f"rendered {len(dataset)} pairs into {data_dir}")

    config = TrainConfig(
        data_dir=str(data_dir),
        crop_h=64,
        crop_w=96,
        batch_size=4,
        epochs=args.epochs,
        base_lr=args.lr,
        halve_at_epoch=args.epochs,
        seed=args.train_seed,
        checkpoint_dir=str(work / "checkpoints"),
        log_dir=str(work / "logs"),
    )

    start = time.time()
    rows = run_ablation(args.grid, config, dataset)
    print(f"grid finished in {time.time() - start:.0f} s")
    print(f"{'variant':28s}\t{'psnr_db':>8s}\t{'ssim':>8s}\t{'parameters':>11s}")
    for row in rows:
        print(f"{row.name:28s}\t{row.mean_psnr:8.3f}\t{row.mean_ssim:8.4f}\t{row.parameters:11d}")
    print(f"table: {Path(config.log_dir) / f'ablation_{args.grid}.tsv'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
