#!/usr/bin/env python3
"""Overfit a tiny synthetic set and report train-set PSNR.

Renders 4 rain/clean pairs, trains the full model for 500 steps at 64x96,
then scores the training images themselves. A healthy build reaches a mean
train PSNR of 28 dB or more; expect roughly 10-15 minutes on one CPU core.

Usage:
    python3 scripts/overfit_sanity.py --work /tmp/overfit
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from glahrr.checkpoint import load_checkpoint
from glahrr.data import PairedDataset
from glahrr.synth import build_synthetic_dataset
from glahrr.training import TrainConfig, evaluate_model, train


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--work", required=True, help="working directory for data and artifacts")
    parser.add_argument("--pairs", type=int, default=4)
    parser.add_argument("--steps", type=int, default=500)
    parser.add_argument("--data-seed", type=int, default=11)
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

    # batch = dataset size, so one step per epoch and epochs = steps
    config = TrainConfig(
        data_dir=str(data_dir),
        crop_h=64,
        crop_w=96,
        batch_size=args.pairs,
        epochs=args.steps,
        base_lr=args.lr,
        halve_at_epoch=args.steps,
        seed=args.train_seed,
        checkpoint_dir=str(work / "checkpoints"),
        log_dir=str(work / "logs"),
    )

    start = time.time()
    result = train(config, dataset)
    elapsed = time.time() - start
    print(f"trained {result.steps} steps in {elapsed:.0f} s, final loss {result.final_loss:.4e}")

    model, _ = load_checkpoint(result.checkpoint_path)
    report = evaluate_model(model, dataset)
    for row in report.rows:
        print(f"{row.image_id}\t{row.psnr_db:.2f} dB\t{row.ssim:.4f}")
    verdict = "OK" if report.mean_psnr >= 28.0 else "LOW"
    print(f"mean train PSNR {report.mean_psnr:.2f} dB (target >= 28) [{verdict}]")
    return 0 if report.mean_psnr >= 28.0 else 1


if __name__ == "__main__":
    raise SystemExit(main())
