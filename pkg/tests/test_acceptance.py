"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[Cnn] PASS`` line with the measured value and
its threshold (visible with ``pytest -s`` or in captured output). The two
training-based checks (C08, C09) dominate the runtime; the whole module
finishes in well under two hours on one CPU core.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
import torch

from glahrr import cli
from glahrr.checkpoint import load_checkpoint
from glahrr.data import PairedDataset
from glahrr.losses import LossWeights, edge_loss, mse_loss, total_loss
from glahrr.metrics import psnr, ssim
from glahrr.model import GlaHrrNet, VariantConfig, build_variant, parameter_count, xavier_init
from glahrr.synth import RainSceneRF, build_synthetic_dataset, compose_rf, invert_rf
from glahrr.training import TrainConfig, evaluate_model, train
from gradcheck import check_input_gradients, check_parameter_gradients

PARAM_BAND = (16_400_000, 30_500_000)


def _random_scene(seed: int, h: int = 64, w: int = 96) -> RainSceneRF:
    rng = np.random.default_rng(seed)
    return RainSceneRF(
        clean=rng.uniform(size=(1, 3, h, w)),
        rain=rng.uniform(0.0, 0.45, size=(1, 1, h, w)),
        fog=rng.uniform(0.0, 0.45, size=(1, 1, h, w)),
        atmospheric=float(rng.uniform(0.7, 1.0)),
    )


def _zero_module(module: torch.nn.Module) -> None:
    with torch.no_grad():
        for p in module.parameters():
            p.zero_()


def test_c01_compose_invert_round_trip():
    start = time.monotonic()
    worst = 0.0
    for i in range(50):
        scene = _random_scene(1000 + i)
        rainy = compose_rf(scene, clamp=False)
        recovered = invert_rf(rainy, scene)
        worst = max(worst, float(np.abs(recovered - scene.clean).max()))
    elapsed = time.monotonic() - start
    assert worst < 1e-5
    assert elapsed < 10.0
    print(f"[C01] PASS compose/invert round trip: max err {worst:.3e} < 1e-05 in {elapsed:.2f} s")


def test_c02_identity_special_cases():
    x = torch.rand(1, 3, 32, 48, generator=torch.Generator().manual_seed(2))
    model = build_variant(VariantConfig(), seed=2).eval()
    _zero_module(model.additive.head.out_conv)
    _zero_module(model.multiplicative.head.out_conv)
    with torch.no_grad():
        out = model(x)
    err_add = float((out.additive - x).abs().max())
    err_mul = float((out.multiplicative - x).abs().max())
    assert err_add < 1e-6 and err_mul < 1e-6
    print(
        f"[C02] PASS identity special cases: zeroed additive head err {err_add:.3e}, "
        f"unit multiplicative gain err {err_mul:.3e} (< 1e-06)"
    )


def test_c03_blend_equation_recomputes():
    model = build_variant(VariantConfig(), seed=3).eval()
    worst = 0.0
    for i in range(20):
        x = torch.rand(1, 3, 16, 24, generator=torch.Generator().manual_seed(100 + i))
        with torch.no_grad():
            out = model(x)
        recombined = (
            out.coarse * out.weight_coarse
            + out.additive * out.weight_additive
            + out.multiplicative * out.weight_multiplicative
        )
        worst = max(worst, float((out.fused - recombined).abs().max()))
    assert worst < 1e-6
    print(f"[C03] PASS blend equation: max recombination err {worst:.3e} < 1e-06 over 20 inputs")


def test_c04_shape_contract_200x300():
    model = build_variant(VariantConfig(), seed=4).eval()
    x = torch.rand(1, 3, 200, 300, generator=torch.Generator().manual_seed(4))
    with torch.no_grad():
        out = model(x)
    features = model.inspect_features(x)
    assert features["sca"].shape == (1, 256, 50, 75)
    assert out.features.shape == (1, 256, 50, 75)
    for estimate in (out.fused, out.coarse, out.additive, out.multiplicative):
        assert estimate.shape == (1, 3, 200, 300)
    print(
        "[C04] PASS shape contract: (1,3,200,300) input gives (1,256,50,75) features "
        "and (1,3,200,300) outputs"
    )


def test_c05_gradient_suite():
    from glahrr.blocks import (
        BlendBlock,
        ChannelAttention,
        ChannelInception,
        ResidualInception,
        SCABlock,
        SpatialAttention,
    )

    def rand(shape, seed):
        g = torch.Generator().manual_seed(seed)
        return torch.rand(*shape, generator=g, dtype=torch.float64)

    def seeded(module):
        xavier_init(module, seed=5)
        return module.double()

    start = time.monotonic()
    results = {}
    results["sa"] = check_parameter_gradients(seeded(SpatialAttention()), rand((1, 8, 10, 12), 50), eps=1e-6)
    results["ca"] = check_parameter_gradients(
        seeded(ChannelAttention(8, reduction=4)), rand((1, 8, 10, 12), 51), eps=1e-6
    )
    results["sca_block"] = check_parameter_gradients(
        seeded(SCABlock(8, 16, direction="down", reduction=4)), rand((1, 8, 10, 12), 52), eps=1e-6
    )
    results["rim"] = check_parameter_gradients(seeded(ResidualInception()), rand((1, 256, 6, 8), 53), eps=1e-6)
    results["cim"] = check_parameter_gradients(seeded(ChannelInception()), rand((1, 256, 6, 8), 54), eps=1e-6)

    blend = seeded(BlendBlock(3))
    companions = [rand((1, 3, 10, 12), s) for s in (55, 56)]
    results["blend"] = check_input_gradients(
        lambda t: torch.cat(blend([t, *companions]), dim=1), rand((1, 3, 10, 12), 57), eps=1e-6
    )

    ref = rand((1, 3, 10, 12), 58)
    results["edge_loss"] = check_input_gradients(
        lambda t: edge_loss(t, ref), rand((1, 3, 10, 12), 59), eps=1e-6
    )

    model = build_variant(VariantConfig(), seed=5).double().eval()
    target = 0.3 + 0.4 * rand((1, 3, 16, 24), 60)
    results["total_loss"] = check_input_gradients(
        lambda t: total_loss(model(t), target).total,
        0.3 + 0.4 * rand((1, 3, 16, 24), 61),
        n_coords=10,
        eps=1e-6,
    )

    elapsed = time.monotonic() - start
    worst = max(results.values())
    assert worst < 1e-3
    assert elapsed < 300.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in results.items())
    print(f"[C05] PASS gradient suite in {elapsed:.1f} s: worst rel err {worst:.2e} ({detail})")


def test_c06_metric_oracles():
    zeros = np.zeros((1, 3, 32, 32))
    halves = np.full((1, 3, 32, 32), 0.5)
    ones = np.ones((1, 3, 32, 32))
    p = psnr(zeros, halves)
    assert p == pytest.approx(6.0206, abs=1e-3)
    s01 = ssim(zeros, ones)
    assert s01 == pytest.approx(9.999e-5, abs=1e-7)
    a = np.random.default_rng(6).uniform(size=(1, 3, 32, 32))
    saa = ssim(a, a)
    assert saa == pytest.approx(1.0, abs=1e-12)
    print(
        f"[C06] PASS metric oracles: psnr(0,0.5)={p:.4f} dB, ssim(0,1)={s01:.4e}, "
        f"ssim(a,a)={saa:.1f}"
    )


def test_c07_loss_report_identities():
    g = torch.Generator().manual_seed(7)
    worst = 0.0
    for _ in range(5):
        target = torch.rand(2, 3, 12, 16, generator=g, dtype=torch.float64)
        fused = torch.rand(2, 3, 12, 16, generator=g, dtype=torch.float64)
        parts = [torch.rand(2, 3, 12, 16, generator=g, dtype=torch.float64) for _ in range(3)]
        from glahrr.model import ModelOutput

        output = ModelOutput(
            fused=fused,
            features=torch.zeros(2, 256, 3, 4, dtype=torch.float64),
            coarse=parts[0],
            additive=parts[1],
            multiplicative=parts[2],
        )
        report = total_loss(output, target, LossWeights())
        expect_inter = sum(float(mse_loss(p, target)) for p in parts)
        expect_final = float(mse_loss(fused, target)) + float(edge_loss(fused, target))
        worst = max(
            worst,
            abs(float(report.inter) - expect_inter),
            abs(float(report.final) - expect_final),
            abs(float(report.total) - (float(report.inter) + float(report.final))),
            abs(float(report.inter) - sum(report.values()[:3])),
        )
    assert worst < 1e-9
    print(f"[C07] PASS loss identities: worst deviation {worst:.2e} < 1e-09 with unit weights")


def test_c08_overfit_sanity(tmp_path):
    start = time.monotonic()
    dataset = build_synthetic_dataset(n=4, seed=11, out_dir=tmp_path / "data", height=64, width=96)
    config = TrainConfig(
        data_dir=str(tmp_path / "data"),
        crop_h=64,
        crop_w=96,
        batch_size=4,
        epochs=500,
        base_lr=1e-3,
        halve_at_epoch=500,
        seed=0,
        checkpoint_dir=str(tmp_path / "ckpt"),
        log_dir=str(tmp_path / "logs"),
    )
    result = train(config, dataset)
    model, _ = load_checkpoint(result.checkpoint_path)
    report = evaluate_model(model, dataset)
    elapsed = time.monotonic() - start
    assert result.steps == 500
    assert report.mean_psnr >= 28.0
    assert elapsed < 7200.0
    print(
        f"[C08] PASS overfit sanity: mean train PSNR {report.mean_psnr:.2f} dB >= 28 "
        f"after 500 steps in {elapsed:.0f} s"
    )


def test_c09_ablation_ordering(tmp_path):
    dataset = build_synthetic_dataset(n=64, seed=21, out_dir=tmp_path / "data", height=64, width=96)
    variants = {
        "coarse": VariantConfig(use_sca=True, use_add=False, use_mul=False),
        "additive": VariantConfig(use_sca=False, use_add=True, use_mul=False),
        "multiplicative": VariantConfig(use_sca=False, use_add=False, use_mul=True),
        "full": VariantConfig(),
    }
    scores = {}
    for name, variant in variants.items():
        config = TrainConfig(
            variant=variant,
            data_dir=str(tmp_path / "data"),
            crop_h=64,
            crop_w=96,
            batch_size=4,
            epochs=30,
            base_lr=1e-3,
            halve_at_epoch=30,
            seed=0,
            checkpoint_dir=str(tmp_path / "ckpt" / name),
            log_dir=str(tmp_path / "logs" / name),
        )
        result = train(config, dataset)
        model, _ = load_checkpoint(result.checkpoint_path)
        scores[name] = evaluate_model(model, dataset).mean_psnr
    singles = {k: v for k, v in scores.items() if k != "full"}
    assert all(scores["full"] >= v for v in singles.values()), scores
    detail = ", ".join(f"{k} {v:.2f}" for k, v in scores.items())
    print(f"[C09] PASS ablation ordering: full beats every single sub-net ({detail} dB)")


def test_c10_parameter_audit(capsys):
    count = parameter_count(GlaHrrNet(VariantConfig()))
    assert PARAM_BAND[0] <= count <= PARAM_BAND[1]
    assert cli.main(["params", "--variant", "full"]) == 0
    out = capsys.readouterr().out
    printed = dict(line.split("\t") for line in out.strip().splitlines())
    assert int(printed["total"]) == count
    with capsys.disabled():
        print(
            f"\n[C10] PASS parameter audit: {count:,} parameters inside "
            f"[{PARAM_BAND[0]:,}, {PARAM_BAND[1]:,}], matches the params verb"
        )


def test_c11_determinism(tmp_path):
    checkpoints = []
    for run in ("a", "b"):
        data_dir = tmp_path / f"data_{run}"
        build_synthetic_dataset(n=3, seed=77, out_dir=data_dir, height=48, width=64)
        config = TrainConfig(
            data_dir=str(data_dir),
            crop_h=16,
            crop_w=24,
            batch_size=3,
            epochs=10,
            base_lr=1e-4,
            halve_at_epoch=10,
            seed=7,
            dtype="float64",
            checkpoint_dir=str(tmp_path / f"ckpt_{run}"),
            log_dir=str(tmp_path / f"logs_{run}"),
        )
        result = train(config)
        assert result.steps == 10
        checkpoints.append(result.checkpoint_path.read_bytes())
    assert checkpoints[0] == checkpoints[1]

    files_a = sorted((tmp_path / "data_a").rglob("*"))
    files_b = sorted((tmp_path / "data_b").rglob("*"))
    assert [p.name for p in files_a] == [p.name for p in files_b]
    pairs = [(a, b) for a, b in zip(files_a, files_b) if a.is_file()]
    assert all(a.read_bytes() == b.read_bytes() for a, b in pairs)
    print(
        "[C11] PASS determinism: identical checkpoints after 10 float64 steps and "
        f"byte-identical datasets ({len(pairs)} files)"
    )
