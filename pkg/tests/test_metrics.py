import math

import numpy as np
import pytest
from skimage.metrics import structural_similarity

from glahrr.errors import SizeError
from glahrr.metrics import MetricReport, MetricRow, psnr, ssim


class TestPSNR:
    def test_identical_images_give_infinity(self):
        a = np.random.default_rng(0).random((1, 3, 8, 8))
        assert psnr(a, a) == math.inf

    def test_half_range_constant_oracle(self):
        a = np.zeros((1, 3, 4, 4))
        b = np.full((1, 3, 4, 4), 0.5)
        # mse = 0.25 -> 10*log10(4)
        assert psnr(a, b) == pytest.approx(6.020599913279624, abs=1e-12)

    def test_full_range_is_zero_db(self):
        assert psnr(np.zeros((1, 3, 4, 4)), np.ones((1, 3, 4, 4))) == pytest.approx(0.0, abs=1e-12)

    def test_monotone_in_noise_level(self):
        rng = np.random.default_rng(1)
        clean = rng.random((1, 3, 16, 16))
        values = []
        for sigma in (0.01, 0.03, 0.1, 0.3):
            noisy = clean + rng.normal(0, sigma, clean.shape)
            values.append(psnr(clean, noisy))
        assert values == sorted(values, reverse=True)

    def test_shape_mismatch(self):
        with pytest.raises(SizeError):
            psnr(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 5)))


class TestSSIM:
    def test_identical_images_give_one(self):
        a = np.random.default_rng(2).random((1, 3, 16, 16))
        assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)

    def test_constant_black_vs_white_oracle(self):
        a = np.zeros((1, 3, 16, 16))
        b = np.ones((1, 3, 16, 16))
        # means-only term: C1 / (1 + C1) with C1 = 0.01**2
        expected = 1e-4 / (1.0 + 1e-4)
        assert ssim(a, b) == pytest.approx(expected, abs=1e-12)

    def test_matches_skimage_gaussian_reference(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            a = rng.random((1, 3, 24, 32))
            b = np.clip(a + rng.normal(0, 0.08, a.shape), 0, 1)
            ref = np.mean(
                [
                    structural_similarity(
                        a[0, c],
                        b[0, c],
                        gaussian_weights=True,
                        sigma=1.5,
                        use_sample_covariance=False,
                        data_range=1.0,
                    )
                    for c in range(3)
                ]
            )
            assert ssim(a, b) == pytest.approx(ref, abs=1e-6)

    def test_near_identical_scores_high(self):
        a = np.random.default_rng(4).random((1, 3, 16, 16))
        assert ssim(a, np.clip(a + 1e-4, 0, 1)) > 0.999

    def test_symmetric(self):
        rng = np.random.default_rng(5)
        a, b = rng.random((1, 3, 16, 16)), rng.random((1, 3, 16, 16))
        assert ssim(a, b) == ssim(b, a)

    def test_too_small_image_rejected(self):
        with pytest.raises(SizeError):
            ssim(np.zeros((1, 3, 10, 16)), np.zeros((1, 3, 10, 16)))

    def test_wrong_rank_rejected(self):
        with pytest.raises(SizeError):
            ssim(np.zeros((3, 16, 16)), np.zeros((3, 16, 16)))

    def test_batch_is_averaged(self):
        rng = np.random.default_rng(6)
        a = rng.random((2, 3, 16, 16))
        b = np.clip(a + rng.normal(0, 0.05, a.shape), 0, 1)
        per_item = (ssim(a[:1], b[:1]) + ssim(a[1:], b[1:])) / 2
        assert ssim(a, b) == pytest.approx(per_item, abs=1e-12)


class TestMetricReport:
    def test_means_and_tsv(self, tmp_path):
        report = MetricReport(
            rows=[MetricRow("0000", 20.0, 0.8), MetricRow("0001", 30.0, 0.9)],
            parameter_count=123,
            seconds_per_image=0.5,
        )
        assert report.mean_psnr == pytest.approx(25.0)
        assert report.mean_ssim == pytest.approx(0.85)
        report.to_tsv(tmp_path / "r.tsv")
        lines = (tmp_path / "r.tsv").read_text().splitlines()
        assert lines[0] == "image_id\tpsnr_db\tssim"
        assert lines[1].startswith("0000\t20.000000")
        assert lines[3].startswith("mean\t25.000000")
        assert any(line.startswith("# parameters\t123") for line in lines)

    def test_from_rows(self):
        report = MetricReport.from_rows([("a", 10.0, 0.5)])
        assert report.rows[0].image_id == "a"
        assert math.isnan(MetricReport().mean_psnr)
