import math

import numpy as np
import pytest

from sparsedense.metrics import (
    SSIM_K1,
    SSIM_K2,
    SSIM_SIGMA,
    SSIM_WINDOW,
    bilinear_upsample,
    evaluate,
    mse,
    psnr,
    ssim,
)
from sparsedense.sampling import apply_mask, apply_shift, Shift, make_sparse_dense_masks


def ssim_reference(pred, gt, peak=1.0):
    """Per-pixel loop implementation with wrapped windows (independent oracle)."""
    n = pred.shape[0]
    half = SSIM_WINDOW // 2
    coords = np.arange(SSIM_WINDOW) - half
    g = np.exp(-(coords**2) / (2.0 * SSIM_SIGMA**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    total = 0.0
    for r in range(n):
        for c in range(n):
            mu_p = mu_g = pp = gg = pg = 0.0
            for dr in range(SSIM_WINDOW):
                for dc in range(SSIM_WINDOW):
                    w = win[dr, dc]
                    p = pred[(r + dr - half) % n, (c + dc - half) % n]
                    q = gt[(r + dr - half) % n, (c + dc - half) % n]
                    mu_p += w * p
                    mu_g += w * q
                    pp += w * p * p
                    gg += w * q * q
                    pg += w * p * q
            var_p = pp - mu_p**2
            var_g = gg - mu_g**2
            cov = pg - mu_p * mu_g
            total += ((2 * mu_p * mu_g + c1) * (2 * cov + c2)
                      / ((mu_p**2 + mu_g**2 + c1) * (var_p + var_g + c2)))
    return total / (n * n)


class TestMse:
    def test_identical_zero(self):
        x = np.random.default_rng(0).random((4, 4))
        assert mse(x, x) == 0.0

    def test_constant_offset(self):
        gt = np.random.default_rng(1).random((4, 4))
        assert abs(mse(gt + 0.1, gt) - 0.01) <= 1e-15

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(2)
        pred, gt = rng.random((2, 6, 6))
        acc = 0.0
        for r in range(6):
            for c in range(6):
                acc += (pred[r, c] - gt[r, c]) ** 2
        assert abs(mse(pred, gt) - acc / 36) <= 1e-15

    def test_symmetry(self):
        rng = np.random.default_rng(3)
        a, b = rng.random((2, 4, 4))
        assert mse(a, b) == mse(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mse(np.zeros((2, 2)), np.zeros((4, 4)))


class TestPsnr:
    def test_closed_form(self):
        gt = np.zeros((10, 10))
        pred = gt + 0.1  # mse = 0.01
        assert abs(psnr(pred, gt) - 20.0) <= 1e-12

    def test_identical_infinite(self):
        x = np.random.default_rng(4).random((4, 4))
        assert psnr(x, x) == math.inf

    def test_matches_independent_formula(self):
        rng = np.random.default_rng(5)
        pred, gt = rng.random((2, 8, 8))
        expected = 10.0 * math.log10(1.0 / mse(pred, gt))
        assert abs(psnr(pred, gt) - expected) <= 1e-9

    def test_out_of_range_warns_and_uses_dynamic_range(self):
        gt = np.random.default_rng(6).random((4, 4)) * 4.0
        with pytest.warns(UserWarning, match="dynamic range"):
            psnr(gt + 0.1, gt)


class TestSsim:
    def test_identical_is_one(self):
        x = np.random.default_rng(7).random((16, 16))
        assert abs(ssim(x, x) - 1.0) <= 1e-12

    def test_matches_loop_reference(self):
        rng = np.random.default_rng(8)
        pred, gt = rng.random((2, 16, 16))
        assert abs(ssim(pred, gt) - ssim_reference(pred, gt)) <= 1e-10

    def test_inverted_binary_is_negative(self):
        rng = np.random.default_rng(9)
        gt = (rng.random((16, 16)) < 0.5).astype(float)
        value = ssim(1.0 - gt, gt)
        assert value < 0.0
        assert abs(value - ssim_reference(1.0 - gt, gt)) <= 1e-10

    def test_constant_images_closed_form(self):
        c1_img, c2_img = 0.3, 0.7
        pred = np.full((16, 16), c1_img)
        gt = np.full((16, 16), c2_img)
        c1 = (SSIM_K1) ** 2
        expected = (2 * c1_img * c2_img + c1) / (c1_img**2 + c2_img**2 + c1)
        assert abs(ssim(pred, gt) - expected) <= 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(10)
        a, b = rng.random((2, 16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_range_bound(self):
        rng = np.random.default_rng(11)
        a, b = rng.random((2, 16, 16))
        assert -1.0 <= ssim(a, b) <= 1.0


class TestShiftConsistency:
    def test_metrics_invariant_under_common_shift(self):
        rng = np.random.default_rng(12)
        pred, gt = rng.random((2, 16, 16))
        for s in [Shift(3, 5), Shift(8, 0), Shift(1, 15)]:
            ps, gs = apply_shift(pred, s), apply_shift(gt, s)
            assert abs(mse(ps, gs) - mse(pred, gt)) <= 1e-12
            assert abs(ssim(ps, gs) - ssim(pred, gt)) <= 1e-10
            assert abs(psnr(ps, gs) - psnr(pred, gt)) <= 1e-9


class TestBilinearUpsample:
    def test_constant_reproduced(self):
        n = 8
        omega = make_sparse_dense_masks(n)[0]
        observed = apply_mask(np.full((n, n), 0.6), omega)
        assert np.allclose(bilinear_upsample(observed), 0.6)

    def test_lattice_values_preserved(self):
        rng = np.random.default_rng(13)
        n = 8
        omega = make_sparse_dense_masks(n)[0]
        x = rng.random((n, n))
        observed = apply_mask(x, omega)
        out = bilinear_upsample(observed)
        assert np.array_equal(out[0::2, 0::2], x[0::2, 0::2])

    def test_bilinear_function_exact_in_interior(self):
        # a + b*i1 + c*i2 + d*i1*i2 sampled on the lattice is reproduced exactly
        # away from the wrap seam
        n = 16
        r, c = np.indices((n, n)).astype(float)
        x = 0.2 + 0.03 * c + 0.01 * r + 0.002 * r * c
        omega = make_sparse_dense_masks(n)[0]
        out = bilinear_upsample(apply_mask(x, omega))
        interior = np.s_[1:n - 2, 1:n - 2]
        assert np.max(np.abs(out[interior] - x[interior])) <= 1e-12

    def test_rejects_wrong_mask(self):
        n = 8
        with pytest.raises(ValueError, match="lattice"):
            bilinear_upsample(np.zeros((n, n)), omega=np.ones((n, n), dtype=np.uint8))


class TestEvaluate:
    def test_ground_truth_restorer_is_perfect(self):
        rng = np.random.default_rng(14)
        testset = [rng.random((16, 16)) for _ in range(3)]
        report = evaluate([("oracle", lambda x: x)], testset)
        agg = report.aggregate("oracle")
        assert agg["mse"] == (0.0, 0.0)
        assert agg["ssim"][0] == 1.0
        assert math.isinf(agg["psnr"][0])

    def test_failures_recorded_not_fatal(self):
        def broken(_):
            raise RuntimeError("boom")

        testset = [np.zeros((16, 16)), np.ones((16, 16))]
        report = evaluate([("bad", broken), ("id", lambda x: x)], testset)
        assert len(report.failures["bad"]) == 2
        assert len(report.per_image["id"]) == 2

    def test_csv_columns(self):
        testset = [np.random.default_rng(15).random((16, 16))]
        report = evaluate([("id", lambda x: x)], testset)
        lines = report.to_csv().strip().splitlines()
        assert lines[0] == "label,mse_mean,mse_std,ssim_mean,ssim_std,psnr_mean,psnr_std"
        assert lines[1].startswith("id,")

    def test_empty_testset_rejected(self):
        with pytest.raises(ValueError):
            evaluate([("id", lambda x: x)], [])
