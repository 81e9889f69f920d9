"""Restoration quality metrics (MSE, SSIM, PSNR) and the bilinear baseline.

SSIM follows the standard reference formulation (11x11 Gaussian window,
sigma 1.5, k1 = 0.01, k2 = 0.03 on dynamic range L = 1) with circular window
wrapping, consistent with the periodic image model used everywhere else.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def mse(pred, gt) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {gt.shape}")
    return float(np.mean((pred - gt) ** 2))


def psnr(pred, gt, peak=1.0) -> float:
    """10 log10(peak^2 / mse); identical images give +inf."""
    err = mse(pred, gt)
    if err == 0.0:
        return math.inf
    gt = np.asarray(gt, dtype=np.float64)
    if peak == 1.0 and (gt.min() < 0.0 or gt.max() > 1.0):
        peak = float(gt.max() - gt.min())
        warnings.warn(f"data outside [0, 1]; using observed dynamic range {peak:.3g} as peak")
    return float(10.0 * np.log10(peak**2 / err))


def _gaussian_window(size, sigma):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(pred, gt, peak=1.0) -> float:
    """Mean local structural similarity with circular boundary handling."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {gt.shape}")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2

    def smooth(img):
        return convolve(img, win, mode="wrap")

    mu_p = smooth(pred)
    mu_g = smooth(gt)
    var_p = smooth(pred * pred) - mu_p**2
    var_g = smooth(gt * gt) - mu_g**2
    cov = smooth(pred * gt) - mu_p * mu_g
    num = (2 * mu_p * mu_g + c1) * (2 * cov + c2)
    den = (mu_p**2 + mu_g**2 + c1) * (var_p + var_g + c2)
    return float(np.mean(num / den))


def bilinear_upsample(observed, omega=None) -> np.ndarray:
    """Fill the odd-lattice observation by periodic bilinear interpolation.

    ``observed`` is the zero-filled image whose values live on the (odd, odd)
    lattice; lattice values are preserved and every missing pixel is the
    average of its 2 or 4 nearest lattice neighbours with wrap-around.
    """
    observed = np.asarray(observed, dtype=np.float64)
    n = observed.shape[0]
    lattice = np.zeros((n, n), dtype=np.uint8)
    lattice[0::2, 0::2] = 1
    if omega is not None and not np.array_equal(np.asarray(omega, dtype=np.uint8), lattice):
        raise ValueError("bilinear baseline expects the odd-odd lattice mask")
    out = observed.copy()
    # horizontal pass on lattice rows, then vertical pass everywhere
    out[0::2, 1::2] = (out[0::2, 0::2] + np.roll(out[0::2, 0::2], -1, axis=1)) / 2.0
    out[1::2, :] = (out[0::2, :] + np.roll(out[0::2, :], -1, axis=0)) / 2.0
    return out


@dataclass
class MetricReport:
    """Per-image metrics and aggregates per method label."""

    per_image: dict = field(default_factory=dict)  # label -> list of (mse, ssim, psnr)
    failures: dict = field(default_factory=dict)   # label -> list of (index, message)

    def aggregate(self, label):
        triples = self.per_image[label]
        stats = {}
        for name, values in zip(("mse", "ssim", "psnr"), zip(*triples)):
            arr = np.asarray(values, dtype=np.float64)
            if np.any(np.isinf(arr)):
                stats[name] = (math.inf, math.nan)
            else:
                stats[name] = (float(arr.mean()), float(arr.std()))
        return stats

    def to_csv(self) -> str:
        lines = ["label,mse_mean,mse_std,ssim_mean,ssim_std,psnr_mean,psnr_std"]
        for label in self.per_image:
            agg = self.aggregate(label)
            cells = [label]
            for name in ("mse", "ssim", "psnr"):
                mean, std = agg[name]
                cells.append("inf" if math.isinf(mean) else f"{mean:.6e}")
                cells.append("nan" if math.isnan(std) else f"{std:.6e}")
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def evaluate(methods, testset) -> MetricReport:
    """Score every (label, restorer) on the ground-truth test set.

    Each restorer receives the ground-truth image (and typically masks it
    itself before restoring); per-image failures are recorded, not fatal.
    """
    if not testset:
        raise ValueError("test set is empty")
    report = MetricReport()
    for label, restorer in methods:
        rows = []
        fails = []
        for idx, gt in enumerate(testset):
            try:
                restored = restorer(gt)
                rows.append((mse(restored, gt), ssim(restored, gt), psnr(restored, gt)))
            except Exception as exc:  # noqa: BLE001 - recorded per image
                fails.append((idx, str(exc)))
        report.per_image[label] = rows
        if fails:
            report.failures[label] = fails
    return report
