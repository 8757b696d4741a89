"""PSNR and SSIM."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ConfigurationError, ShapeError

PSNR_CAP = 99.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(reference, test):
    a = np.asarray(reference, dtype=np.float64)
    b = np.asarray(test, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def psnr(reference, test, peak: float = 1.0, cap: float = PSNR_CAP) -> float:
    """``10 log10(peak^2 / MSE)`` over all pixels and channels.

    An exact match has infinite PSNR; ``cap`` is returned instead so reports
    stay finite and JSON-serializable.
    """
    if peak <= 0:
        raise ConfigurationError("peak must be > 0")
    a, b = _pair(reference, test)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return cap
    return min(10.0 * math.log10(peak * peak / mse), cap)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    r = np.arange(size) - size // 2
    g = np.exp(-(r ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    out = correlate1d(img, w, axis=0, mode="constant")
    out = correlate1d(out, w, axis=1, mode="constant")
    p = w.size // 2
    return out[p:img.shape[0] - p, p:img.shape[1] - p]


def _ssim_channel(a, b, w, c1, c2):
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    s_aa = _filter_valid(a * a, w) - mu_a ** 2
    s_bb = _filter_valid(b * b, w) - mu_b ** 2
    s_ab = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (s_aa + s_bb + c2)
    return float(np.mean(num / den))


def ssim(reference, test) -> float:
    """Mean SSIM with an 11x11 Gaussian window (sigma 1.5), valid region only.

    Inputs are expected in ``[0, 1]``; color images average the channel SSIMs.
    """
    a, b = _pair(reference, test)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < SSIM_WINDOW or a.shape[1] < SSIM_WINDOW:
        raise ConfigurationError(f"image {a.shape[:2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    if np.array_equal(a, b):
        return 1.0
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    return float(np.mean([_ssim_channel(a[..., c], b[..., c], w, c1, c2) for c in range(a.shape[2])]))
