"""Image and tensor quality metrics: PSNR, SSIM, per-pixel L2.

Tensors are NHWC or HWC or HW arrays in a normalized range (peak 1.0 by
default). PSNR of identical tensors is ``math.inf``.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import ImageTooSmall, ShapeMismatch

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l2_per_pixel(a, b) -> float:
    """Mean squared difference per element."""
    a, b = _pair(a, b)
    if a.size == 0:
        raise ShapeMismatch("empty tensors")
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = l2_per_pixel(a, b)
    if mse == 0.0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / mse))


def format_db(value: float) -> str:
    return "inf" if math.isinf(value) else f"{value:.2f}"


def gaussian_1d(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, win1d: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation over the first two axes of an (H, W) image."""
    k = len(win1d)
    h, w = img.shape
    rows = sum(win1d[i] * img[i:h - k + 1 + i, :] for i in range(k))
    return sum(win1d[j] * rows[:, j:w - k + 1 + j] for j in range(k))


def _ssim_plane(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    g = gaussian_1d()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx, my = _filter_valid(x, g), _filter_valid(y, g)
    sxx = _filter_valid(x * x, g) - mx * mx
    syy = _filter_valid(y * y, g) - my * my
    sxy = _filter_valid(x * y, g) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def _planes(a: np.ndarray) -> list[np.ndarray]:
    if a.ndim == 2:
        return [a]
    if a.ndim == 3:
        return [a[:, :, c] for c in range(a.shape[2])]
    if a.ndim == 4:
        return [a[n, :, :, c] for n in range(a.shape[0]) for c in range(a.shape[3])]
    raise ShapeMismatch(f"expected a 2-, 3- or 4-d image, got {a.ndim}-d")


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean local SSIM (11x11 Gaussian window, sigma 1.5), averaged over channels."""
    a, b = _pair(a, b)
    pa, pb = _planes(a), _planes(b)
    h, w = pa[0].shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ImageTooSmall(f"image {h}x{w} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    return float(np.mean([_ssim_plane(x, y, data_range) for x, y in zip(pa, pb)]))
