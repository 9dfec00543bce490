"""Full-reference image quality: PSNR and SSIM for images in ``[0, 1]``."""

from __future__ import annotations

import numpy as np

from .tensor import ShapeError, Tensor

PSNR_MSE_FLOOR = 1e-12


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes {list(a.shape)} and {list(b.shape)} differ")
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB with peak 1.0; identical images give 120 dB."""
    a, b = _pair(a, b)
    mse = max(float(np.mean((a - b) ** 2)), PSNR_MSE_FLOOR)
    return 10.0 * np.log10(1.0 / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = g.size
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim(a, b, window: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean SSIM with a Gaussian window, computed per channel then averaged.

    Only window positions fully inside the image contribute.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < window or a.shape[1] < window:
        raise ShapeError(f"SSIM needs images of at least {window}x{window}, got {a.shape[0]}x{a.shape[1]}")
    g = gaussian_window(window, sigma)
    c1, c2 = (k1 * 1.0) ** 2, (k2 * 1.0) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, g), _filter_valid(y, g)
        sxx = _filter_valid(x * x, g) - mx * mx
        syy = _filter_valid(y * y, g) - my * my
        sxy = _filter_valid(x * y, g) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))


def batch_scores(restored: np.ndarray, reference: np.ndarray) -> tuple[float, float]:
    """Mean PSNR and SSIM over a stack of images."""
    p = [psnr(r, g) for r, g in zip(restored, reference)]
    s = [ssim(r, g) for r, g in zip(restored, reference)]
    return float(np.mean(p)), float(np.mean(s))
