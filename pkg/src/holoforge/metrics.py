"""Evaluation-only image quality metrics.

These deliberately do not touch the autograd stack: `ssim_eval` recomputes
structural similarity with direct shift-and-accumulate window sums, so it
can serve as an oracle for the differentiable version rather than a
re-export of it.
"""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 99.0
_MSE_FLOOR = 1e-10


def _plane(img: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(img, dtype=np.float64)
    squeezed = arr.squeeze()
    if squeezed.ndim != 2:
        raise ValueError(f"{name} must reduce to a single 2-d channel, got shape {arr.shape}")
    return squeezed


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for [0,1] images (peak fixed at 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"psnr: shapes differ, {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return float(10.0 * np.log10(1.0 / mse))


def _gauss2d(window: int, sigma: float) -> np.ndarray:
    half = (window - 1) / 2.0
    t = np.arange(window, dtype=np.float64) - half
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    g /= g.sum()
    return np.outer(g, g)


def _windowed(img: np.ndarray, kern: np.ndarray) -> np.ndarray:
    """Weighted local sums over all fully interior windows."""
    k = kern.shape[0]
    oh, ow = img.shape[0] - k + 1, img.shape[1] - k + 1
    out = np.zeros((oh, ow), dtype=np.float64)
    for i in range(k):
        for j in range(k):
            out += kern[i, j] * img[i:i + oh, j:j + ow]
    return out


def ssim_eval(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
              data_range: float = 1.0) -> float:
    """Mean SSIM over valid Gaussian windows; single-channel only."""
    x = _plane(a, "first image")
    y = _plane(b, "second image")
    if x.shape != y.shape:
        raise ValueError(f"ssim_eval: shapes differ, {x.shape} vs {y.shape}")
    if window % 2 == 0:
        raise ValueError(f"ssim_eval: window must be odd, got {window}")
    if window > min(x.shape):
        raise ValueError(f"ssim_eval: window {window} exceeds image extent {x.shape}")

    kern = _gauss2d(window, sigma)
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2

    mu_x = _windowed(x, kern)
    mu_y = _windowed(y, kern)
    var_x = _windowed(x * x, kern) - mu_x * mu_x
    var_y = _windowed(y * y, kern) - mu_y * mu_y
    cov = _windowed(x * y, kern) - mu_x * mu_y

    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))
