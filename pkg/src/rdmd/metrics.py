"""Distortion metrics: PSNR and SSIM on [0, 1] images.

Inputs are clamped to [0, 1] before comparison so metric values match
what a quantizing viewer would see.  SSIM uses the universal reference
constants: 11x11 Gaussian window with std 1.5, K1 = 0.01, K2 = 0.03,
dynamic range 1.0, symmetric boundary padding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ShapeError
from .image import as_image

PSNR_CAP_DB = 99.0

_SSIM_WINDOW = 11
_SSIM_STD = 1.5
_K1 = 0.01
_K2 = 0.03


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = as_image(a, "a")
    b = as_image(b, "b")
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return np.clip(a, 0.0, 1.0), np.clip(b, 0.0, 1.0)


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """10 log10(1 / MSE) in dB, capped at 99.0 (the zero-MSE sentinel)."""
    err = mse(a, b)
    if err == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(1.0 / err)))


def _gaussian_window(size: int, std: float) -> np.ndarray:
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * std**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b) -> float:
    """Mean local SSIM, averaged over channels."""
    a, b = _pair(a, b)
    if a.shape[1] < _SSIM_WINDOW or a.shape[2] < _SSIM_WINDOW:
        raise ParameterError(
            f"image plane {a.shape[1]}x{a.shape[2]} is smaller than the "
            f"{_SSIM_WINDOW}x{_SSIM_WINDOW} SSIM window"
        )
    window = _gaussian_window(_SSIM_WINDOW, _SSIM_STD)
    c1 = _K1**2
    c2 = _K2**2

    def smooth(img: np.ndarray) -> np.ndarray:
        return ndimage.convolve(img, window, mode="reflect")

    per_channel = []
    for c in range(a.shape[0]):
        ac, bc = a[c], b[c]
        mu_a = smooth(ac)
        mu_b = smooth(bc)
        var_a = smooth(ac * ac) - mu_a * mu_a
        var_b = smooth(bc * bc) - mu_b * mu_b
        cov = smooth(ac * bc) - mu_a * mu_b
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        per_channel.append(float(np.mean(num / den)))
    return float(np.mean(per_channel))


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    mse: float


def report(a, b) -> MetricReport:
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b), mse=mse(a, b))
