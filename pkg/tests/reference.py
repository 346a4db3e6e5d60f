"""Independent reference implementations used as test oracles.

Everything here deliberately avoids the package's own FFT/vectorized
paths: convolutions are direct O(n^2 k^2) loops, the prior covariance is
materialized as a dense matrix, and metrics run as explicit sliding
windows.  Slow and obviously correct.
"""

from __future__ import annotations

import math

import numpy as np


def naive_circular_conv(x: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Direct spatial-domain circular convolution of (C, H, W) with taps."""
    C, H, W = x.shape
    kh, kw = taps.shape
    ci, cj = kh // 2, kw // 2
    out = np.zeros_like(x)
    for c in range(C):
        for i in range(H):
            for j in range(W):
                acc = 0.0
                for di in range(kh):
                    for dj in range(kw):
                        acc += taps[di, dj] * x[c, (i - (di - ci)) % H, (j - (dj - cj)) % W]
                out[c, i, j] = acc
    return out


def otf_direct(taps: np.ndarray, H: int, W: int) -> np.ndarray:
    """Circulant eigenvalues by direct DFT over tap offsets."""
    kh, kw = taps.shape
    ci, cj = kh // 2, kw // 2
    fy = np.arange(H)[:, None] / H
    fx = np.arange(W)[None, :] / W
    otf = np.zeros((H, W), dtype=complex)
    for i in range(kh):
        for j in range(kw):
            otf += taps[i, j] * np.exp(-2j * np.pi * (fy * (i - ci) + fx * (j - cj)))
    return otf


def dense_prior_covariance(S: np.ndarray) -> np.ndarray:
    """Materialize the DFT-diagonal covariance as an (n, n) real matrix."""
    H, W = S.shape
    n = H * W
    C = np.zeros((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        col = np.fft.ifft2(S * np.fft.fft2(e.reshape(H, W))).real
        C[:, k] = col.ravel()
    return C


def dense_posterior_mean(S: np.ndarray, alpha_bar: float, x_t: np.ndarray) -> np.ndarray:
    """E[x0 | x_t] for x_t = sqrt(ab) x0 + sqrt(1-ab) eps, x0 ~ N(0, C)."""
    H, W = x_t.shape[1], x_t.shape[2]
    C = dense_prior_covariance(S)
    A = alpha_bar * C + (1.0 - alpha_bar) * np.eye(H * W)
    out = np.empty_like(x_t)
    for c in range(x_t.shape[0]):
        rhs = np.linalg.solve(A, x_t[c].ravel())
        out[c] = (np.sqrt(alpha_bar) * (C @ rhs)).reshape(H, W)
    return out


def naive_mse(a: np.ndarray, b: np.ndarray) -> float:
    """Two-pass scalar-loop MSE on clamped values."""
    af = np.clip(a, 0.0, 1.0).ravel()
    bf = np.clip(b, 0.0, 1.0).ravel()
    total = 0.0
    for i in range(af.size):
        d = float(af[i]) - float(bf[i])
        total += d * d
    return total / af.size


def naive_psnr(a: np.ndarray, b: np.ndarray) -> float:
    err = naive_mse(a, b)
    if err == 0.0:
        return 99.0
    return min(99.0, 10.0 * math.log10(1.0 / err))


def naive_ssim(a: np.ndarray, b: np.ndarray, window: int = 11, std: float = 1.5) -> float:
    """Direct per-pixel sliding-window SSIM with symmetric padding."""
    r = np.arange(window) - (window - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * std**2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = 0.01**2, 0.03**2
    half = window // 2

    a = np.clip(a, 0.0, 1.0)
    b = np.clip(b, 0.0, 1.0)
    channel_means = []
    for c in range(a.shape[0]):
        ap = np.pad(a[c], half, mode="symmetric")
        bp = np.pad(b[c], half, mode="symmetric")
        H, W = a.shape[1], a.shape[2]
        vals = np.empty((H, W))
        for i in range(H):
            for j in range(W):
                wa = ap[i : i + window, j : j + window]
                wb = bp[i : i + window, j : j + window]
                mu_a = float((w * wa).sum())
                mu_b = float((w * wb).sum())
                va = float((w * wa * wa).sum()) - mu_a * mu_a
                vb = float((w * wb * wb).sum()) - mu_b * mu_b
                cov = float((w * wa * wb).sum()) - mu_a * mu_b
                vals[i, j] = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
                    (mu_a**2 + mu_b**2 + c1) * (va + vb + c2)
                )
        channel_means.append(float(vals.mean()))
    return float(np.mean(channel_means))
