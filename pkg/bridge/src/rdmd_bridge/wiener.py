"""Analytic Gaussian-prior noise prediction for protocol parity checks.

Mirrors the solver's in-process closed-form denoiser: for a prior with
DFT-diagonal spectrum S and a request carrying alpha_bar, the exact
posterior clean estimate per frequency is

    x0(f) = sqrt(ab) S(f) / (ab S(f) + 1 - ab) * x(f)

and the served eps is back-solved from it.  Math runs in float64; only
the wire is float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class WienerStub:
    prior: str = "smoothness"  # "smoothness" | "iid"
    s2: float = 1.0
    rho: float = 16.0

    def spectrum(self, shape_hw: tuple[int, int]) -> np.ndarray:
        if self.prior == "iid":
            return np.full(shape_hw, self.s2)
        if self.prior == "smoothness":
            fy = np.fft.fftfreq(shape_hw[0])[:, None]
            fx = np.fft.fftfreq(shape_hw[1])[None, :]
            return self.s2 / (1.0 + self.rho * (fx**2 + fy**2))
        raise ValueError(f"unknown prior {self.prior!r}")

    def predict_eps(self, x: np.ndarray, alpha_bar: float) -> np.ndarray:
        ab = float(alpha_bar)
        x64 = np.asarray(x, dtype=np.float64)
        H, W = x64.shape[1], x64.shape[2]
        S = self.spectrum((H, W))[:, : W // 2 + 1]
        gain = np.sqrt(ab) * S / (ab * S + (1.0 - ab))
        x0 = np.fft.irfft2(gain * np.fft.rfft2(x64, axes=(-2, -1)), s=(H, W), axes=(-2, -1))
        eps = (x64 - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)
        return eps.astype(np.float32)
