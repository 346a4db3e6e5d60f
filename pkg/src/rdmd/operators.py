"""Degradation forward models, their exact adjoints, and the simulator.

All convolutional operators use circular (periodic) boundaries, so they
are diagonalized by the 2-D DFT.  That choice makes the analytic
Gaussian-prior oracle exact and keeps every adjoint closed-form:

* blur        A x = k (*) x            A^T v = flip(k) (*) v
* sr_bicubic  A x = subsample(k (*) x) A^T v = flip(k) (*) zero_insert(v)
* mask        A x = m . x              A^T v = m . v   (self-adjoint)

Arithmetic is float64 throughout; quantization happens only in imgio.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ParameterError, ShapeError
from .image import Shape3, as_image, check_shape


@dataclass(frozen=True)
class Kernel:
    """A small 2-D filter with odd dimensions.

    Blur kernels are expected to sum to 1; that is validated by the
    self-check suite rather than enforced here, so deliberately broken
    kernels remain constructible for fault-injection tests.
    """

    taps: np.ndarray

    def __post_init__(self):
        taps = np.ascontiguousarray(self.taps, dtype=np.float64)
        if taps.ndim != 2:
            raise ParameterError(f"kernel taps must be 2-D, got ndim={taps.ndim}")
        if taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ParameterError(f"kernel dimensions must be odd, got {taps.shape}")
        if not np.all(np.isfinite(taps)):
            raise ParameterError("kernel taps contain NaN or Inf")
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    @property
    def height(self) -> int:
        return int(self.taps.shape[0])

    @property
    def width(self) -> int:
        return int(self.taps.shape[1])

    def normalization_error(self) -> float:
        return abs(float(self.taps.sum()) - 1.0)


def make_gaussian_kernel(size: int, std: float) -> Kernel:
    """Isotropic Gaussian taps on the integer grid, normalized to sum 1."""
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"size must be a positive odd int, got {size}")
    if not (std > 0.0):
        raise ParameterError(f"std must be > 0, got {std}")
    r = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g1 = np.exp(-(r**2) / (2.0 * std**2))
    taps = np.outer(g1, g1)
    return Kernel(taps / taps.sum())


def make_motion_kernel(size: int, length: float, angle_deg: float) -> Kernel:
    """Linear-motion stand-in: a straight line of point masses.

    ``round(length)`` unit masses at unit spacing along the given angle,
    centered in the kernel and splatted with bilinear weights, then
    normalized.  length=1 degenerates to a delta.
    """
    if size < 1 or size % 2 == 0:
        raise ParameterError(f"size must be a positive odd int, got {size}")
    if not (0.0 < length <= size):
        raise ParameterError(f"length must be in (0, size={size}], got {length}")
    n = max(1, int(round(length)))
    taps = np.zeros((size, size), dtype=np.float64)
    c = (size - 1) / 2.0
    theta = np.deg2rad(angle_deg)
    dy, dx = np.sin(theta), np.cos(theta)
    for k in range(n):
        s = k - (n - 1) / 2.0
        y, x = c + s * dy, c + s * dx
        i0, j0 = int(np.floor(y)), int(np.floor(x))
        fy, fx = y - i0, x - j0
        for di, wy in ((0, 1.0 - fy), (1, fy)):
            for dj, wx in ((0, 1.0 - fx), (1, fx)):
                w = wy * wx
                if w > 0.0:
                    taps[i0 + di, j0 + dj] += w / n
    return Kernel(taps / taps.sum())


def write_kernel(kernel: Kernel, path: str | Path) -> None:
    """Plain-text kernel file: first line "H W", then H*W taps."""
    lines = [f"{kernel.height} {kernel.width}"]
    for row in kernel.taps:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_kernel(path: str | Path) -> Kernel:
    tokens = Path(path).read_text().split()
    if len(tokens) < 2:
        raise ParameterError(f"kernel file {path} is missing its 'H W' header")
    h, w = int(tokens[0]), int(tokens[1])
    values = tokens[2:]
    if len(values) != h * w:
        raise ParameterError(
            f"kernel file {path}: expected {h * w} taps, found {len(values)}"
        )
    taps = np.array([float(v) for v in values], dtype=np.float64).reshape(h, w)
    return Kernel(taps)


def _embed_otf(kernel: Kernel, shape_hw: tuple[int, int]) -> np.ndarray:
    """rfft2 of the kernel embedded with its center at the origin."""
    H, W = shape_hw
    kh, kw = kernel.height, kernel.width
    if kh > H or kw > W:
        raise ParameterError(
            f"kernel {kh}x{kw} does not fit the {H}x{W} image plane"
        )
    padded = np.zeros((H, W), dtype=np.float64)
    padded[:kh, :kw] = kernel.taps
    padded = np.roll(padded, (-(kh // 2), -(kw // 2)), axis=(0, 1))
    return np.fft.rfft2(padded)


def _filter(x: np.ndarray, otf: np.ndarray) -> np.ndarray:
    H, W = x.shape[-2:]
    return np.fft.irfft2(np.fft.rfft2(x, axes=(-2, -1)) * otf, s=(H, W), axes=(-2, -1))


class ForwardOperator(ABC):
    """Abstract degradation A with a verified adjoint A^T."""

    kind: str
    input_shape: Shape3
    output_shape: Shape3

    def apply(self, x) -> np.ndarray:
        x = as_image(x, "x")
        check_shape(x, self.input_shape, "x")
        return self._apply(x)

    def adjoint(self, v) -> np.ndarray:
        v = as_image(v, "v")
        check_shape(v, self.output_shape, "v")
        return self._adjoint(v)

    @abstractmethod
    def _apply(self, x: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _adjoint(self, v: np.ndarray) -> np.ndarray: ...

    def describe(self) -> dict[str, Any]:
        """JSON-able descriptor sufficient to rebuild the operator."""
        return {"kind": self.kind}


class Identity(ForwardOperator):
    kind = "identity"

    def __init__(self, shape: Shape3):
        self.input_shape = tuple(shape)
        self.output_shape = tuple(shape)

    def _apply(self, x):
        return x

    def _adjoint(self, v):
        return v


class CircularBlur(ForwardOperator):
    """Circular convolution with a fixed kernel."""

    kind = "blur"

    def __init__(self, kernel: Kernel, shape: Shape3):
        self.kernel = kernel
        self.input_shape = tuple(shape)
        self.output_shape = tuple(shape)
        # 1x1 kernels are scalar multiplies; skipping the FFT keeps the
        # delta kernel exactly lossless.
        self._scale = float(kernel.taps[0, 0]) if kernel.taps.size == 1 else None
        self._otf = _embed_otf(kernel, (shape[1], shape[2]))

    @property
    def otf(self) -> np.ndarray:
        """rfft2 frequency response (shared with the closed-form oracles)."""
        return self._otf

    def _apply(self, x):
        if self._scale is not None:
            return self._scale * x
        return _filter(x, self._otf)

    def _adjoint(self, v):
        if self._scale is not None:
            return self._scale * v
        return _filter(v, np.conj(self._otf))


def _bicubic(u: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic interpolation kernel."""
    au = np.abs(u)
    out = np.zeros_like(au)
    near = au <= 1.0
    far = (au > 1.0) & (au < 2.0)
    out[near] = (a + 2.0) * au[near] ** 3 - (a + 3.0) * au[near] ** 2 + 1.0
    out[far] = a * (au[far] ** 3 - 5.0 * au[far] ** 2 + 8.0 * au[far] - 4.0)
    return out


def bicubic_antialias_kernel(scale: int) -> Kernel:
    """Separable cubic kernel stretched by `scale` (antialiased decimation)."""
    if scale < 1:
        raise ParameterError(f"scale must be >= 1, got {scale}")
    m = np.arange(-(2 * scale - 1), 2 * scale, dtype=np.float64)
    k1 = _bicubic(m / scale)
    k1 /= k1.sum()
    return Kernel(np.outer(k1, k1))


class SRBicubic(ForwardOperator):
    """Antialiased bicubic decimation: stretched-cubic blur then subsample."""

    kind = "sr"

    def __init__(self, scale: int, input_shape: Shape3):
        C, H, W = input_shape
        if scale < 1:
            raise ParameterError(f"scale must be >= 1, got {scale}")
        if H % scale != 0 or W % scale != 0:
            raise ParameterError(
                f"image plane {H}x{W} is not divisible by scale {scale}"
            )
        self.scale = int(scale)
        self.kernel = bicubic_antialias_kernel(scale)
        self.input_shape = (C, H, W)
        self.output_shape = (C, H // scale, W // scale)
        self._otf = _embed_otf(self.kernel, (H, W))

    def _apply(self, x):
        blurred = _filter(x, self._otf)
        return np.ascontiguousarray(blurred[:, :: self.scale, :: self.scale])

    def _adjoint(self, v):
        up = np.zeros(self.input_shape, dtype=np.float64)
        up[:, :: self.scale, :: self.scale] = v
        return _filter(up, np.conj(self._otf))

    def describe(self):
        return {"kind": self.kind, "scale": self.scale}


class Mask(ForwardOperator):
    """Zero out unobserved pixels; an idempotent self-adjoint projection."""

    kind = "mask"

    def __init__(self, mask: np.ndarray, shape: Shape3):
        m = np.asarray(mask, dtype=np.float64)
        if m.shape != (shape[1], shape[2]):
            raise ShapeError(
                f"mask: expected shape {(shape[1], shape[2])}, got {m.shape}"
            )
        if not np.all((m == 0.0) | (m == 1.0)):
            raise ParameterError("mask map must be binary (0/1)")
        m.flags.writeable = False
        self.mask = m
        self.input_shape = tuple(shape)
        self.output_shape = tuple(shape)

    def _apply(self, x):
        return x * self.mask[None, :, :]

    def _adjoint(self, v):
        return v * self.mask[None, :, :]


def degrade(op: ForwardOperator, x, sigma_n: float, seed: int) -> np.ndarray:
    """Simulate a measurement y = A x + sigma_n * g with seeded unit noise."""
    if sigma_n < 0.0:
        raise ParameterError(f"sigma_n must be >= 0, got {sigma_n}")
    y = op.apply(x)
    if sigma_n == 0.0:
        return y
    g = np.random.default_rng(seed).standard_normal(op.output_shape)
    return y + sigma_n * g


def operator_from_config(cfg: Mapping[str, Any], input_shape: Shape3) -> ForwardOperator:
    """Build an operator from a JSON-able descriptor (CLI/config entry)."""
    kind = cfg.get("kind")
    if kind == "identity":
        return Identity(input_shape)
    if kind == "blur":
        if "kernel_path" in cfg:
            kernel = read_kernel(cfg["kernel_path"])
        elif "gaussian" in cfg:
            g = cfg["gaussian"]
            kernel = make_gaussian_kernel(int(g["size"]), float(g["std"]))
        elif "motion" in cfg:
            m = cfg["motion"]
            kernel = make_motion_kernel(
                int(m["size"]), float(m["length"]), float(m.get("angle_deg", 0.0))
            )
        else:
            raise ParameterError(
                "blur operator needs one of: kernel_path, gaussian, motion"
            )
        return CircularBlur(kernel, input_shape)
    if kind == "sr":
        return SRBicubic(int(cfg["scale"]), input_shape)
    if kind == "mask":
        from . import imgio  # local: keeps file I/O out of the math path

        m = imgio.read_image(cfg["mask_path"])
        return Mask((m[0] >= 0.5).astype(np.float64), input_shape)
    raise ParameterError(f"unknown operator kind {kind!r}")
