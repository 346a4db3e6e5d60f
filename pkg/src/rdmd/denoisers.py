"""Noise-prediction backends and the denoiser derived from them.

The primitive is the noise predictor ``eps(x_t, t)``; the one-step clean
estimate is derived from it as

    denoise(v, t) = (v - sqrt(1 - alpha_bar_t) * eps(v, t)) / sqrt(alpha_bar_t)

Three backends are provided:

* ``wiener``    : analytic Gaussian prior x0 ~ N(0, C) with a DFT-diagonal
  covariance.  Its eps is defined so that ``denoise`` returns the exact
  posterior mean E[x0 | x_t], which makes every solver oracle closed-form.
* ``dct_shrink``: blockwise orthonormal DCT-II soft-thresholding, a cheap
  nonlinear denoiser for exercising the solver beyond the linear case.
* ``extern``    : an out-of-process predictor spoken to over the framed
  tensor protocol (subprocess stdio or TCP).
"""

from __future__ import annotations

import os
import select
import shlex
import socket
import subprocess
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy import fft as sfft

from . import wire
from .errors import BackendError, ParameterError, ProtocolError
from .image import Shape3, as_image
from .schedule import NoiseSchedule


@dataclass(frozen=True)
class PriorSpectrum:
    """Nonnegative per-frequency variances of a DFT-diagonal Gaussian prior.

    Either a scalar variance (i.i.d. pixels) or a full (H, W) table over
    the fft2 frequency grid of a fixed image plane.
    """

    scalar: float | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.scalar is None) == (self.values is None):
            raise ParameterError("exactly one of scalar/values must be set")
        if self.scalar is not None and self.scalar < 0.0:
            raise ParameterError(f"scalar variance must be >= 0, got {self.scalar}")
        if self.values is not None:
            vals = np.ascontiguousarray(self.values, dtype=np.float64)
            if vals.ndim != 2:
                raise ParameterError("spectrum table must be 2-D (H, W)")
            if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
                raise ParameterError("spectrum entries must be finite and >= 0")
            vals.flags.writeable = False
            object.__setattr__(self, "values", vals)

    @classmethod
    def iid(cls, s2: float) -> "PriorSpectrum":
        return cls(scalar=float(s2))

    @classmethod
    def smoothness(cls, shape_hw: tuple[int, int], s2: float = 1.0, rho: float = 16.0) -> "PriorSpectrum":
        """S(f) = s2 / (1 + rho |f|^2) over the fft2 grid (f in cycles/pixel)."""
        H, W = shape_hw
        fy = np.fft.fftfreq(H)[:, None]
        fx = np.fft.fftfreq(W)[None, :]
        return cls(values=s2 / (1.0 + rho * (fx**2 + fy**2)))

    @classmethod
    def from_array(cls, values: np.ndarray) -> "PriorSpectrum":
        return cls(values=np.asarray(values, dtype=np.float64))

    def grid(self, shape_hw: tuple[int, int]) -> np.ndarray:
        if self.scalar is not None:
            return np.full(shape_hw, self.scalar, dtype=np.float64)
        if self.values.shape != tuple(shape_hw):
            raise ParameterError(
                f"spectrum table is {self.values.shape}, image plane is {shape_hw}"
            )
        return self.values


def wiener_matrix_action(spectrum: PriorSpectrum, sigma: float, v) -> np.ndarray:
    """Apply W_sigma = C (C + sigma^2 I)^{-1} per DFT frequency.

    sigma = 0 is the identity by definition (no FFT round trip).
    """
    if sigma < 0.0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    v = as_image(v, "v")
    if sigma == 0.0:
        return v.copy()
    H, W = v.shape[1], v.shape[2]
    S = spectrum.grid((H, W))[:, : W // 2 + 1]
    gains = S / (S + sigma**2)
    V = np.fft.rfft2(v, axes=(-2, -1))
    return np.fft.irfft2(gains * V, s=(H, W), axes=(-2, -1))


def _check_step(t: int, sched: NoiseSchedule) -> None:
    if not isinstance(t, (int, np.integer)) or not (1 <= t <= sched.T):
        raise ParameterError(f"step index t={t} outside [1, {sched.T}]")


class DenoiserBackend(ABC):
    """Abstract noise predictor; `denoise` is derived and kept consistent."""

    kind: str

    def predict_eps(self, x_t, t: int, sched: NoiseSchedule) -> np.ndarray:
        _check_step(t, sched)
        x_t = as_image(x_t, "x_t")
        return self._predict_eps(x_t, int(t), sched)

    @abstractmethod
    def _predict_eps(self, x_t: np.ndarray, t: int, sched: NoiseSchedule) -> np.ndarray: ...

    def denoise(self, v, t: int, sched: NoiseSchedule) -> np.ndarray:
        eps = self.predict_eps(v, t, sched)  # validates t and v
        ab = float(sched.alpha_bar[t])
        v = as_image(v, "v")
        return (v - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)

    def close(self) -> None:
        """Release any held resources (no-op for in-process backends)."""


class WienerBackend(DenoiserBackend):
    """Exact posterior-mean denoiser for a DFT-diagonal Gaussian prior.

    Per frequency, the clean estimate from x_t is

        x0_hat(f) = sqrt(ab) S(f) / (ab S(f) + 1 - ab) * x_t(f)

    and eps is back-solved so the derived `denoise` returns x0_hat exactly.
    The map is linear and self-adjoint, which is what makes the explicit
    regularizer gradient exact for this backend.
    """

    kind = "wiener"

    def __init__(self, spectrum: PriorSpectrum):
        self.spectrum = spectrum

    def posterior_gain(self, t: int, sched: NoiseSchedule, shape_hw: tuple[int, int]) -> np.ndarray:
        """Full-grid (H, W) frequency response of `denoise` at step t."""
        ab = float(sched.alpha_bar[t])
        S = self.spectrum.grid(shape_hw)
        return np.sqrt(ab) * S / (ab * S + (1.0 - ab))

    def _predict_eps(self, x_t, t, sched):
        ab = float(sched.alpha_bar[t])
        H, W = x_t.shape[1], x_t.shape[2]
        gain = self.posterior_gain(t, sched, (H, W))[:, : W // 2 + 1]
        X = np.fft.rfft2(x_t, axes=(-2, -1))
        x0 = np.fft.irfft2(gain * X, s=(H, W), axes=(-2, -1))
        return (x_t - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)


class DCTShrinkBackend(DenoiserBackend):
    """Blockwise DCT soft-thresholding at threshold_scale * sigma_bar_t.

    The DC coefficient of each block is left untouched so flat regions
    keep their level.  Orthonormal DCT-II plus soft-thresholding keeps
    ||f(v)|| <= ||v||.
    """

    kind = "dct_shrink"

    def __init__(self, block: int = 8, threshold_scale: float = 1.0):
        if block < 1:
            raise ParameterError(f"block must be >= 1, got {block}")
        if threshold_scale < 0.0:
            raise ParameterError(f"threshold_scale must be >= 0, got {threshold_scale}")
        self.block = int(block)
        self.threshold_scale = float(threshold_scale)

    def _shrink(self, x: np.ndarray, threshold: float) -> np.ndarray:
        if threshold == 0.0:
            return x
        b = self.block
        C, H, W = x.shape
        pad_h = (-H) % b
        pad_w = (-W) % b
        padded = np.pad(x, ((0, 0), (0, pad_h), (0, pad_w)), mode="reflect")
        Hp, Wp = padded.shape[1], padded.shape[2]
        blocks = padded.reshape(C, Hp // b, b, Wp // b, b).transpose(0, 1, 3, 2, 4)
        coef = sfft.dctn(blocks, type=2, norm="ortho", axes=(-2, -1))
        dc = coef[..., 0, 0].copy()
        coef = np.sign(coef) * np.maximum(np.abs(coef) - threshold, 0.0)
        coef[..., 0, 0] = dc
        out = sfft.idctn(coef, type=2, norm="ortho", axes=(-2, -1))
        out = out.transpose(0, 1, 3, 2, 4).reshape(C, Hp, Wp)
        return np.ascontiguousarray(out[:, :H, :W])

    def _predict_eps(self, x_t, t, sched):
        ab = float(sched.alpha_bar[t])
        f = self._shrink(x_t, self.threshold_scale * float(sched.sigma_bar[t]))
        return (x_t - np.sqrt(ab) * f) / np.sqrt(1.0 - ab)


class _SubprocessTransport:
    """stdio pipes to a spawned denoiser process, reads with a deadline."""

    def __init__(self, command: str, timeout: float):
        self.timeout = timeout
        try:
            self.proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        except OSError as exc:
            raise BackendError(f"failed to spawn denoiser process: {exc}") from exc

    def write(self, data: bytes) -> None:
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise BackendError(f"denoiser process pipe closed: {exc}") from exc

    def read(self, n: int) -> bytes:
        fd = self.proc.stdout.fileno()
        ready, _, _ = select.select([fd], [], [], self.timeout)
        if not ready:
            raise BackendError(
                f"denoiser process did not respond within {self.timeout:.0f} s"
            )
        chunk = os.read(fd, n)
        return chunk

    def flush(self) -> None:  # file-like duck typing for wire helpers
        pass

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.stdin.close()
            try:
                self.proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                self.proc.kill()
                self.proc.wait()


class _TcpTransport:
    def __init__(self, host: str, port: int, timeout: float):
        try:
            self.sock = socket.create_connection((host, port), timeout=timeout)
            self.sock.settimeout(timeout)
        except OSError as exc:
            raise BackendError(f"cannot connect to {host}:{port}: {exc}") from exc

    def write(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise BackendError(f"socket send failed: {exc}") from exc

    def read(self, n: int) -> bytes:
        try:
            return self.sock.recv(n)
        except socket.timeout as exc:
            raise BackendError("denoiser server timed out") from exc
        except OSError as exc:
            raise BackendError(f"socket receive failed: {exc}") from exc

    def flush(self) -> None:
        pass

    def close(self) -> None:
        self.sock.close()


class ExternalBackend(DenoiserBackend):
    """Out-of-process predictor over the framed tensor protocol.

    A handshake carrying the schedule descriptor and tensor shape is sent
    once before the first request; servers reject mismatches with an
    error frame.  Requests fail fast (default 30 s deadline, no retry) so
    runs stay reproducible.
    """

    kind = "extern"

    def __init__(self, spec: str, timeout: float = 30.0):
        self.spec = spec
        self.timeout = timeout
        self._transport = None
        self._handshaken = False

    def _connect(self):
        if self._transport is not None:
            return
        if self.spec.startswith("extern:"):
            self._transport = _SubprocessTransport(self.spec[len("extern:"):], self.timeout)
        elif self.spec.startswith("tcp:"):
            rest = self.spec[len("tcp:"):]
            host, _, port = rest.rpartition(":")
            if not host or not port.isdigit():
                raise ParameterError(f"bad tcp backend spec {self.spec!r}")
            self._transport = _TcpTransport(host, int(port), self.timeout)
        else:
            raise ParameterError(
                f"backend spec {self.spec!r} must start with 'extern:' or 'tcp:'"
            )

    def _roundtrip(self, msg: wire.Message) -> wire.Message:
        try:
            wire.write_message(self._transport, msg)
            reply = wire.read_message(self._transport)
        except ProtocolError as exc:
            raise BackendError(f"protocol failure talking to {self.spec}: {exc}") from exc
        if isinstance(reply, wire.ErrorFrame):
            raise BackendError(f"denoiser backend error: {reply.message}")
        return reply

    def _handshake(self, sched: NoiseSchedule, shape: Shape3) -> None:
        ours = wire.Handshake(
            t_train=sched.T,
            beta_start=float(sched.beta[0]),
            beta_end=float(sched.beta[-1]),
            dims=tuple(int(d) for d in shape),
        )
        reply = self._roundtrip(ours)
        if not isinstance(reply, wire.Handshake):
            raise BackendError(f"expected a handshake reply, got {type(reply).__name__}")
        if (
            reply.t_train != ours.t_train
            or not np.isclose(reply.beta_start, ours.beta_start, rtol=0, atol=1e-12)
            or not np.isclose(reply.beta_end, ours.beta_end, rtol=0, atol=1e-12)
        ):
            raise BackendError(
                "schedule mismatch with denoiser server: "
                f"ours (T={ours.t_train}, beta={ours.beta_start}..{ours.beta_end}), "
                f"theirs (T={reply.t_train}, beta={reply.beta_start}..{reply.beta_end})"
            )
        self._handshaken = True

    def _predict_eps(self, x_t, t, sched):
        self._connect()
        if not self._handshaken:
            self._handshake(sched, x_t.shape)
        request = wire.EpsRequest(
            t_index=t,
            alpha_bar=float(sched.alpha_bar[t]),
            data=x_t.astype(np.float32),
        )
        reply = self._roundtrip(request)
        if not isinstance(reply, wire.EpsResponse):
            raise BackendError(f"expected eps_response, got {type(reply).__name__}")
        if reply.data.shape != x_t.shape:
            raise BackendError(
                f"backend returned shape {reply.data.shape}, expected {x_t.shape}"
            )
        return reply.data.astype(np.float64)

    def close(self):
        if self._transport is not None:
            self._transport.close()
            self._transport = None
            self._handshaken = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def backend_from_config(cfg: Mapping[str, Any], shape: Shape3) -> DenoiserBackend:
    """Build a backend from a JSON-able descriptor (CLI/config entry)."""
    kind = cfg.get("kind")
    if kind == "wiener":
        prior = cfg.get("prior", {"type": "smoothness"})
        ptype = prior.get("type", "smoothness")
        if ptype == "iid":
            spectrum = PriorSpectrum.iid(float(prior.get("s2", 1.0)))
        elif ptype == "smoothness":
            spectrum = PriorSpectrum.smoothness(
                (shape[1], shape[2]),
                s2=float(prior.get("s2", 1.0)),
                rho=float(prior.get("rho", 16.0)),
            )
        else:
            raise ParameterError(f"unknown prior type {ptype!r}")
        return WienerBackend(spectrum)
    if kind == "dct_shrink":
        return DCTShrinkBackend(
            block=int(cfg.get("block", 8)),
            threshold_scale=float(cfg.get("threshold_scale", 1.0)),
        )
    if kind == "extern":
        return ExternalBackend(str(cfg["spec"]), timeout=float(cfg.get("timeout", 30.0)))
    raise ParameterError(f"unknown backend kind {kind!r}")
