"""Diffusion noise schedules and the deterministic-branch level schedule.

A :class:`NoiseSchedule` tabulates the forward-process quantities for a
T-step linear-beta diffusion: the per-step noise rates ``beta``, the
cumulative signal retention ``alpha_bar`` and the equivalent denoising
noise level ``sigma_bar = sqrt((1 - alpha_bar) / alpha_bar)``.  The
deterministic branch of the solver runs on its own positive noise-level
schedule (:class:`DetSchedule`), which is snapped onto the diffusion grid
via :func:`lookup_tprime`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .errors import ParameterError

DEFAULT_T_TRAIN = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class NoiseSchedule:
    """Forward-diffusion tables, indexed by step.

    ``beta`` has T entries (``beta[i]`` belongs to step ``i + 1``);
    ``alpha_bar`` and ``sigma_bar`` have T + 1 entries indexed directly by
    step, with ``alpha_bar[0] = 1`` and ``sigma_bar[0] = 0`` as the
    noise-free endpoint.
    """

    beta: np.ndarray
    alpha_bar: np.ndarray
    sigma_bar: np.ndarray

    @property
    def T(self) -> int:
        return int(self.beta.shape[0])


def build_schedule(
    T: int = DEFAULT_T_TRAIN,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Build a linear-beta schedule with ``T`` steps.

    ``beta`` interpolates linearly from ``beta_start`` to ``beta_end``;
    ``alpha_bar[t]`` is the running product of ``1 - beta`` up to step t.
    Deterministic: identical inputs give bit-identical arrays.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start < 1.0):
        raise ParameterError(f"beta_start must be in (0, 1), got {beta_start}")
    if not (0.0 < beta_end < 1.0):
        raise ParameterError(f"beta_end must be in (0, 1), got {beta_end}")
    if beta_start > beta_end:
        raise ParameterError(f"beta_start={beta_start} exceeds beta_end={beta_end}")
    if T > 1 and beta_start == beta_end:
        raise ParameterError("beta_start must be strictly below beta_end for T >= 2")

    beta = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alpha_bar = np.empty(T + 1, dtype=np.float64)
    alpha_bar[0] = 1.0
    alpha_bar[1:] = np.cumprod(1.0 - beta)
    sigma_bar = np.sqrt((1.0 - alpha_bar) / alpha_bar)
    return NoiseSchedule(
        beta=_frozen(beta), alpha_bar=_frozen(alpha_bar), sigma_bar=_frozen(sigma_bar)
    )


def lookup_tprime(sched: NoiseSchedule, sigma_prime_t: float) -> int:
    """Snap a target noise level onto the schedule grid.

    Returns the step index in [1, T] whose ``sigma_bar`` is closest to
    ``sigma_prime_t``; ties break toward the smaller index (weaker
    denoising).
    """
    if not (sigma_prime_t > 0.0):
        raise ParameterError(f"sigma_prime_t must be > 0, got {sigma_prime_t}")
    # argmin returns the first minimizer, which is the smaller index.
    return int(np.argmin(np.abs(sched.sigma_bar[1:] - sigma_prime_t))) + 1


@dataclass(frozen=True)
class DetSchedule:
    """Noise levels for the deterministic branch, one per solver step.

    ``sigma_prime`` is stored in execution order: entry 0 is used at the
    first executed step (t = T) and the last entry at t = 1.
    """

    sigma_prime: np.ndarray
    mode: str
    params: dict[str, float] = field(default_factory=dict)

    @property
    def T(self) -> int:
        return int(self.sigma_prime.shape[0])

    def at(self, t: int) -> float:
        """Noise level for solver step ``t`` (counting down from T to 1)."""
        if not (1 <= t <= self.T):
            raise ParameterError(f"step t={t} outside [1, {self.T}]")
        return float(self.sigma_prime[self.T - t])


def build_det_schedule(T: int, mode: str, params: Mapping[str, float]) -> DetSchedule:
    """Build the deterministic-branch schedule.

    mode "log_spaced": geometric decay from params["sigma_max"] (first
    step, t = T) to params["sigma_min"] (t = 1).  mode "constant": a
    uniform array at params["sigma"].
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    if mode == "constant":
        if "sigma" not in params:
            raise ParameterError("constant det schedule requires params['sigma']")
        sigma = float(params["sigma"])
        if sigma <= 0.0:
            raise ParameterError(f"sigma must be > 0, got {sigma}")
        values = np.full(T, sigma, dtype=np.float64)
        kept = {"sigma": sigma}
    elif mode == "log_spaced":
        if "sigma_max" not in params or "sigma_min" not in params:
            raise ParameterError(
                "log_spaced det schedule requires params['sigma_max'] and ['sigma_min']"
            )
        sigma_max = float(params["sigma_max"])
        sigma_min = float(params["sigma_min"])
        if sigma_min <= 0.0 or sigma_max <= 0.0:
            raise ParameterError(
                f"sigma_max/sigma_min must be > 0, got {sigma_max}/{sigma_min}"
            )
        if sigma_max < sigma_min:
            raise ParameterError(
                f"sigma_max={sigma_max} is below sigma_min={sigma_min}"
            )
        values = np.geomspace(sigma_max, sigma_min, T, dtype=np.float64)
        kept = {"sigma_max": sigma_max, "sigma_min": sigma_min}
    else:
        raise ParameterError(f"unknown det schedule mode {mode!r}")
    return DetSchedule(sigma_prime=_frozen(values), mode=mode, params=kept)


def solver_index_map(T_train: int, T_solve: int) -> np.ndarray:
    """Map solver steps onto training steps by uniform subsampling.

    Entry k is ``round(k * T_train / T_solve)`` (half away from zero), so
    ``map[0] = 0`` and ``map[T_solve] = T_train``.  Strictly increasing
    whenever ``T_solve <= T_train``.
    """
    if T_solve < 1:
        raise ParameterError(f"T_solve must be >= 1, got {T_solve}")
    if T_solve > T_train:
        raise ParameterError(
            f"T_solve={T_solve} exceeds the training schedule length {T_train}"
        )
    k = np.arange(T_solve + 1, dtype=np.int64)
    return (2 * k * T_train + T_solve) // (2 * T_solve)


@dataclass(frozen=True)
class ScheduleSpec:
    """Serializable description of both schedules (config round-trip)."""

    t_train: int = DEFAULT_T_TRAIN
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    t_solve: int = 100
    det_mode: str = "log_spaced"
    det_params: dict[str, float] = field(
        default_factory=lambda: {"sigma_max": 0.2, "sigma_min": 0.05}
    )

    def build(self) -> tuple[NoiseSchedule, DetSchedule]:
        sched = build_schedule(self.t_train, self.beta_start, self.beta_end)
        det = build_det_schedule(self.t_solve, self.det_mode, self.det_params)
        return sched, det

    def to_dict(self) -> dict[str, Any]:
        return {
            "t_train": self.t_train,
            "beta_start": self.beta_start,
            "beta_end": self.beta_end,
            "t_solve": self.t_solve,
            "det_mode": self.det_mode,
            "det_params": dict(self.det_params),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ScheduleSpec":
        known = {
            "t_train",
            "beta_start",
            "beta_end",
            "t_solve",
            "det_mode",
            "det_params",
        }
        unknown = set(d) - known
        if unknown:
            raise ParameterError(f"unknown schedule keys: {sorted(unknown)}")
        base = cls()
        return cls(
            t_train=int(d.get("t_train", base.t_train)),
            beta_start=float(d.get("beta_start", base.beta_start)),
            beta_end=float(d.get("beta_end", base.beta_end)),
            t_solve=int(d.get("t_solve", base.t_solve)),
            det_mode=str(d.get("det_mode", base.det_mode)),
            det_params={k: float(v) for k, v in d.get("det_params", base.det_params).items()},
        )
