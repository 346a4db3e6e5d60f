"""The dual-regularizer restoration iteration.

One denoiser backend serves two roles per step: a stochastic one-step
clean estimate from the sampling chain x_t, and a deterministic
denoiser-residual regularizer on the data-consistency iterate z_t.  Both
feed a single gradient update

    z_{t-1} = z_t - eta * ( 2 A^T (A z_t - y)
                            + tau  * lam * sigma_n^2 / sigma_bar_t^2 * (z_t - x0_t)
                            + (1 - tau) * lam * sigma_n^2 * (z_t - f(z_t, t')) )

after which the chain is renoised from the effective noise and a fresh
Gaussian draw, blended by zeta.  tau interpolates between a fully
deterministic fixed-point regression (tau = 0) and fully stochastic
sampling (tau = 1).

Iterates are never clamped to [0, 1]; clamping happens only at image
write time, so the linear-operator oracles stay exact.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from . import metrics
from .denoisers import DenoiserBackend
from .errors import DivergenceError, ParameterError
from .image import as_image, check_shape, l2_norm_sq
from .operators import ForwardOperator
from .schedule import DetSchedule, NoiseSchedule, lookup_tprime, solver_index_map

DIVERGENCE_FACTOR = 1e6

_TAG_CODES = {"init": 0, "renoise": 1}


def noise_rng(seed: int, step: int, tag: str) -> np.random.Generator:
    """Counter-based generator keyed by (seed, step, purpose).

    Each draw site owns its own stream, so traces reproduce bit-for-bit
    regardless of worker counts or evaluation order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(step, _TAG_CODES[tag]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SolverConfig:
    """All solver hyperparameters.

    lam is the regularization strength (the objective's lambda), tau the
    stochastic/deterministic weighting, zeta the renoising stochasticity,
    eta the gradient step, sigma_n the data-term noise std.
    """

    lam: float = 20.0
    tau: float = 0.1
    zeta: float = 0.8
    eta: float = 0.25
    sigma_n: float = 0.05
    t_solve: int = 100
    seed: int = 0
    trace_every: int = 1

    def __post_init__(self):
        if not (self.lam > 0.0):
            raise ParameterError(f"lam must be > 0, got {self.lam}")
        if not (0.0 <= self.tau <= 1.0):
            raise ParameterError(f"tau must be in [0, 1], got {self.tau}")
        if not (0.0 <= self.zeta <= 1.0):
            raise ParameterError(f"zeta must be in [0, 1], got {self.zeta}")
        if not (self.eta > 0.0):
            raise ParameterError(f"eta must be > 0, got {self.eta}")
        if self.sigma_n < 0.0:
            raise ParameterError(f"sigma_n must be >= 0, got {self.sigma_n}")
        if self.t_solve < 1:
            raise ParameterError(f"t_solve must be >= 1, got {self.t_solve}")
        if self.trace_every < 1:
            raise ParameterError(f"trace_every must be >= 1, got {self.trace_every}")


@dataclass(frozen=True)
class TraceRecord:
    t: int
    data_fidelity: float
    coupling_norm: float
    red_norm: float
    psnr: float


@dataclass(frozen=True)
class RestorationResult:
    x0: np.ndarray
    trace: list[TraceRecord]

    def trace_csv(self) -> str:
        lines = ["t,data_fidelity,coupling_norm,red_norm,psnr"]
        for r in self.trace:
            lines.append(
                f"{r.t},{r.data_fidelity!r},{r.coupling_norm!r},"
                f"{r.red_norm!r},{r.psnr!r}"
            )
        return "\n".join(lines) + "\n"


def restore(
    y,
    op: ForwardOperator,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    det: DetSchedule | None,
    cfg: SolverConfig,
    reference=None,
    *,
    renoise: bool = True,
    x_init: np.ndarray | None = None,
) -> RestorationResult:
    """Run the full dual iteration for t = t_solve .. 1 and return x0.

    Branches with zero weight are skipped entirely (no backend calls):
    tau = 0 drops the stochastic estimate, tau = 1 drops the deterministic
    one, zeta = 1 drops the effective noise, zeta = 0 draws no fresh
    noise.  With `renoise` False the sampling chain is disabled outright
    (only valid at tau = 0) and the returned image is z_0.

    Fully deterministic for a fixed config: all randomness flows from
    (cfg.seed, step, purpose) streams.
    """
    y = as_image(y, "y")
    check_shape(y, op.output_shape, "y")
    if reference is not None:
        reference = as_image(reference, "reference")

    tau = cfg.tau
    use_stochastic = tau > 0.0
    use_deterministic = tau < 1.0
    if use_deterministic:
        if det is None:
            raise ParameterError("tau < 1 requires a deterministic-branch schedule")
        if det.T < cfg.t_solve:
            raise ParameterError(
                f"det schedule has {det.T} steps, solver needs {cfg.t_solve}"
            )
    if use_stochastic and not renoise:
        raise ParameterError(
            "the stochastic branch (tau > 0) requires the renoising chain"
        )

    # Solver steps map onto training-schedule indices; only the sampling
    # chain consults the map, so a pure-z run may exceed sched.T steps.
    idx = solver_index_map(sched.T, cfg.t_solve) if renoise else None

    z = op.adjoint(y)
    x = None
    if renoise:
        if x_init is not None:
            x = as_image(x_init, "x_init").copy()
            check_shape(x, op.input_shape, "x_init")
        else:
            x = noise_rng(cfg.seed, 0, "init").standard_normal(op.input_shape)
    bound = DIVERGENCE_FACTOR * (1.0 + np.sqrt(l2_norm_sq(y)))

    trace: list[TraceRecord] = []
    for t in range(cfg.t_solve, 0, -1):
        x0t = None
        fz = None
        if use_stochastic:
            ti = int(idx[t])
            ab_t = float(sched.alpha_bar[ti])
            eps_x = backend.predict_eps(x, ti, sched)
            x0t = (x - np.sqrt(1.0 - ab_t) * eps_x) / np.sqrt(ab_t)
        if use_deterministic:
            tprime = lookup_tprime(sched, det.at(t))
            fz = backend.denoise(z, tprime, sched)

        residual = op.apply(z) - y
        grad = 2.0 * op.adjoint(residual)
        if use_stochastic:
            sb_t = float(sched.sigma_bar[int(idx[t])])
            grad += (tau * cfg.lam * cfg.sigma_n**2 / sb_t**2) * (z - x0t)
        if use_deterministic:
            grad += ((1.0 - tau) * cfg.lam * cfg.sigma_n**2) * (z - fz)

        if (cfg.t_solve - t) % cfg.trace_every == 0 or t == 1:
            trace.append(
                TraceRecord(
                    t=t,
                    data_fidelity=l2_norm_sq(residual),
                    coupling_norm=l2_norm_sq(z - x0t) if x0t is not None else float("nan"),
                    red_norm=l2_norm_sq(z - fz) if fz is not None else float("nan"),
                    psnr=metrics.psnr(z, reference) if reference is not None else float("nan"),
                )
            )

        z_new = z - cfg.eta * grad
        norm = float(np.sqrt(l2_norm_sq(z_new)))
        if not np.isfinite(norm) or norm > bound:
            raise DivergenceError(step=t, norm=norm)

        if renoise:
            ti = int(idx[t])
            ab_t = float(sched.alpha_bar[ti])
            ab_prev = float(sched.alpha_bar[int(idx[t - 1])])
            blend = 0.0
            if cfg.zeta < 1.0:
                eps_hat = (x - np.sqrt(ab_t) * z_new) / np.sqrt(1.0 - ab_t)
                blend = np.sqrt(1.0 - cfg.zeta) * eps_hat
            if cfg.zeta > 0.0:
                eps_t = noise_rng(cfg.seed, t, "renoise").standard_normal(op.input_shape)
                blend = blend + np.sqrt(cfg.zeta) * eps_t
            x = np.sqrt(ab_prev) * z_new + np.sqrt(1.0 - ab_prev) * blend

        z = z_new

    x0 = x if renoise else z
    return RestorationResult(x0=x0, trace=trace)


def restore_red(
    y,
    op: ForwardOperator,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    det: DetSchedule,
    cfg: SolverConfig,
    reference=None,
) -> RestorationResult:
    """Pure deterministic regression: tau = 0, no sampling chain, returns z_0."""
    return restore(
        y,
        op,
        backend,
        sched,
        det,
        replace(cfg, tau=0.0),
        reference,
        renoise=False,
    )


def restore_diffpir_like(
    y,
    op: ForwardOperator,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    cfg: SolverConfig,
    reference=None,
    *,
    x_init: np.ndarray | None = None,
) -> RestorationResult:
    """Fully stochastic mode: tau = 1, deterministic branch never evaluated."""
    return restore(
        y,
        op,
        backend,
        sched,
        None,
        replace(cfg, tau=1.0),
        reference,
        x_init=x_init,
    )


@dataclass(frozen=True)
class SweepRow:
    tau: float
    psnr: float
    ssim: float
    runtime_s: float
    error: str | None = None


def sweep_tau(
    y,
    op: ForwardOperator,
    backend: DenoiserBackend,
    sched: NoiseSchedule,
    det: DetSchedule,
    cfg_base: SolverConfig,
    taus,
    reference,
) -> list[SweepRow]:
    """Run `restore` once per tau (same seed each run) and score the outputs.

    Per-row failures are recorded in the row and do not stop the sweep.
    """
    reference = as_image(reference, "reference")
    for tau in taus:
        if not (0.0 <= tau <= 1.0):
            raise ParameterError(f"tau must be in [0, 1], got {tau}")
    rows: list[SweepRow] = []
    for tau in taus:
        t0 = time.perf_counter()
        try:
            result = restore(y, op, backend, sched, det, replace(cfg_base, tau=float(tau)))
            elapsed = time.perf_counter() - t0
            rows.append(
                SweepRow(
                    tau=float(tau),
                    psnr=metrics.psnr(result.x0, reference),
                    ssim=metrics.ssim(result.x0, reference),
                    runtime_s=elapsed,
                )
            )
        except Exception as exc:  # noqa: BLE001 - rows must not kill the sweep
            rows.append(
                SweepRow(
                    tau=float(tau),
                    psnr=float("nan"),
                    ssim=float("nan"),
                    runtime_s=time.perf_counter() - t0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return rows
