"""Embedded invariant suite behind `rdmd selfcheck`.

Runs the structural checks that must hold on any build: operator
adjoints, schedule monotonicity, the noise/denoise round-trip identity,
the renoising identity, kernel normalization, and the scalar fixed-point
oracle.  A fault-injection hook deliberately breaks kernel normalization
so tests can confirm the checks are actually independent.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .denoisers import PriorSpectrum, WienerBackend, DCTShrinkBackend
from .operators import CircularBlur, Identity, Kernel, Mask, SRBicubic, make_gaussian_kernel
from .schedule import build_det_schedule, build_schedule, lookup_tprime
from .solver import SolverConfig, restore_red


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _adjoint_gap(op, rng) -> float:
    u = rng.standard_normal(op.input_shape)
    v = rng.standard_normal(op.output_shape)
    lhs = np.vdot(op.apply(u), v)
    rhs = np.vdot(u, op.adjoint(v))
    return abs(lhs - rhs) / (np.linalg.norm(u) * np.linalg.norm(v))


def run_selfcheck(
    *, corrupt_kernel_normalization: bool = False, workers: int = 1
) -> list[CheckResult]:
    kernel = make_gaussian_kernel(5, 1.5)
    if corrupt_kernel_normalization:
        kernel = Kernel(kernel.taps * 1.01)

    def check_kernel_normalization() -> str:
        err = kernel.normalization_error()
        assert err <= 1e-12, f"kernel taps sum off by {err:.3g}"
        return f"normalization error {err:.3g}"

    def check_adjoints() -> str:
        rng = np.random.default_rng(101)
        worst = 0.0
        for shape in [(1, 12, 12), (3, 8, 8), (2, 16, 12)]:
            mask = (rng.random((shape[1], shape[2])) > 0.5).astype(np.float64)
            ops = [
                Identity(shape),
                CircularBlur(kernel, shape),
                SRBicubic(2, shape),
                Mask(mask, shape),
            ]
            for op in ops:
                worst = max(worst, _adjoint_gap(op, rng))
        assert worst <= 1e-10, f"worst adjoint gap {worst:.3g}"
        return f"worst adjoint gap {worst:.3g}"

    def check_schedule() -> str:
        sched = build_schedule(1000)
        assert np.all(np.diff(sched.alpha_bar) < 0.0), "alpha_bar not decreasing"
        assert np.all(np.diff(sched.sigma_bar) > 0.0), "sigma_bar not increasing"
        gap = np.max(np.abs(sched.alpha_bar * (1.0 + sched.sigma_bar**2) - 1.0))
        assert gap <= 1e-12, f"alpha_bar(1 + sigma_bar^2) off by {gap:.3g}"
        i = lookup_tprime(sched, float(sched.sigma_bar[617]))
        assert i == 617, f"round-trip lookup gave {i}"
        return f"identity gap {gap:.3g}"

    def check_eq8_roundtrip() -> str:
        sched = build_schedule(1000)
        rng = np.random.default_rng(7)
        x = rng.standard_normal((1, 8, 8))
        worst = 0.0
        for backend in [WienerBackend(PriorSpectrum.iid(1.0)), DCTShrinkBackend()]:
            for t in (1, 57, 1000):
                ab = float(sched.alpha_bar[t])
                rebuilt = np.sqrt(ab) * backend.denoise(x, t, sched) + np.sqrt(
                    1.0 - ab
                ) * backend.predict_eps(x, t, sched)
                worst = max(worst, float(np.max(np.abs(rebuilt - x))))
        assert worst <= 1e-12, f"round-trip gap {worst:.3g}"
        return f"round-trip gap {worst:.3g}"

    def check_renoising_identity() -> str:
        sched = build_schedule(1000)
        backend = WienerBackend(PriorSpectrum.iid(0.5))
        rng = np.random.default_rng(11)
        x = rng.standard_normal((1, 8, 8))
        worst = 0.0
        for t in (3, 250, 999):
            ab = float(sched.alpha_bar[t])
            eps = backend.predict_eps(x, t, sched)
            x0t = (x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
            eps_hat = (x - np.sqrt(ab) * x0t) / np.sqrt(1.0 - ab)
            worst = max(worst, float(np.max(np.abs(eps_hat - eps))))
        assert worst <= 1e-12, f"renoising identity gap {worst:.3g}"
        return f"identity gap {worst:.3g}"

    def check_scalar_oracle() -> str:
        sched = build_schedule(1000)
        det = build_det_schedule(200, "constant", {"sigma": 0.3})
        s2 = 0.25
        backend = WienerBackend(PriorSpectrum.iid(s2))
        cfg = SolverConfig(
            lam=20.0, tau=0.0, zeta=0.0, eta=0.25, sigma_n=0.05, t_solve=200, seed=0
        )
        y = np.array([[[0.7]]])
        res = restore_red(y, Identity((1, 1, 1)), backend, sched, det, cfg)
        tp = lookup_tprime(sched, det.at(1))
        ab = float(sched.alpha_bar[tp])
        gain = np.sqrt(ab) * s2 / (ab * s2 + (1.0 - ab))
        c = cfg.lam * cfg.sigma_n**2
        expected = 2.0 * 0.7 / (2.0 + c * (1.0 - gain))
        rel = abs(float(res.x0[0, 0, 0]) - expected) / abs(expected)
        assert rel <= 1e-8, f"scalar fixed point off by {rel:.3g}"
        return f"relative error {rel:.3g}"

    checks: list[tuple[str, Callable[[], str]]] = [
        ("kernel-normalization", check_kernel_normalization),
        ("operator-adjoints", check_adjoints),
        ("schedule-monotone", check_schedule),
        ("noise-denoise-roundtrip", check_eq8_roundtrip),
        ("renoising-identity", check_renoising_identity),
        ("scalar-fixed-point", check_scalar_oracle),
    ]

    def run_one(item: tuple[str, Callable[[], str]]) -> CheckResult:
        name, fn = item
        try:
            return CheckResult(name=name, passed=True, detail=fn())
        except AssertionError as exc:
            return CheckResult(name=name, passed=False, detail=str(exc))

    if workers <= 1:
        return [run_one(item) for item in checks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one, checks))
