"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each criterion prints a `[ACCEPTANCE] <name>: PASS/FAIL (runtime)` line
(run with `pytest tests/test_acceptance.py -s` to see them live) and
enforces its runtime budget.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import replace

import numpy as np

from rdmd import metrics
from rdmd.denoisers import PriorSpectrum, WienerBackend
from rdmd.operators import (
    CircularBlur,
    Identity,
    Mask,
    SRBicubic,
    degrade,
    make_gaussian_kernel,
    make_motion_kernel,
)
from rdmd.schedule import build_det_schedule, build_schedule, lookup_tprime, solver_index_map
from rdmd.solver import SolverConfig, restore, restore_diffpir_like, restore_red
from reference import naive_circular_conv, naive_psnr, naive_ssim, otf_direct

SCHED = build_schedule(1000)


@contextmanager
def criterion(name: str, budget_s: float):
    t0 = time.perf_counter()
    try:
        yield
    except Exception:
        print(f"[ACCEPTANCE] {name}: FAIL ({time.perf_counter() - t0:.2f}s)")
        raise
    elapsed = time.perf_counter() - t0
    assert elapsed < budget_s, f"{name}: {elapsed:.2f}s over the {budget_s}s budget"
    print(f"[ACCEPTANCE] {name}: PASS ({elapsed:.2f}s)")


def smooth_image(shape_hw, seed):
    S = PriorSpectrum.smoothness(shape_hw).grid(shape_hw)
    rng = np.random.default_rng(seed)
    x = np.fft.ifft2(np.sqrt(S) * np.fft.fft2(rng.standard_normal(shape_hw))).real
    return ((x - x.min()) / (x.max() - x.min()))[None]


def gaussian_prior_testbed():
    """32x32 circulant-blur setup shared by the solver criteria."""
    H = W = 32
    kern = make_gaussian_kernel(9, 3.0)
    op = CircularBlur(kern, (1, H, W))
    spectrum = PriorSpectrum.smoothness((H, W), s2=1.0, rho=16.0)
    x_true = smooth_image((H, W), 42)
    y = degrade(op, x_true, 0.05, seed=7)
    return op, kern, spectrum, x_true, y


def test_adjoint_suite():
    with criterion("adjoint-suite", 5.0):
        rng = np.random.default_rng(0)
        worst = 0.0
        for shape in [(1, 8, 8), (3, 16, 12), (2, 24, 24)]:
            mask = (rng.random((shape[1], shape[2])) > 0.5).astype(np.float64)
            ops = [
                Identity(shape),
                CircularBlur(make_gaussian_kernel(5, 1.4), shape),
                CircularBlur(make_motion_kernel(7, 5.0, 25.0), shape),
                SRBicubic(2, shape),
                Mask(mask, shape),
            ]
            for op in ops:
                u = rng.standard_normal(op.input_shape)
                v = rng.standard_normal(op.output_shape)
                gap = abs(np.vdot(op.apply(u), v) - np.vdot(u, op.adjoint(v)))
                gap /= np.linalg.norm(u) * np.linalg.norm(v)
                worst = max(worst, gap)
        assert worst <= 1e-10, f"worst adjoint gap {worst:.3g}"


def test_schedule_suite():
    with criterion("schedule-suite", 1.0):
        assert np.all(np.diff(SCHED.alpha_bar) < 0.0)
        assert np.all(np.diff(SCHED.sigma_bar) > 0.0)
        identity_gap = np.max(np.abs(SCHED.alpha_bar * (1.0 + SCHED.sigma_bar**2) - 1.0))
        assert identity_gap <= 1e-12
        for i in range(1, SCHED.T + 1):
            assert lookup_tprime(SCHED, float(SCHED.sigma_bar[i])) == i


def test_posterior_mean_oracle():
    with criterion("wiener-posterior-oracle", 5.0):
        for n in (8, 16):
            spectrum = PriorSpectrum.smoothness((n, n), s2=0.9, rho=14.0)
            backend = WienerBackend(spectrum)
            rng = np.random.default_rng(n)
            x = rng.standard_normal((1, n, n))
            for t in (31, 416, 987):
                ab = float(SCHED.alpha_bar[t])
                S = spectrum.grid((n, n))
                # analytic per-frequency posterior mean
                want = np.fft.ifft2(
                    (np.sqrt(ab) * S / (ab * S + 1.0 - ab)) * np.fft.fft2(x[0])
                ).real[None]
                got = backend.denoise(x, t, SCHED)
                assert np.max(np.abs(got - want)) <= 1e-10


def test_renoising_identity():
    with criterion("renoising-identity", 1.0):
        backend = WienerBackend(PriorSpectrum.smoothness((8, 8)))
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 8, 8))
        for t in rng.integers(1, 1001, size=10):
            t = int(t)
            ab = float(SCHED.alpha_bar[t])
            eps = backend.predict_eps(x, t, SCHED)
            x0t = (x - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
            eps_hat = (x - np.sqrt(ab) * x0t) / np.sqrt(1.0 - ab)
            assert np.max(np.abs(eps_hat - eps)) <= 1e-12


def test_linear_closed_form_oracle():
    with criterion("linear-closed-form-oracle", 30.0):
        op, kern, spectrum, _, y = gaussian_prior_testbed()
        sigma_p, lam, sigma_n = 0.3, 50.0, 0.05

        tp = lookup_tprime(SCHED, sigma_p)
        ab = float(SCHED.alpha_bar[tp])
        S = spectrum.grid((32, 32))
        m = np.sqrt(ab) * S / (ab * S + 1.0 - ab)  # denoiser frequency response
        lam_A = otf_direct(kern.taps, 32, 32)
        c = lam * sigma_n**2
        d = 2.0 * np.abs(lam_A) ** 2 + c * (1.0 - m)
        z_star = np.fft.ifft2(2.0 * np.conj(lam_A) * np.fft.fft2(y[0]) / d).real[None]

        eta = 2.0 / (float(d.max()) + float(d.min()))  # spectrally safe
        assert np.max(np.abs(1.0 - eta * d)) < 1.0

        n_iters = 2000
        det = build_det_schedule(n_iters, "constant", {"sigma": sigma_p})
        cfg = SolverConfig(lam=lam, tau=0.0, zeta=0.0, eta=eta, sigma_n=sigma_n,
                           t_solve=n_iters, seed=0)
        res = restore_red(y, op, WienerBackend(spectrum), SCHED, det, cfg)
        rel = np.linalg.norm(res.x0 - z_star) / np.linalg.norm(z_star)
        assert rel <= 1e-6, f"relative error {rel:.3g}"


def test_limiting_case_equivalences():
    with criterion("limiting-cases", 10.0):
        op, kern, spectrum, _, y = gaussian_prior_testbed()
        backend = WienerBackend(spectrum)

        # tau = 0 with renoising disabled is restore_red, bit for bit
        det = build_det_schedule(20, "constant", {"sigma": 0.3})
        cfg = SolverConfig(lam=20.0, tau=0.0, zeta=0.5, eta=0.05, sigma_n=0.05,
                           t_solve=20, seed=5)
        a = restore_red(y, op, backend, SCHED, det, cfg)
        b = restore(y, op, backend, SCHED, det, cfg, renoise=False)
        assert a.x0.tobytes() == b.x0.tobytes()

        # single tau = 1 step against a straight-line reference that uses
        # its own naive spatial-domain convolutions
        rng = np.random.default_rng(6)
        x_T = rng.standard_normal(op.input_shape)
        cfg1 = SolverConfig(lam=7.0, tau=1.0, zeta=1.0, eta=0.003, sigma_n=0.2,
                            t_solve=1, seed=21)
        res = restore_diffpir_like(y, op, backend, SCHED, cfg1, x_init=x_T)

        ti = int(solver_index_map(SCHED.T, 1)[1])
        ab = float(SCHED.alpha_bar[ti])
        sb = float(SCHED.sigma_bar[ti])
        eps = backend.predict_eps(x_T, ti, SCHED)
        x0t = (x_T - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)
        z = naive_circular_conv(y, kern.taps[::-1, ::-1])
        z_ref = z - cfg1.eta * (
            2.0 * naive_circular_conv(naive_circular_conv(z, kern.taps) - y,
                                      kern.taps[::-1, ::-1])
            + (cfg1.lam * cfg1.sigma_n**2 / sb**2) * (z - x0t)
        )
        assert np.max(np.abs(res.x0 - z_ref)) <= 1e-12


def test_gradient_check():
    with criterion("gradient-check", 20.0):
        rng = np.random.default_rng(8)
        shape = (1, 8, 8)
        ops = [
            CircularBlur(make_gaussian_kernel(5, 1.3), shape),
            SRBicubic(2, shape),
        ]
        for op in ops:
            y = rng.random(op.output_shape)
            z = rng.standard_normal(shape)

            def J(v):
                r = op.apply(v) - y
                return float(np.vdot(r, r).real)

            grad = 2.0 * op.adjoint(op.apply(z) - y)
            h = 1e-6
            fd = np.zeros_like(z)
            for idx in np.ndindex(shape):
                e = np.zeros(shape)
                e[idx] = h
                fd[idx] = (J(z + e) - J(z - e)) / (2.0 * h)
            rel = np.linalg.norm(fd - grad) / np.linalg.norm(grad)
            assert rel <= 1e-6, f"{op.kind}: finite-difference gap {rel:.3g}"


def test_distortion_perception_trend():
    with criterion("distortion-perception-trend", 120.0):
        op, _, spectrum, x_true, y = gaussian_prior_testbed()
        backend = WienerBackend(spectrum)
        det = build_det_schedule(100, "constant", {"sigma": 0.3})
        lam, sigma_n = 20.0, 0.05
        sb_min = float(SCHED.sigma_bar[solver_index_map(1000, 100)[1]])
        eta = 1.8 / (2.0 + lam * sigma_n**2 / sb_min**2)  # stable for tau = 1

        def mse_of(result):
            return float(np.mean((np.clip(result.x0, 0, 1) - np.clip(x_true, 0, 1)) ** 2))

        mses0, mses1 = [], []
        for seed in range(100, 120):
            base = SolverConfig(lam=lam, tau=0.0, zeta=1.0, eta=eta, sigma_n=sigma_n,
                                t_solve=100, seed=seed)
            mses0.append(mse_of(restore(y, op, backend, SCHED, det, base)))
            mses1.append(mse_of(restore(y, op, backend, SCHED, None,
                                        replace(base, tau=1.0))))
        gap = np.mean(mses1) - np.mean(mses0)
        se = float(np.std(mses1, ddof=1) / np.sqrt(len(mses1)))
        assert gap >= 3.0 * se, f"gap {gap:.3g} below 3 SE ({se:.3g})"


def test_determinism():
    with criterion("determinism", 30.0):
        op, _, spectrum, x_true, y = gaussian_prior_testbed()
        backend = WienerBackend(spectrum)
        det = build_det_schedule(12, "constant", {"sigma": 0.3})
        for zeta in (0.0, 1.0):
            cfg = SolverConfig(lam=20.0, tau=0.3, zeta=zeta, eta=0.02,
                               sigma_n=0.05, t_solve=12, seed=99)

            def job(_):
                r = restore(y, op, backend, SCHED, det, cfg, reference=x_true)
                return r.x0.tobytes(), r.trace_csv()

            serial = job(None)
            assert job(None) == serial  # run-to-run
            for workers in (1, 4):
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    outs = list(pool.map(job, range(4)))
                assert all(o == serial for o in outs), f"workers={workers}"

            # the written 8-bit image is byte-identical too
            from rdmd import imgio
            import tempfile, os

            with tempfile.TemporaryDirectory() as d:
                p1, p2 = os.path.join(d, "a.png"), os.path.join(d, "b.png")
                imgio.write_image(
                    restore(y, op, backend, SCHED, det, cfg).x0, p1
                )
                imgio.write_image(
                    restore(y, op, backend, SCHED, det, cfg).x0, p2
                )
                with open(p1, "rb") as f1, open(p2, "rb") as f2:
                    assert f1.read() == f2.read()


def test_metrics_oracle():
    with criterion("metrics-oracle", 30.0):
        rng = np.random.default_rng(9)
        for _ in range(3):
            a = rng.random((1, 16, 16))
            b = rng.random((1, 16, 16))
            assert abs(metrics.psnr(a, b) - naive_psnr(a, b)) <= 1e-10
            assert abs(metrics.ssim(a, b) - naive_ssim(a, b)) <= 1e-10
