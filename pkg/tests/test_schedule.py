import numpy as np
import pytest

from rdmd.errors import ParameterError
from rdmd.schedule import (
    DetSchedule,
    ScheduleSpec,
    build_det_schedule,
    build_schedule,
    lookup_tprime,
    solver_index_map,
)


class TestBuildSchedule:
    def test_single_step(self):
        s = build_schedule(1, 0.1, 0.1)
        np.testing.assert_allclose(s.alpha_bar, [1.0, 0.9], rtol=0, atol=0)
        np.testing.assert_allclose(s.sigma_bar[1], np.sqrt(0.1 / 0.9), rtol=1e-15)
        assert s.sigma_bar[0] == 0.0

    def test_two_step_product(self):
        s = build_schedule(2, 0.1, 0.2)
        assert s.alpha_bar[2] == pytest.approx(0.9 * 0.8, abs=1e-15)

    def test_full_schedule_matches_log_domain_oracle(self):
        # Independent path: accumulate in the log domain, then exponentiate.
        T = 1000
        s = build_schedule(T, 1e-4, 0.02)
        beta = np.linspace(1e-4, 0.02, T)
        oracle = np.exp(np.cumsum(np.log1p(-beta)))
        rel = np.abs(s.alpha_bar[1:] - oracle) / oracle
        assert rel.max() <= 1e-12

    def test_monotonicity_and_identity(self):
        s = build_schedule(1000)
        assert np.all(np.diff(s.alpha_bar) < 0.0)
        assert np.all(np.diff(s.sigma_bar) > 0.0)
        gap = np.abs(s.alpha_bar * (1.0 + s.sigma_bar**2) - 1.0)
        assert gap.max() <= 1e-12

    def test_deterministic_bitwise(self):
        a = build_schedule(500, 2e-4, 0.015)
        b = build_schedule(500, 2e-4, 0.015)
        assert a.alpha_bar.tobytes() == b.alpha_bar.tobytes()
        assert a.sigma_bar.tobytes() == b.sigma_bar.tobytes()

    @pytest.mark.parametrize(
        "kwargs,field",
        [
            (dict(T=0), "T"),
            (dict(beta_start=0.0), "beta_start"),
            (dict(beta_start=1.0), "beta_start"),
            (dict(beta_end=1.0), "beta_end"),
            (dict(beta_start=0.3, beta_end=0.2), "beta_start"),
            (dict(T=2, beta_start=0.1, beta_end=0.1), "beta_start"),
        ],
    )
    def test_parameter_errors_name_the_field(self, kwargs, field):
        args = dict(T=10, beta_start=1e-4, beta_end=0.02)
        args.update(kwargs)
        with pytest.raises(ParameterError, match=field):
            build_schedule(**args)

    def test_immutability(self):
        s = build_schedule(10)
        with pytest.raises(ValueError):
            s.beta[0] = 0.5


class TestLookupTprime:
    def test_exact_member(self):
        s = build_schedule(100, 1e-3, 0.05)
        assert lookup_tprime(s, float(s.sigma_bar[5])) == 5

    def test_below_grid_clamps_to_one(self):
        s = build_schedule(100, 1e-3, 0.05)
        assert lookup_tprime(s, float(s.sigma_bar[1]) / 10.0) == 1

    def test_above_grid_clamps_to_T(self):
        s = build_schedule(100, 1e-3, 0.05)
        assert lookup_tprime(s, float(s.sigma_bar[100]) * 10.0) == 100

    def test_matches_exhaustive_scan(self):
        s = build_schedule(300)
        rng = np.random.default_rng(5)
        for sigma in rng.uniform(1e-3, 5.0, size=50):
            best, best_gap = 1, float("inf")
            for i in range(1, s.T + 1):
                gap = abs(sigma - float(s.sigma_bar[i]))
                if gap < best_gap:
                    best, best_gap = i, gap
            assert lookup_tprime(s, float(sigma)) == best

    def test_roundtrip_identity_all_indices(self):
        s = build_schedule(200)
        for i in range(1, s.T + 1):
            assert lookup_tprime(s, float(s.sigma_bar[i])) == i

    def test_rejects_nonpositive(self):
        s = build_schedule(10)
        with pytest.raises(ParameterError):
            lookup_tprime(s, 0.0)


class TestDetSchedule:
    def test_constant(self):
        det = build_det_schedule(3, "constant", {"sigma": 0.05})
        np.testing.assert_array_equal(det.sigma_prime, [0.05, 0.05, 0.05])

    def test_log_spaced_hand_checked(self):
        # ratio per step is sqrt(0.05 / 0.2) = 0.5
        det = build_det_schedule(3, "log_spaced", {"sigma_max": 0.2, "sigma_min": 0.05})
        np.testing.assert_allclose(det.sigma_prime, [0.2, 0.1, 0.05], rtol=1e-14)

    def test_degenerate_range(self):
        det = build_det_schedule(4, "log_spaced", {"sigma_max": 0.07, "sigma_min": 0.07})
        np.testing.assert_allclose(det.sigma_prime, 0.07, rtol=1e-15)

    def test_at_counts_down(self):
        det = build_det_schedule(3, "log_spaced", {"sigma_max": 0.2, "sigma_min": 0.05})
        assert det.at(3) == pytest.approx(0.2)
        assert det.at(1) == pytest.approx(0.05)
        with pytest.raises(ParameterError):
            det.at(4)

    @pytest.mark.parametrize(
        "mode,params",
        [
            ("constant", {"sigma": 0.0}),
            ("constant", {}),
            ("log_spaced", {"sigma_max": 0.0, "sigma_min": 0.0}),
            ("log_spaced", {"sigma_max": 0.01, "sigma_min": 0.2}),
            ("nonsense", {"sigma": 0.1}),
        ],
    )
    def test_parameter_errors(self, mode, params):
        with pytest.raises(ParameterError):
            build_det_schedule(3, mode, params)


class TestSolverIndexMap:
    def test_uniform_subsampling(self):
        m = solver_index_map(1000, 100)
        assert m[0] == 0 and m[100] == 1000
        np.testing.assert_array_equal(m, 10 * np.arange(101))

    def test_strictly_increasing(self):
        for t_solve in (1, 7, 99, 1000):
            m = solver_index_map(1000, t_solve)
            assert np.all(np.diff(m) >= 1)
            assert m[0] == 0 and m[-1] == 1000

    def test_identity_when_equal(self):
        np.testing.assert_array_equal(solver_index_map(50, 50), np.arange(51))

    def test_rejects_oversampling(self):
        with pytest.raises(ParameterError):
            solver_index_map(100, 101)


class TestScheduleSpec:
    def test_roundtrip(self):
        spec = ScheduleSpec(t_train=500, beta_start=2e-4, beta_end=0.01, t_solve=50,
                            det_mode="constant", det_params={"sigma": 0.1})
        again = ScheduleSpec.from_dict(spec.to_dict())
        assert again == spec
        sched, det = again.build()
        assert sched.T == 500 and det.T == 50

    def test_unknown_keys_rejected(self):
        with pytest.raises(ParameterError, match="bogus"):
            ScheduleSpec.from_dict({"bogus": 1})
