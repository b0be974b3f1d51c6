"""Envelopes, EC cycle geometry, schedule builders and calibrations."""

import numpy as np
import pytest

from vslqsim import algebra as qa
from vslqsim import model as mdl
from vslqsim import pulse as pl
from vslqsim.units import ANGULAR_PER_MHZ


class TestEnvelopes:
    @pytest.mark.parametrize("env", [
        pl.Gaussian(2.0, 50.0, 10.0),
        pl.TanhWindow(1.5, 20.0, 80.0, 5.0),
        pl.QuadraticArch(3.0, 10.0, 90.0),
        pl.Constant(0.7),
        pl.Piecewise((0.0, 30.0, 100.0), (0.0, 1.0, 1.0)),
        pl.CyclicStep(100.0, 70.0, 0.1, 25.0),
        pl.SumEnvelope((pl.Gaussian(1.0, 25.0, 5.0), pl.Gaussian(1.0, 75.0, 5.0))),
    ])
    def test_finite_and_vectorized(self, env):
        t = np.linspace(0.0, 100.0, 501)
        vals = np.asarray(env(t), dtype=float)
        assert np.all(np.isfinite(vals))
        assert abs(env(42.0) - vals[210]) < 1e-12

    def test_gaussian_area_analytic(self):
        env = pl.Gaussian(2.0, 500.0, 10.0)
        exact = 2.0 * 10.0 * np.sqrt(2.0 * np.pi)
        assert abs(env.integral(0.0, 1000.0) - exact) < 1e-9

    def test_richardson_halving(self):
        # halving the sample step changes smooth-envelope integrals < 1e-9
        env = pl.SumEnvelope((pl.Gaussian(1.3, 35.0, 15.0),
                              pl.QuadraticArch(2.0, 0.0, 200.0)))
        coarse = env.integral(0.0, 200.0, n=4096)
        fine = env.integral(0.0, 200.0, n=8192)
        assert abs(coarse - fine) < 1e-9

    def test_arch_peak_and_support(self):
        env = pl.QuadraticArch(3.0, 10.0, 90.0)
        assert env(50.0) == pytest.approx(3.0)
        assert env(5.0) == 0.0 and env(95.0) == 0.0

    def test_scaled(self):
        env = pl.SumEnvelope((pl.Gaussian(1.0, 0.0, 1.0), pl.Constant(2.0)))
        assert abs(env.scaled(0.5)(0.0) - 0.5 * env(0.0)) < 1e-14

    def test_serialization_round_trip(self):
        env = pl.SumEnvelope((pl.Gaussian(1.0, 25.0, 5.0),
                              pl.CyclicStep(100.0, 70.0, 0.1, 25.0)))
        back = pl.envelope_from_dict(env.to_dict())
        t = np.linspace(0.0, 300.0, 100)
        assert np.allclose(np.asarray(env(t)), np.asarray(back(t)))

    def test_unknown_variant_rejected(self):
        with pytest.raises(ValueError):
            pl.envelope_from_dict({"variant": "sawtooth"})


@pytest.fixture(scope="module")
def params():
    return mdl.VslqParams(T1P=64.0)


@pytest.fixture(scope="module")
def ec_amp(params):
    return pl.calibrate_ec_amplitude(params)


class TestEcCycle:
    def test_rate_schedule_values(self, params, ec_amp):
        sched = pl.build_ec_cycle(params, amplitude=ec_amp)
        gamma = sched.rate_schedules["Sl"]
        assert gamma(0.0) == pytest.approx(1.0 / params.T1P)
        assert 10.0 <= gamma(90.0) <= 50.0
        assert sched.rate_schedules["l"](50.0) == pytest.approx(1.0 / params.T1P)

    def test_rates_nonnegative(self, params, ec_amp):
        sched = pl.build_ec_cycle(params, amplitude=ec_amp)
        t = np.linspace(0.0, sched.duration, 400)
        for env in sched.rate_schedules.values():
            assert np.all(np.asarray(env(t)) >= 0.0)

    def test_drive_area_is_transfer_area(self, params, ec_amp):
        # the calibrated Gaussian area sits at the pi/2 two-photon swap area
        sched = pl.build_ec_cycle(params, amplitude=ec_amp)
        area = sched.envelopes()["ec_l"].integral(0.0, sched.duration)
        assert abs(ANGULAR_PER_MHZ * area - np.pi / 2.0) < 0.15 * np.pi / 2.0

    def test_calibration_reproducible(self, params):
        assert pl.calibrate_ec_amplitude(params) == pl.calibrate_ec_amplitude(params)


class TestEcCalibration:
    def test_recovery_quality(self, params, ec_amp):
        assert pl.ec_recovery_fidelity(params, ec_amp) >= 0.95

    def test_zero_amplitude_no_recovery(self, params):
        assert pl.ec_recovery_fidelity(params, 1e-9) < 0.05

    def test_detuned_shadow_kills_recovery(self, params, ec_amp):
        from dataclasses import replace
        detuned = replace(params, omega_S=params.omega_s_resolved + 10.0 * params.W)
        assert pl.ec_recovery_fidelity(detuned, ec_amp) < 0.05

    def test_amplitude_scales_inverse_width(self, params, ec_amp):
        # fixed transfer area: half the width needs about twice the height
        narrow = pl.PulseGeometry(ec_sigma_frac=0.075)
        amp_narrow = pl.calibrate_ec_amplitude(params, narrow)
        assert amp_narrow / ec_amp == pytest.approx(2.0, rel=0.15)


@pytest.fixture(scope="module")
def params2():
    return mdl.VslqParams(T1P=64.0, copies=2)


@pytest.fixture(scope="module")
def layout2():
    return qa.two_vslq()


@pytest.fixture(scope="module")
def xcx_sched(params2, layout2):
    return pl.build_xcx_schedule(params2, layout2, n_cycles=2, calibrate=True, dt=0.1)


@pytest.fixture(scope="module")
def czz_sched(params2, layout2):
    return pl.build_czz_schedule(params2, layout2, n_cycles=2, calibrate=True, dt=0.1)


class TestXcxSchedule:
    def test_cycle_count_guard(self, params2, layout2):
        with pytest.raises(ValueError):
            pl.build_xcx_schedule(params2, layout2, n_cycles=3)
        sched = pl.build_xcx_schedule(params2, layout2, n_cycles=1,
                                      allow_any_cycles=True, calibrate=False)
        assert sched.ec_cycle_count == 1

    def test_calibrated_areas_near_nominal(self, xcx_sched):
        thetas = xcx_sched.meta["thetas"]
        assert thetas["f"] == pytest.approx(-np.pi / 4.0, rel=0.05)
        assert thetas["g1"] + thetas["g2"] == pytest.approx(np.pi / 4.0, rel=0.05)
        assert xcx_sched.meta["phase_residual"] < 1e-6

    def test_doubling_cycles_halves_per_cycle_area(self, params2, layout2, xcx_sched):
        sched4 = pl.build_xcx_schedule(params2, layout2, n_cycles=4, calibrate=False)
        env2 = xcx_sched.envelopes()["xcx_g1"]
        env4 = sched4.envelopes()["xcx_g1"]
        a2 = env2.integral(0.0, xcx_sched.duration) / 2
        a4 = env4.integral(0.0, sched4.duration) / 4
        assert a4 == pytest.approx(a2 / 2.0, rel=0.02)

    def test_pulses_sit_late_in_drive_window(self, xcx_sched):
        # gate pulses live in the last third of the EC drive window: the
        # bulk of their area falls before the dump starts, centered late
        geom = pl.PulseGeometry()
        env = xcx_sched.envelopes()["xcx_g1"]
        pre_dump = env.integral(0.0, geom.dump_start)
        total = env.integral(0.0, geom.cycle_period)
        assert pre_dump / total > 0.85
        t = np.linspace(0.0, geom.cycle_period, 2001)
        t_peak = t[np.argmax(np.abs(np.asarray(env(t))))]
        assert 2.0 * geom.dump_start / 3.0 < t_peak < geom.dump_start


class TestCzzSchedule:
    def test_quadrature_phase_condition(self, params2, czz_sched):
        # integral of g_angular^2 / W_angular equals the tuned target
        env = czz_sched.envelopes()["czz_g"]
        quad = pl._simpson(lambda t: np.asarray(env(t)) ** 2, 0.0,
                           czz_sched.duration, 16384)
        quad *= ANGULAR_PER_MHZ ** 2 / (ANGULAR_PER_MHZ * params2.W)
        assert abs(quad - czz_sched.meta["thetas"]["quad_phase"]) < 1e-6
        # ... and sits near the second-order pi/2 sector-phase value
        assert czz_sched.meta["thetas"]["quad_phase"] == pytest.approx(np.pi / 2, rel=0.1)

    def test_peak_below_perturbative_guard(self, params2, czz_sched):
        assert czz_sched.meta["peak_g"] <= params2.W / 2.0

    def test_longer_gate_lower_peak(self, params2, layout2, czz_sched):
        sched4 = pl.build_czz_schedule(params2, layout2, n_cycles=4, calibrate=False)
        env2 = czz_sched.envelopes()["czz_g"]
        env4 = sched4.envelopes()["czz_g"]
        t2 = np.linspace(0, czz_sched.duration, 2001)
        t4 = np.linspace(0, sched4.duration, 2001)
        assert np.max(np.asarray(env4(t4))) < np.max(np.asarray(env2(t2)))

    def test_schedule_serialization_round_trip(self, params2, layout2, czz_sched):
        d = czz_sched.to_dict()
        back = pl.schedule_from_dict(d, layout2, params2)
        assert back.duration == czz_sched.duration
        t = np.linspace(0.0, czz_sched.duration, 200)
        for (n1, o1, e1), (n2, o2, e2) in zip(czz_sched.drive_terms, back.drive_terms):
            assert n1 == n2
            assert np.allclose(np.asarray(e1(t)), np.asarray(e2(t)))
            assert abs((o1 - o2).toarray()).max() < 1e-14


class TestSingleQubitSchedule:
    def test_idle_has_no_gate_drive(self, params):
        lay = qa.single_vslq()
        sched = pl.build_single_qubit_schedule(params, lay, "idle", n_cycles=2)
        assert all(n.startswith("ec_") for n, _, _ in sched.drive_terms)

    def test_gate_area_calibrates(self, params):
        lay = qa.single_vslq()
        sched = pl.build_single_qubit_schedule(params, lay, "X_L", n_cycles=2, dt=0.1)
        assert sched.meta["phase_residual"] < 1e-6
        assert sched.meta["theta"] == pytest.approx(np.pi / 2.0, rel=0.05)


class TestAssembleModel:
    def test_channels_match_schedule(self, params):
        lay = qa.single_vslq()
        sched = pl.build_idle_schedule(params, lay, 1)
        model = pl.assemble_model(params, lay, sched)
        assert {c.label for c in model.channels} == set(sched.rate_schedules)
        closed = pl.assemble_model(params, lay, sched, include_dissipation=False)
        assert closed.channels == ()
