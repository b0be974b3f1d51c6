"""Benchmark harness: Bloch table, protocol purity, fits, baselines, pointer."""

import numpy as np
import pytest

from vslqsim import algebra as qa
from vslqsim import bench
from vslqsim import model as mdl
from vslqsim import pulse as pl
from vslqsim.dynamics import DensityState, IntegratorConfig, apply_unitary


@pytest.fixture(scope="module")
def layout():
    return qa.single_vslq()


class TestPreparationTable:
    def test_bloch_algebra_oracle(self, layout):
        # state prepared along direction d: <O_axis> = sign(d) on its own
        # axis and exactly zero on the other two
        zero, _ = qa.logical_basis(layout)
        rho0 = DensityState.pure(zero)
        ops = mdl.build_logical_ops(layout)
        for d in bench.DIRECTIONS:
            prepared = bench.prepare_direction(rho0, layout, "", d)
            sign = 1.0 if d[0] == "+" else -1.0
            for axis in "XYZ":
                val = qa.expectation(prepared, ops.by_axis(axis)).real
                want = sign if axis == d[1] else 0.0
                assert val == pytest.approx(want, abs=1e-10)

    def test_plus_x_is_identity(self, layout):
        u = bench.preparation_unitary(layout, "", "+X")
        assert np.allclose(u, np.eye(layout.dim))

    def test_sequential_z_projector(self, layout):
        zero, _ = qa.logical_basis(layout)
        state = bench.prepare_direction(DensityState.pure(zero), layout, "", "+Z")
        proj = bench.direction_projector(layout, "", "+Z")
        assert qa.expectation(state, proj).real == pytest.approx(1.0, abs=1e-12)

    def test_unknown_direction(self, layout):
        with pytest.raises(ValueError):
            bench.preparation_unitary(layout, "", "+Q")


class TestEquilibrate:
    def test_no_dissipation_returns_logical_zero(self, layout):
        params = mdl.VslqParams(T1P=64.0)
        sched = pl.build_idle_schedule(params, layout, 2)
        model = pl.assemble_model(params, layout, sched, include_dissipation=False)
        # drop the EC drives entirely: nothing moves, the state stays pure zero
        model = model.without_drives([n for n, _, _ in sched.drive_terms])
        state = bench.equilibrate(model, n_cycles=2,
                                  config=IntegratorConfig(dt=0.1, sample_stride=100.0))
        zero, _ = qa.logical_basis(layout)
        assert abs(state.rho - np.outer(zero, zero.conj())).max() < 1e-10

    def test_equilibrated_fidelity_and_shadow_reset(self, layout):
        params = mdl.VslqParams(T1P=64.0)
        sched = pl.build_idle_schedule(params, layout, 10)
        model = pl.assemble_model(params, layout, sched)
        state = bench.equilibrate(model, n_cycles=10,
                                  config=IntegratorConfig(dt=0.25, sample_stride=100.0,
                                                          positivity_check="off"))
        x = mdl.build_logical_ops(layout).x
        fid = 0.5 * (1.0 + qa.expectation(state, x).real)
        assert fid >= 0.99
        n_s = qa.embed(qa.number_op(2), ["Sl"], layout) \
            + qa.embed(qa.number_op(2), ["Sr"], layout)
        assert qa.expectation(state, n_s).real < 1e-2


class TestProtocolPurity:
    def test_ideal_gate_gives_zero_error(self, layout):
        # replace the physical evolution by the ideal unitary itself:
        # the harness must report p <= 1e-10
        params = mdl.VslqParams(T1P=64.0)
        zero, _ = qa.logical_basis(layout)
        rho0 = DensityState.pure(zero)
        u_ideal = mdl.ideal_single_gate(layout, "Z_L")
        deltas = []
        for d in bench.DIRECTIONS:
            prepared = bench.prepare_direction(rho0, layout, "", d)
            proj = bench.direction_projector(layout, "", d)
            f_before = qa.expectation(prepared, proj).real
            evolved = apply_unitary(prepared, u_ideal)          # "physical" gate
            inverted = apply_unitary(evolved, u_ideal.conj().T)
            f_after = qa.expectation(inverted, proj).real
            deltas.append(f_before - f_after)
        assert abs(np.mean(deltas)) <= 1e-10

    def test_span_reconstruction_matches_direct(self):
        # the 16-evolution span mode must reproduce the direct 36-run protocol
        cfg = bench.BenchmarkConfig(
            gate="CZZ", n_cycles=1, t1p_grid=(2.0,),
            integrator=IntegratorConfig(dt=0.25, sample_stride=50.0,
                                        positivity_check="off"),
            calib_dt=0.25, equilibrate_cycles=2, method="span16", n_workers=2)
        import dataclasses
        rep_span = bench.gate_error(dataclasses.replace(cfg, method="span16"))
        rep_dir = bench.gate_error(dataclasses.replace(cfg, method="direct"))
        assert rep_span.p == pytest.approx(rep_dir.p, abs=5e-7)
        for a, b in zip(rep_span.entries, rep_dir.entries):
            assert a["delta"] == pytest.approx(b["delta"], abs=5e-7)


class TestFitsAndBaselines:
    def test_fit_round_trip(self):
        t = np.array([8.0, 16.0, 32.0, 64.0])
        p = 0.0057 / t + 0.253 / t ** 2
        out = bench.fit_error_scaling(t, p)
        assert out["a"] == pytest.approx(0.0057, rel=1e-6)
        assert out["b"] == pytest.approx(0.253, rel=1e-6)
        assert out["residual_rms"] < 1e-12

    def test_fit_needs_three_points(self):
        with pytest.raises(ValueError):
            bench.fit_error_scaling([8.0, 16.0], [0.1, 0.05])

    def test_baseline_formulas(self):
        assert bench.bare_two_qubit_error(40.0, 64.0) == \
            pytest.approx(1.0 - np.exp(-0.04 / 64.0), rel=1e-12)
        assert bench.bare_single_qubit_error(20.0, 64.0) == \
            pytest.approx(1.0 - np.exp(-0.02 / 128.0), rel=1e-12)

    def test_report_mean_consistency(self):
        entries = [{"delta": d} for d in (1e-4, 2e-4, 3e-4)]
        rep = bench.GateErrorReport("CZZ", 64.0, 200.0, entries,
                                    float(np.mean([1e-4, 2e-4, 3e-4])),
                                    "direct", 2, {})
        assert rep.p == pytest.approx(np.mean([e["delta"] for e in rep.entries]),
                                      abs=1e-14)


class TestPointerStudy:
    def test_ratio_and_signs(self):
        params = mdl.VslqParams(T1P=64.0)
        rep = bench.measurement_pointer_study(params, dt=0.1)
        assert rep.ratio == pytest.approx(0.5, abs=0.1)
        assert rep.top_level_pop < 1e-3
        # opposite logical state displaces the pointer the other way
        lay = qa.measurement_layout()
        zero, one = qa.logical_basis(lay)
        assert rep.slope_intact != 0.0

    def test_zero_coupling_no_displacement(self):
        params = mdl.VslqParams(T1P=64.0)
        rep = bench.measurement_pointer_study(params, m_max=0.0, dt=0.1,
                                              duration=80.0, fit_window=(20.0, 70.0))
        assert abs(rep.slope_intact) < 1e-12
        assert abs(rep.slope_lost) < 1e-12
