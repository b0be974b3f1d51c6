"""Acceptance suite: one test per release criterion, one PASS line each.

The two-qubit reproduction runs (criteria 6-8) integrate dim-1296 master
equations for hours; their results are shared through session fixtures and
optionally cached on disk (set VSLQSIM_ACCEPT_CACHE to a directory) keyed
by a digest of the package source, so a cache can never outlive a code
change.  Everything else runs in seconds to minutes.
"""

import hashlib
import json
import math
import os
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from conftest import record_acceptance
from vslqsim import algebra as qa
from vslqsim import bench
from vslqsim import model as mdl
from vslqsim import noise
from vslqsim import pulse as pl
from vslqsim.dynamics import DensityState, IntegratorConfig, evolve, \
    perturbative_phase_check
from vslqsim.units import angular, rate_from_mhz

HEAVY_DT = 0.1        # ns; positivity floor verified (final min-eig ~ -6e-11)
GRID = (8.0, 16.0, 32.0, 64.0)


def _source_digest() -> str:
    src = Path(__file__).resolve().parents[1] / "src" / "vslqsim"
    h = hashlib.sha256()
    for path in sorted(src.glob("*.py")):
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def _cached(tag: str, compute):
    cache_dir = os.environ.get("VSLQSIM_ACCEPT_CACHE")
    if not cache_dir:
        return compute()
    key = f"{tag}_{_source_digest()}"
    path = Path(cache_dir) / f"{key}.json"
    if path.exists():
        return json.loads(path.read_text())
    out = compute()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(out))
    return out


def _two_qubit_config(gate, n_cycles, grid):
    return bench.BenchmarkConfig(
        gate=gate, n_cycles=n_cycles, t1p_grid=tuple(grid),
        calib_dt=HEAVY_DT, n_workers=2,
        integrator=IntegratorConfig(dt=HEAVY_DT, sample_stride=50.0,
                                    positivity_check="final"))


@pytest.fixture(scope="session")
def czz_sweep():
    def compute():
        rep = bench.sweep_and_fit(_two_qubit_config("CZZ", 2, GRID))
        return {"points": rep.points, "a": rep.a, "b": rep.b,
                "baselines": rep.baselines}
    return _cached("czz200_sweep", compute)


@pytest.fixture(scope="session")
def xcx_points():
    def compute():
        p200 = bench.gate_error(_two_qubit_config("XCX", 2, (64.0,))).p
        p400 = bench.gate_error(_two_qubit_config("XCX", 4, (64.0,))).p
        return {"p200": p200, "p400": p400}
    return _cached("xcx_64", compute)


# ---------------------------------------------------------------------------
# 1. error transparency (exact)
# ---------------------------------------------------------------------------

def test_criterion_1_error_transparency():
    layout = qa.single_vslq()
    logical = qa.logical_basis(layout)
    ops = mdl.build_logical_ops(layout)
    worst = 0.0
    for q in ("l", "r"):
        a_q = qa.embed(qa.annihilation(3), [q], layout)
        for o in (ops.x, ops.z):
            for psi in logical:
                worst = max(worst, np.linalg.norm((a_q @ o - o @ a_q) @ psi))
    assert worst <= 1e-12
    # bare operators: O(1) commutator with the loss of every qubit they act on
    bare_min = math.inf
    for o, qubits in ((ops.x_bare, ("l",)), (ops.z_bare, ("l", "r"))):
        for q in qubits:
            a_q = qa.embed(qa.annihilation(3), [q], layout)
            for psi in logical:
                bare_min = min(bare_min,
                               np.linalg.norm((a_q @ o - o @ a_q) @ psi))
    assert bare_min >= 0.5
    record_acceptance(f"ACCEPTANCE 1 error-transparency: PASS "
                      f"(transparent max {worst:.1e}, bare min {bare_min:.2f})")


# ---------------------------------------------------------------------------
# 2. H_P ground space
# ---------------------------------------------------------------------------

def test_criterion_2_ground_space():
    params = mdl.VslqParams()
    lay = qa.SystemLayout([("l", 3), ("r", 3)])
    h = mdl.build_hp(params, lay).toarray()
    ev, vec = np.linalg.eigh(h)
    w_a = angular(params.W)
    assert abs(ev[0] + w_a) < 1e-10 and abs(ev[1] + w_a) < 1e-10
    assert ev[2] > -w_a + 1e-6        # exactly two-fold degenerate
    xx = qa.embed(sp.kron(qa.xtilde(3), qa.xtilde(3)), ["l", "r"], lay).toarray()
    ground = vec[:, :2]
    overlap_err = 0.0
    for psi in qa.logical_basis(lay):
        proj = ground @ (ground.conj().T @ psi)
        overlap_err = max(overlap_err, np.linalg.norm(proj - psi))
        assert abs(np.vdot(psi, xx @ psi) - 1.0) < 1e-10
    assert overlap_err < 1e-10
    record_acceptance(f"ACCEPTANCE 2 ground-space: PASS "
                      f"(degenerate at -W, logical overlap err {overlap_err:.1e})")


# ---------------------------------------------------------------------------
# 3. integrator oracles
# ---------------------------------------------------------------------------

def test_criterion_3_integrator_oracles():
    from vslqsim.dynamics import CollapseChannel, LindbladModel

    lay = qa.SystemLayout([("q", 2)])
    gamma = 10.0
    model = LindbladModel(lay, sp.csr_matrix((2, 2), dtype=complex), (),
                          (CollapseChannel("q", pl.Constant(gamma)),))
    cfg = IntegratorConfig(dt=0.05, sample_stride=10.0)
    res = evolve(DensityState(np.diag([0.0, 1.0]).astype(complex)), model,
                 0.0, 5.0 / rate_from_mhz(gamma), cfg,
                 observables={"p1": qa.fock_projector(2, 1)})
    decay_err = np.abs(res.expectations["p1"].real
                       - np.exp(-rate_from_mhz(gamma) * res.times)).max()
    assert decay_err < 1e-8

    sx = sp.csr_matrix(np.array([[0, 1], [1, 0]], dtype=complex)) / 2.0
    model_r = LindbladModel(lay, sp.csr_matrix((2, 2), dtype=complex),
                            (("d", sx, pl.Constant(5.0)),), ())
    res_r = evolve(DensityState(np.diag([1.0, 0.0]).astype(complex)), model_r,
                   0.0, 400.0, cfg, observables={"p1": qa.fock_projector(2, 1)})
    rabi_err = np.abs(res_r.expectations["p1"].real
                      - np.sin(angular(5.0) * res_r.times / 2.0) ** 2).max()
    assert rabi_err < 1e-8

    vals = []
    for dt in (0.1, 0.05):
        r = evolve(DensityState(np.diag([0.2, 0.8]).astype(complex)), model,
                   0.0, 300.0, IntegratorConfig(dt=dt, sample_stride=300.0),
                   observables={"p1": qa.fock_projector(2, 1)})
        vals.append(r.expectations["p1"].real[-1])
    halving = abs(vals[0] - vals[1])
    assert halving < 1e-6
    record_acceptance(f"ACCEPTANCE 3 integrator-oracles: PASS (decay {decay_err:.1e},"
                      f" rabi {rabi_err:.1e}, dt-halving {halving:.1e})")


# ---------------------------------------------------------------------------
# 4. CZZ perturbative equivalence
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_4_czz_perturbative_equivalence():
    params = mdl.VslqParams()
    g = params.W / 10.0
    duration = 2000.0
    free = perturbative_phase_check(params, g, duration, dt=0.1)
    rate_err = abs(abs(free.rate) / free.expected_rate - 1.0)
    assert rate_err < 0.02
    lossy = perturbative_phase_check(params, g, duration,
                                     with_loss_at=duration / 2.0, dt=0.1)
    invariance = abs(lossy.sector_phase / free.sector_phase - 1.0)
    assert invariance < 2.0 * (g / params.W) ** 2
    record_acceptance(f"ACCEPTANCE 4 czz-perturbative: PASS (rate err {rate_err:.4f},"
                      f" single-loss phase shift {invariance:.4f})")


# ---------------------------------------------------------------------------
# 5. no-noise gate calibration
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_5_no_noise_calibration():
    results = {}
    for gate, floor in (("CZZ", 1e-6), ("XCX", 1e-5)):
        cfg = bench.BenchmarkConfig(
            gate=gate, n_cycles=2, t1p_grid=(64.0,), no_dissipation=True,
            calib_dt=HEAVY_DT,
            integrator=IntegratorConfig(dt=HEAVY_DT, sample_stride=25.0))
        rep = bench.gate_error(cfg)
        results[gate] = rep.p
        assert abs(rep.p) <= floor, f"{gate} coherent error {rep.p:.2e} > {floor}"
    record_acceptance(f"ACCEPTANCE 5 no-noise-calibration: PASS "
                      f"(CZZ {results['CZZ']:.2e} <= 1e-6, "
                      f"XCX {results['XCX']:.2e} <= 1e-5)")


# ---------------------------------------------------------------------------
# 6. paper-scale quantitative reproduction (factor-2 tolerance)
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_6_quantitative_reproduction(czz_sweep, xcx_points):
    p_czz64 = dict((t, p) for t, p in czz_sweep["points"])[64.0]
    assert 0.7 * 1.48e-4 <= p_czz64 <= 3.0 * 1.48e-4
    p_xcx400 = xcx_points["p400"]
    assert 0.7 * 5.3e-4 <= p_xcx400 <= 3.0 * 5.3e-4
    a, b = czz_sweep["a"], czz_sweep["b"]
    assert 0.0057 / 3.0 <= a <= 0.0057 * 3.0
    assert 0.253 / 3.0 <= b <= 0.253 * 3.0
    record_acceptance(
        f"ACCEPTANCE 6 quantitative-reproduction: PASS "
        f"(CZZ200@64us p={p_czz64:.3e} [ref 1.48e-4], "
        f"XCX400@64us p={p_xcx400:.3e} [ref 5.3e-4], "
        f"fit a={a:.4f} [ref 0.0057], b={b:.3f} [ref 0.253])")


# ---------------------------------------------------------------------------
# 7. scaling properties
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_7_scaling(czz_sweep, xcx_points):
    ps = [p for _, p in czz_sweep["points"]]
    assert all(p1 > p2 for p1, p2 in zip(ps, ps[1:])), "p not monotone in T1P"
    ratio = ps[0] / ps[-1]
    assert ratio > 8.0
    # quadratic fit term dominates at 8 us
    a, b = czz_sweep["a"], czz_sweep["b"]
    assert b / 8.0 ** 2 > a / 8.0
    assert xcx_points["p400"] <= xcx_points["p200"]
    record_acceptance(
        f"ACCEPTANCE 7 scaling: PASS (monotone, p(8)/p(64)={ratio:.1f} > 8, "
        f"b/T^2 dominates at 8us, XCX p400={xcx_points['p400']:.3e} <= "
        f"p200={xcx_points['p200']:.3e})")


# ---------------------------------------------------------------------------
# 8. bare-gate baselines
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_8_baselines(czz_sweep, xcx_points):
    for tg in (40.0, 200.0, 400.0):
        for i, t1p in enumerate(GRID):
            want = 1.0 - math.exp(-tg * 1e-3 / t1p)
            assert czz_sweep["baselines"][f"bare_{int(tg)}ns"][i] == \
                pytest.approx(want, rel=1e-12)
    for tg in (20.0, 40.0):
        assert bench.bare_single_qubit_error(tg, 64.0) == \
            pytest.approx(1.0 - math.exp(-tg * 1e-3 / 128.0), rel=1e-12)
    bare40_64 = 1.0 - math.exp(-0.04 / 64.0)
    p_czz64 = dict((t, p) for t, p in czz_sweep["points"])[64.0]
    assert p_czz64 < bare40_64
    assert xcx_points["p400"] < bare40_64
    record_acceptance(
        f"ACCEPTANCE 8 baselines: PASS (closed forms exact; at 64us CZZ "
        f"{p_czz64:.2e} and XCX400 {xcx_points['p400']:.2e} < bare-40ns "
        f"{bare40_64:.2e})")


# ---------------------------------------------------------------------------
# 9. 1/f dephasing study (desk scale)
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_9_one_over_f_lifetime():
    def compute():
        params = mdl.VslqParams(T1P=8.0)
        noisy = noise.lifetime_under_1f(params, t2r_ratio=1.0, n_traces=100,
                                        drive_omega=2.63, gamma_s=23.3,
                                        duration=20000.0, dt=0.5,
                                        master_seed=1234, n_workers=2)
        clean = noise.lifetime_under_1f(params, t2r_ratio=math.inf, n_traces=1,
                                        drive_omega=2.63, gamma_s=23.3,
                                        duration=20000.0, dt=0.5,
                                        master_seed=1234)
        zeroed = noise.lifetime_under_1f(params, t2r_ratio=1.0, n_traces=4,
                                         drive_omega=2.63, gamma_s=23.3,
                                         duration=20000.0, dt=0.5,
                                         master_seed=1234, amplitude=0.0)
        return {"ratio": noisy.ratio, "r2": noisy.fit_r2,
                "boot": noisy.bootstrap_std_us, "t_noisy": noisy.t_l_us,
                "t_clean": clean.t_l_us, "t_zeroed": zeroed.t_l_us}
    out = _cached("one_over_f", compute)
    assert out["ratio"] >= 5.0
    assert out["r2"] >= 0.9
    # zero-amplitude noise machinery reproduces the dissipation-only lifetime
    assert abs(out["t_zeroed"] - out["t_clean"]) <= max(out["boot"], 1e-6)
    record_acceptance(
        f"ACCEPTANCE 9 one-over-f: PASS (T2R=T1P at 8us: T_L/T1P="
        f"{out['ratio']:.1f} >= 5, R2={out['r2']:.3f}; dissipation-only "
        f"T_L {out['t_clean']:.1f}us reproduced at zero amplitude)")


# ---------------------------------------------------------------------------
# 10. measurement pointer
# ---------------------------------------------------------------------------

@pytest.mark.heavy
def test_criterion_10_measurement_pointer():
    params = mdl.VslqParams(T1P=64.0)
    rep = bench.measurement_pointer_study(params, dt=0.05)
    assert abs(rep.ratio - 0.5) <= 0.1
    record_acceptance(f"ACCEPTANCE 10 measurement-pointer: PASS "
                      f"(post-loss/intact slope ratio {rep.ratio:.3f} = 0.5 +- 0.1)")


# ---------------------------------------------------------------------------
# 11. coupler shift-table decomposition
# ---------------------------------------------------------------------------

def test_criterion_11_shift_table():
    table = mdl.synthesize_shift_table(c0=0.3, c1=-1.2, cz=0.8, czz=2.5, c11=0.4)
    out = mdl.decompose_shift_table(table, target_czz=2.5)
    for key, want in (("c0", 0.3), ("c1", -1.2), ("cZ", 0.8),
                      ("cZZ", 2.5), ("c11", 0.4)):
        assert out[key] == pytest.approx(want, abs=1e-12)
    assert out["residual_rms"] < 1e-12
    perturbed = table.table.copy()
    perturbed[2, 1] += 0.05
    out2 = mdl.decompose_shift_table(mdl.CouplerShiftTable(perturbed))
    assert out2["residual"]["C21"] == pytest.approx(0.05, abs=1e-12)
    assert out2["cZZ"] == pytest.approx(2.5, abs=1e-12)
    record_acceptance("ACCEPTANCE 11 shift-table: PASS (exact round-trip; "
                      "residual isolates off-model component)")
