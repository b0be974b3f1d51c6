"""1/f dephasing noise: synthesis, Ramsey calibration, lifetime study.

Traces are spectral syntheses: Fourier amplitudes proportional to
1/sqrt(f) over a band, uniform random phases, normalized so the ensemble
rms matches the requested amplitude.  The dephasing term enters the
Hamiltonian as h(t) times the photon-number operator of each primary
transmon, so a VSLQ logical state (living in the two-photon manifold)
sees twice the phase noise of an ordinary qubit.

A single dephased qubit is exactly solvable: the coherence of each trace
is e^{i phi(t)} with phi the accumulated phase integral.  The Ramsey
calibration uses that closed form; the master-equation integrator serves
as an independent cross-check in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from . import algebra as qa
from . import model as mdl
from .dynamics import CollapseChannel, DensityState, IntegratorConfig, LindbladModel, evolve
from .parallel import parallel_map
from .units import ANGULAR_PER_MHZ

__all__ = [
    "NoiseSpec", "NoiseTrace", "NoiseBandError",
    "default_band", "synthesize_trace", "ensemble_periodogram",
    "ramsey_coherence", "calibrate_amplitude_to_t2r",
    "lifetime_under_1f", "LifetimeResult", "fit_exponential_decay",
]


class NoiseBandError(ValueError):
    """Requested band is not representable for the given duration and step."""


@dataclass(frozen=True)
class NoiseSpec:
    """1/f noise description: rms amplitude in MHz, band in MHz, 64-bit seed."""

    amplitude: float
    f_min: float
    f_max: float
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be >= 0")
        if not (0 < self.f_min < self.f_max):
            raise ValueError("need 0 < f_min < f_max")


@dataclass(frozen=True)
class NoiseTrace:
    """Sampled noise signal h(t_k) in MHz on a uniform grid."""

    dt: float
    samples: np.ndarray

    def __call__(self, t):
        n = len(self.samples)
        idx = np.clip(np.asarray(t, dtype=np.float64) / self.dt, 0, n - 1)
        lo = np.minimum(idx.astype(np.int64), n - 2)
        frac = idx - lo
        s = self.samples
        return s[lo] * (1.0 - frac) + s[lo + 1] * frac

    def scaled(self, factor):
        return NoiseTrace(self.dt, self.samples * factor)

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.samples ** 2)))

    @property
    def duration(self) -> float:
        return self.dt * (len(self.samples) - 1)


def default_band(duration: float, dt: float) -> tuple:
    """Band with a decade of margin at both ends (MHz; duration/dt in ns)."""
    f_min = 1.0e3 / (10.0 * duration)
    f_max = 1.0e3 / (2.0 * dt * 10.0)
    return f_min, f_max


def synthesize_trace(spec: NoiseSpec, duration: float, dt: float) -> NoiseTrace:
    """Random 1/f trace over [0, duration] sampled at dt.

    Deterministic in (spec, duration, dt).  The ensemble-averaged
    periodogram falls as 1/f over the band and the ensemble rms equals
    spec.amplitude (each trace's own rms fluctuates).
    """
    n = int(round(duration / dt))
    if n < 16:
        raise NoiseBandError("duration/dt must give at least 16 samples")
    freqs_mhz = 1.0e3 * np.arange(1, n // 2 + 1) / (n * dt)
    in_band = (freqs_mhz >= spec.f_min) & (freqs_mhz <= spec.f_max)
    if not np.any(in_band):
        raise NoiseBandError(
            f"band [{spec.f_min}, {spec.f_max}] MHz has no representable modes "
            f"for duration {duration} ns at dt {dt} ns")
    amps = np.where(in_band, 1.0 / np.sqrt(freqs_mhz), 0.0)
    if spec.amplitude == 0.0:
        return NoiseTrace(dt, np.zeros(n + 1))
    # ensemble rms over time of sum A_k cos(...) is sqrt(sum A_k^2 / 2)
    amps *= spec.amplitude / np.sqrt(0.5 * np.sum(amps ** 2))
    rng = np.random.default_rng(spec.seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=amps.size)
    coeffs = np.zeros(n // 2 + 1, dtype=np.complex128)
    coeffs[1:] = 0.5 * n * amps * np.exp(1j * phases)
    h = np.fft.irfft(coeffs, n)
    return NoiseTrace(dt, np.concatenate([h, h[:1]]))


def ensemble_periodogram(spec: NoiseSpec, duration: float, dt: float,
                         n_traces: int) -> tuple:
    """Average one-sided periodogram over traces with derived seeds."""
    seeds = np.random.SeedSequence(spec.seed).spawn(n_traces)
    n = int(round(duration / dt))
    acc = None
    for child in seeds:
        tr = synthesize_trace(replace(spec, seed=child.generate_state(1)[0]),
                              duration, dt)
        spec_f = np.abs(np.fft.rfft(tr.samples[:n])) ** 2
        acc = spec_f if acc is None else acc + spec_f
    freqs = 1.0e3 * np.arange(n // 2 + 1) / (n * dt)
    return freqs, acc / n_traces


# ---------------------------------------------------------------------------
# Ramsey calibration (exact single-qubit dephasing)
# ---------------------------------------------------------------------------

def ramsey_coherence(traces: Sequence[NoiseTrace], dt: float) -> np.ndarray:
    """|<sigma_+>|(t) of a qubit dephased by h(t) n, trace-averaged.

    Exact: each trace contributes e^{i Phi(t)} with
    Phi(t) = 2 pi x 1e-3 integral h dt'.
    """
    acc = None
    for tr in traces:
        phi = ANGULAR_PER_MHZ * np.concatenate([[0.0], np.cumsum(tr.samples[:-1])]) * dt
        z = np.exp(1j * phi)
        acc = z if acc is None else acc + z
    return np.abs(acc) / len(traces)


def _one_over_e_time(times: np.ndarray, coherence: np.ndarray) -> float:
    target = 1.0 / np.e
    below = np.nonzero(coherence < target)[0]
    if below.size == 0:
        return math.inf
    j = below[0]
    if j == 0:
        return float(times[0])
    t0, t1 = times[j - 1], times[j]
    c0, c1 = coherence[j - 1], coherence[j]
    return float(t0 + (c0 - target) / (c0 - c1) * (t1 - t0))


def _t2_of_amplitude(amplitude, target_ns, seeds, band, dt):
    duration = 6.0 * target_ns
    traces = [synthesize_trace(NoiseSpec(amplitude, band[0], band[1], s),
                               duration, dt) for s in seeds]
    coh = ramsey_coherence(traces, dt)
    times = np.arange(coh.size) * dt
    return _one_over_e_time(times, coh)


def calibrate_amplitude_to_t2r(target_t2r: float, n_traces: int = 400,
                               master_seed: int = 7070,
                               band: tuple | None = None,
                               dt: float | None = None) -> float:
    """rms amplitude (MHz) whose trajectory-averaged Ramsey 1/e time is
    `target_t2r` (microseconds).

    Bisection with common random numbers across amplitude evaluations, so
    the map amplitude -> T2 is monotone and the result deterministic.
    """
    if target_t2r <= 0:
        raise ValueError("target T2R must be positive")
    target_ns = 1.0e3 * target_t2r
    dt = dt if dt is not None else 6.0 * target_ns / 4096.0
    band = band or default_band(6.0 * target_ns, dt)
    seeds = [int(s.generate_state(1)[0])
             for s in np.random.SeedSequence(master_seed).spawn(n_traces)]
    guess = math.sqrt(2.0) / (ANGULAR_PER_MHZ * target_ns)
    lo, hi = guess / 16.0, guess * 16.0
    for _ in range(8):
        if _t2_of_amplitude(lo, target_ns, seeds, band, dt) > target_ns:
            break
        lo /= 8.0
    else:
        raise RuntimeError("T2R bisection failed to bracket from below")
    for _ in range(8):
        if _t2_of_amplitude(hi, target_ns, seeds, band, dt) < target_ns:
            break
        hi *= 8.0
    else:
        raise RuntimeError("T2R bisection failed to bracket from above")
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        if _t2_of_amplitude(mid, target_ns, seeds, band, dt) > target_ns:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-3:
            break
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# lifetime under photon loss + 1/f dephasing
# ---------------------------------------------------------------------------

@dataclass
class LifetimeResult:
    t2r_ratio: float
    t1p_us: float
    n_traces: int
    t_l_us: float
    ratio: float                # T_L / T1P
    fit_r2: float
    amplitude_mhz: float
    bootstrap_std_us: float
    master_seed: int
    times: np.ndarray
    mean_curve: np.ndarray
    curves: np.ndarray


def fit_exponential_decay(times_ns: np.ndarray, values: np.ndarray,
                          guess_tau_ns: float) -> tuple:
    """Fit A exp(-t/tau); returns (tau_ns, r_squared)."""

    def f(t, a, tau):
        return a * np.exp(-t / tau)

    popt, _ = curve_fit(f, times_ns, values, p0=(max(values[0], 0.1), guess_tau_ns),
                        maxfev=20000)
    resid = values - f(times_ns, *popt)
    ss_res = float(np.sum(resid ** 2))
    ss_tot = float(np.sum((values - values.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(popt[1]), r2


def _lifetime_trace_task(args):
    (params, drive_omega, gamma_s, amplitude, band, duration, dt_noise,
     dt, sample_stride, seed_l, seed_r) = args
    layout = qa.single_vslq(params.shadow_dim)
    static = mdl.build_static_hamiltonian(params, layout)
    drives = [("ec_l", mdl.build_ec_drive(params, layout, "", "l"),
               _const(drive_omega)),
              ("ec_r", mdl.build_ec_drive(params, layout, "", "r"),
               _const(drive_omega))]
    if amplitude > 0:
        spec_l = NoiseSpec(amplitude, band[0], band[1], seed_l)
        spec_r = NoiseSpec(amplitude, band[0], band[1], seed_r)
        n_l = qa.embed(qa.number_op(3), ["l"], layout)
        n_r = qa.embed(qa.number_op(3), ["r"], layout)
        drives.append(("noise_l", n_l, synthesize_trace(spec_l, duration, dt_noise)))
        drives.append(("noise_r", n_r, synthesize_trace(spec_r, duration, dt_noise)))
    channels = tuple([CollapseChannel("l", _const(1.0 / params.T1P)),
                      CollapseChannel("r", _const(1.0 / params.T1P)),
                      CollapseChannel("Sl", _const(gamma_s)),
                      CollapseChannel("Sr", _const(gamma_s))])
    model = LindbladModel(layout, static, tuple(drives), channels)
    zero, _ = qa.logical_basis(layout)
    x_l = mdl.build_logical_ops(layout).x
    cfg = IntegratorConfig(dt=dt, sample_stride=sample_stride,
                           positivity_check="off")
    res = evolve(DensityState.pure(zero), model, 0.0, duration, cfg,
                 observables={"x": x_l})
    return res.times, res.expectations["x"].real


def _const(v):
    # module-level constant envelope (picklable for worker processes)
    from .pulse import Constant
    return Constant(v)


def lifetime_under_1f(params: mdl.VslqParams, t2r_ratio: float, n_traces: int,
                      drive_omega: float = 2.63, gamma_s: float = 23.3,
                      duration: float | None = None, dt: float = 0.5,
                      sample_stride: float = 50.0, master_seed: int = 1234,
                      n_workers: int | None = None,
                      amplitude: float | None = None) -> LifetimeResult:
    """Logical-X lifetime of one VSLQ under continuous EC, photon loss and
    per-qubit 1/f dephasing, trajectory-averaged.

    `t2r_ratio` sets the single-qubit Ramsey T2R as a multiple of T1P
    (math.inf turns the noise machinery off).  The drive strength
    `drive_omega` is the MHz value of the "2 pi x" Rabi amplitude and
    `gamma_s` the plain shadow loss rate in MHz.  Returns the fitted
    lifetime ratio and the averaged decay curve.
    """
    duration = duration if duration is not None else 2.5e3 * params.T1P
    dt_noise = max(dt, duration / 65536.0)
    band = default_band(duration, dt_noise)
    if amplitude is None:
        if math.isinf(t2r_ratio):
            amplitude = 0.0
        else:
            amplitude = calibrate_amplitude_to_t2r(t2r_ratio * params.T1P,
                                                   master_seed=master_seed)
    if amplitude == 0.0:
        n_run = 1     # deterministic without noise; one run suffices
    else:
        n_run = n_traces
    seed_pairs = []
    for child in np.random.SeedSequence(master_seed).spawn(n_run):
        a, b = child.spawn(2)
        seed_pairs.append((int(a.generate_state(1)[0]), int(b.generate_state(1)[0])))
    tasks = [(params, drive_omega, gamma_s, amplitude, band, duration, dt_noise,
              dt, sample_stride, sl, sr) for sl, sr in seed_pairs]
    results = parallel_map(_lifetime_trace_task, tasks, n_workers)
    times = results[0][0]
    curves = np.array([r[1] for r in results])
    mean_curve = curves.mean(axis=0)
    tau_ns, r2 = fit_exponential_decay(times, mean_curve, 5.0e3 * params.T1P)
    if r2 < 0.9:
        raise RuntimeError(
            f"lifetime fit failed (R^2 = {r2:.3f}); raw curve attached: "
            f"{mean_curve[:8]} ...")
    # bootstrap standard error of the fitted lifetime over trace resampling
    boot_std = 0.0
    if curves.shape[0] > 1:
        rng = np.random.default_rng(master_seed + 1)
        taus = []
        for _ in range(48):
            pick = rng.integers(0, curves.shape[0], curves.shape[0])
            try:
                tb, _ = fit_exponential_decay(times, curves[pick].mean(axis=0), tau_ns)
                taus.append(tb)
            except RuntimeError:      # pragma: no cover - degenerate resample
                continue
        boot_std = float(np.std(taus)) if taus else 0.0
    t_l_us = tau_ns / 1.0e3
    return LifetimeResult(
        t2r_ratio=t2r_ratio, t1p_us=params.T1P, n_traces=n_run,
        t_l_us=t_l_us, ratio=t_l_us / params.T1P, fit_r2=r2,
        amplitude_mhz=amplitude, bootstrap_std_us=boot_std / 1.0e3,
        master_seed=master_seed, times=times, mean_curve=mean_curve,
        curves=curves)
