"""Hamiltonians, logical operators, ideal gates and drive operators.

The device: each VSLQ copy is two driven qutrits l, r with the rotating-frame
Hamiltonian

    H_P = -W xtilde_l xtilde_r + (delta/2)(P^1_l + P^1_r),

whose doubly degenerate ground manifold at energy -W is the logical qubit.
Two lossy shadow qubits per copy soak up photon losses through the two-photon
drive (a_l^dag a_Sl^dag + a_r^dag a_Sr^dag + h.c.).

All static Hamiltonians returned here are in angular units (rad/ns); operators
meant to be paired with MHz envelopes at integration time are dimensionless.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict

import numpy as np
import scipy.sparse as sp

from . import algebra as qa
from .units import angular

__all__ = [
    "VslqParams",
    "MeasurementParams",
    "LogicalOperatorSet",
    "CouplerShiftTable",
    "copy_suffixes",
    "layout_for",
    "build_hp",
    "build_shadow_energy",
    "build_static_hamiltonian",
    "build_ec_drive",
    "build_logical_ops",
    "manifold_product_state",
    "single_gate_generator",
    "hermitian_expm",
    "ideal_xcx",
    "ideal_czz",
    "ideal_single_gate",
    "xcx_drive_ops",
    "czz_drive_ops",
    "measurement_hamiltonian",
    "decompose_shift_table",
]


@dataclass(frozen=True)
class VslqParams:
    """Device parameters.  Frequencies in MHz (x 2pi implied), T1P in us."""

    W: float = 25.0
    delta: float = 300.0
    T1P: float = 64.0
    omega_S: float | None = None     # shadow frequency; default W + delta/2
    shadow_dim: int = 2
    copies: int = 1

    def __post_init__(self):
        if self.W <= 0 or self.delta <= 0:
            raise ValueError("W and delta must be positive")
        if self.T1P <= 0:
            raise ValueError("T1P must be positive")
        if self.copies not in (1, 2):
            raise ValueError("copies must be 1 or 2")
        if self.shadow_dim < 2:
            raise ValueError("shadow_dim must be >= 2")

    @property
    def omega_s_resolved(self) -> float:
        """Shadow frequency making the loss-repair transfer resonant.

        A photon loss parks the copy at energy delta/2; transferring the
        excitation to a shadow while the copy returns to the -W ground
        manifold conserves energy when omega_S = W + delta/2.
        """
        return self.omega_S if self.omega_S is not None else self.W + self.delta / 2.0


@dataclass(frozen=True)
class MeasurementParams:
    """Readout-resonator coupling parameters (Didier-style X-tracking)."""

    resonator_dim: int = 6
    kappa: float = 1.0         # resonator loss rate, MHz (2pi-free)

    def __post_init__(self):
        if self.resonator_dim < 4:
            raise ValueError("resonator_dim must be >= 4")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


def copy_suffixes(copies: int):
    return ("",) if copies == 1 else ("A", "B")


def layout_for(params: VslqParams) -> qa.SystemLayout:
    if params.copies == 1:
        return qa.single_vslq(params.shadow_dim)
    return qa.two_vslq(params.shadow_dim)


# ---------------------------------------------------------------------------
# static Hamiltonian
# ---------------------------------------------------------------------------

def build_hp(params: VslqParams, layout: qa.SystemLayout, copy: str = "") -> sp.csr_matrix:
    """Rotating-frame VSLQ Hamiltonian of one copy, in rad/ns.

    The two lowest eigenvalues are -W (angular), spanned by the logical
    basis states; the xtilde_l xtilde_r = -1 pair sits at +W and single
    |1> occupations cost delta/2 each.
    """
    l, r = f"l{copy}", f"r{copy}"
    xx = qa.embed(sp.kron(qa.xtilde(3), qa.xtilde(3)), [l, r], layout)
    p1 = qa.embed(qa.fock_projector(3, 1), [l], layout) \
        + qa.embed(qa.fock_projector(3, 1), [r], layout)
    h = -angular(params.W) * xx + angular(params.delta) / 2.0 * p1
    return sp.csr_matrix(h)


def build_shadow_energy(params: VslqParams, layout: qa.SystemLayout, copy: str = "") -> sp.csr_matrix:
    """omega_S (n_Sl + n_Sr) for one copy, rad/ns."""
    ds = params.shadow_dim
    n_tot = qa.embed(qa.number_op(ds), [f"Sl{copy}"], layout) \
        + qa.embed(qa.number_op(ds), [f"Sr{copy}"], layout)
    return sp.csr_matrix(angular(params.omega_s_resolved) * n_tot)


def build_static_hamiltonian(params: VslqParams, layout: qa.SystemLayout) -> sp.csr_matrix:
    h = sp.csr_matrix((layout.dim, layout.dim), dtype=np.complex128)
    for suffix in copy_suffixes(params.copies):
        h = h + build_hp(params, layout, suffix) + build_shadow_energy(params, layout, suffix)
    return sp.csr_matrix(h)


def build_ec_drive(params: VslqParams, layout: qa.SystemLayout, copy: str = "",
                   side: str = "l") -> sp.csr_matrix:
    """Dimensionless loss-repair drive operator for one side of one copy.

    Returns a^dag_q a^dag_Sq + a_q a_Sq (q = l or r); the Rabi envelope in
    MHz multiplies it at integration time.
    """
    if side not in ("l", "r"):
        raise ValueError(f"side must be 'l' or 'r', got {side!r}")
    q, s = f"{side}{copy}", f"S{side}{copy}"
    a = qa.annihilation(3)
    a_s = qa.annihilation(params.shadow_dim)
    up = sp.kron(a.conj().T, a_s.conj().T)
    return qa.embed(up + up.conj().T, [q, s], layout)


# ---------------------------------------------------------------------------
# logical operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LogicalOperatorSet:
    """Error-transparent logical Paulis of one copy, plus the bare versions.

    x = xtilde_l + P1_l xtilde_r   (acts as xtilde_l on the logical manifold
                                    but keeps operating after a photon loss)
    z = ztilde'_l ztilde'_r
    y = i x z   (Hermitian: x and z anticommute exactly on the full space)
    """

    x: sp.csr_matrix
    y: sp.csr_matrix
    z: sp.csr_matrix
    x_bare: sp.csr_matrix
    z_bare: sp.csr_matrix

    def by_axis(self, axis: str) -> sp.csr_matrix:
        return {"X": self.x, "Y": self.y, "Z": self.z}[axis]

    def projector(self, axis: str, sign: int, dim: int) -> sp.csr_matrix:
        op = self.by_axis(axis)
        return sp.csr_matrix((sp.identity(dim, dtype=np.complex128) + sign * op) / 2.0)


def build_logical_ops(layout: qa.SystemLayout, copy: str = "") -> LogicalOperatorSet:
    l, r = f"l{copy}", f"r{copy}"
    xt_l = qa.embed(qa.xtilde(3), [l], layout)
    p1_xt = qa.embed(sp.kron(qa.fock_projector(3, 1), qa.xtilde(3)), [l, r], layout)
    x = sp.csr_matrix(xt_l + p1_xt)
    z = qa.embed(sp.kron(qa.ztilde(3, "prime"), qa.ztilde(3, "prime")), [l, r], layout)
    y = sp.csr_matrix(1j * (x @ z))
    x_bare = xt_l
    z_bare = qa.embed(sp.kron(qa.ztilde(3, "bare"), qa.ztilde(3, "bare")), [l, r], layout)
    return LogicalOperatorSet(x=x, y=y, z=z, x_bare=x_bare, z_bare=z_bare)


_SINGLE_GATE_AXES = {"X_L": ("X",), "Z_L": ("Z",), "Hadamard": ("X", "Z")}


def single_gate_generator(layout: qa.SystemLayout, kind: str, copy: str = "") -> sp.csr_matrix:
    """Hermitian generator driven by single-qubit gate pulses.

    X_L and Z_L rotate about the corresponding logical axis; the Hadamard
    generator is (X_L + Z_L)/sqrt(2).
    """
    ops = build_logical_ops(layout, copy)
    if kind not in _SINGLE_GATE_AXES:
        raise ValueError(f"unknown single-qubit gate kind {kind!r}")
    axes = _SINGLE_GATE_AXES[kind]
    gen = sum(ops.by_axis(ax) for ax in axes)
    return sp.csr_matrix(gen / np.sqrt(len(axes)))


# ---------------------------------------------------------------------------
# ideal gate unitaries
# ---------------------------------------------------------------------------

def hermitian_expm(h, prefactor: complex) -> np.ndarray:
    """exp(prefactor * h) for Hermitian h via eigendecomposition (dense)."""
    hd = h.toarray() if sp.issparse(h) else np.asarray(h)
    w, v = np.linalg.eigh(hd)
    return (v * np.exp(prefactor * w)) @ v.conj().T


def _two_copy_generator(layout: qa.SystemLayout, axis: str) -> sp.csr_matrix:
    ops_a = build_logical_ops(layout, "A")
    ops_b = build_logical_ops(layout, "B")
    oa, ob = ops_a.by_axis(axis), ops_b.by_axis(axis)
    return sp.csr_matrix(oa - ob - oa @ ob)


def _require_two_copies(layout: qa.SystemLayout):
    if "lA" not in layout.labels or "lB" not in layout.labels:
        raise qa.LayoutError("this gate needs a two-copy layout")


def ideal_xcx(layout: qa.SystemLayout) -> np.ndarray:
    """exp[i (pi/4) (X_LA - X_LB - X_LA X_LB)], the entangling flip gate.

    On the logical manifold the generator has spectrum {-1, -1, -1, +3}, so
    this is a maximally entangling Clifford (a controlled flip in the
    xtilde eigenbasis).
    """
    _require_two_copies(layout)
    return hermitian_expm(_two_copy_generator(layout, "X"), 1j * np.pi / 4.0)


def ideal_czz(layout: qa.SystemLayout) -> np.ndarray:
    """exp[i (pi/4) (Z_LA - Z_LB - Z_LA Z_LB)], the entangling phase gate."""
    _require_two_copies(layout)
    return hermitian_expm(_two_copy_generator(layout, "Z"), 1j * np.pi / 4.0)


def ideal_single_gate(layout: qa.SystemLayout, kind: str, copy: str = "") -> np.ndarray:
    """exp(-i pi/2 G) for the single-qubit generators; identity for idling."""
    if kind == "idle":
        return np.eye(layout.dim, dtype=np.complex128)
    gen = single_gate_generator(layout, kind, copy)
    return hermitian_expm(gen, -1j * np.pi / 2.0)


def manifold_product_state(layout: qa.SystemLayout, amps_a, amps_b=None) -> np.ndarray:
    """Product of per-copy logical superpositions c0 |0_L> + c1 |1_L>.

    For a single-copy layout pass only `amps_a`.  Relies on the fixed
    subsystem ordering (l, r, Sl, Sr) per copy, copy A before copy B.
    """
    def copy_vector(c0, c1):
        pp = np.kron(qa.plus_state(), qa.plus_state())
        mm = np.kron(qa.minus_state(), qa.minus_state())
        return c0 * pp + c1 * mm

    if amps_b is None:
        zero, one = qa.logical_basis(layout, "")
        return amps_a[0] * zero + amps_a[1] * one
    _require_two_copies(layout)
    ds = layout.dim_of("SlA")
    vac_s = np.zeros(ds * ds, dtype=np.complex128)
    vac_s[0] = 1.0
    expected = ("lA", "rA", "SlA", "SrA", "lB", "rB", "SlB", "SrB")
    if layout.labels != expected:
        raise qa.LayoutError(f"two-copy layout must be ordered {expected}")
    psi = np.kron(copy_vector(*amps_a), vac_s)
    psi = np.kron(psi, np.kron(copy_vector(*amps_b), vac_s))
    return psi


# ---------------------------------------------------------------------------
# two-qubit drive operators
# ---------------------------------------------------------------------------

def xcx_drive_ops(layout: qa.SystemLayout) -> Dict[str, sp.csr_matrix]:
    """Operators paired with the f, g1, g2 envelopes of the timed XCX pulse.

    The single-qubit part X_LA - X_LB is error-transparent; the bare
    xtilde xtilde products are "opaque" (they stall after a photon loss)
    and are therefore timed against the error-correction cycle.
    """
    _require_two_copies(layout)
    xa = build_logical_ops(layout, "A").x
    xb = build_logical_ops(layout, "B").x
    xt = qa.xtilde(3)
    return {
        "x_diff": sp.csr_matrix(xa - xb),
        "xx_l": qa.embed(sp.kron(xt, xt), ["lA", "lB"], layout),
        "xx_r": qa.embed(sp.kron(xt, xt), ["rA", "rB"], layout),
    }


def czz_drive_ops(layout: qa.SystemLayout) -> Dict[str, sp.csr_matrix]:
    """The ztilde'' ztilde'' sum driven by the CZZ envelope g(t).

    diag(-1, 1/2, 1) per qutrit: the half weight on |1> keeps the
    second-order ZZ phase running at the same rate after a single loss.
    """
    _require_two_copies(layout)
    zpp = qa.ztilde(3, "doubleprime")
    op = qa.embed(sp.kron(zpp, zpp), ["lA", "lB"], layout) \
        + qa.embed(sp.kron(zpp, zpp), ["rA", "rB"], layout)
    return {"zz_sum": sp.csr_matrix(op)}


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def measurement_hamiltonian(params: VslqParams, layout: qa.SystemLayout,
                            mparams: MeasurementParams | None = None):
    """Readout coupling (xtilde_l + xtilde_r)(a_R + a_R^dag) plus the kappa channel.

    Returns (coupling operator, resonator lowering operator); the m(t)
    envelope in MHz multiplies the coupling at integration time and the
    lowering operator decays at rate kappa.
    """
    if "R" not in layout.labels:
        raise qa.LayoutError("layout has no readout resonator 'R'")
    mparams = mparams or MeasurementParams(resonator_dim=layout.dim_of("R"))
    xt_sum = qa.embed(qa.xtilde(3), ["l"], layout) + qa.embed(qa.xtilde(3), ["r"], layout)
    d_r = layout.dim_of("R")
    a_r = qa.embed(qa.annihilation(d_r), ["R"], layout)
    quad = a_r + a_r.conj().T
    return sp.csr_matrix(xt_sum @ quad), sp.csr_matrix(a_r)


# ---------------------------------------------------------------------------
# coupler shift-table decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CouplerShiftTable:
    """3x3 table of second-order energy shifts C[i, j] for photon numbers
    (i, j) of the coupled pair of qutrits (one per copy)."""

    table: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))

    def __post_init__(self):
        t = np.asarray(self.table, dtype=np.float64)
        if t.shape != (3, 3):
            raise ValueError(f"shift table must be 3x3, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValueError("shift table entries must be finite")
        object.__setattr__(self, "table", t)


_Z_DIAG = np.array([-1.0, 0.0, 1.0])
_ZPP_DIAG = np.array([-1.0, 0.5, 1.0])
_P1_DIAG = np.array([0.0, 1.0, 0.0])

# entries used to pin (c0, c1, cZ, cZZ); the rest report the model residual
_FIT_ENTRIES = ((0, 0), (0, 1), (0, 2), (1, 2), (2, 2))
_RESIDUAL_ENTRIES = ((1, 0), (2, 0), (2, 1), (1, 1))


def _model_entry(i: int, j: int, c0, c1, cz, czz, c11) -> float:
    return (c0
            + c1 * (_P1_DIAG[i] + _P1_DIAG[j])
            + cz * (_Z_DIAG[i] + _Z_DIAG[j])
            + czz * (_ZPP_DIAG[i] * _ZPP_DIAG[j])
            + c11 * (_P1_DIAG[i] * _P1_DIAG[j]))


def synthesize_shift_table(c0=0.0, c1=0.0, cz=0.0, czz=0.0, c11=0.0) -> CouplerShiftTable:
    """Forward-construct the table from model coefficients (for round-trips)."""
    t = np.array([[_model_entry(i, j, c0, c1, cz, czz, c11) for j in range(3)]
                  for i in range(3)])
    return CouplerShiftTable(t)


def decompose_shift_table(table: CouplerShiftTable, target_czz: float | None = None) -> dict:
    """Split a shift table into the drive-relevant coefficient basis.

    Solves C00, C01, C02, C12, C22 for (c0, c1, cZ, cZZ); c11 is then fixed
    from C11.  The residual vector collects the mismatch on the entries not
    used by the solve, so any component outside the model span shows up
    there.  cZZ is the usable ZZ drive strength; if `target_czz` is given
    the ratio achieved/target is reported.
    """
    if not isinstance(table, CouplerShiftTable):
        table = CouplerShiftTable(np.asarray(table))
    c = table.table
    design = np.array([
        [1.0, _P1_DIAG[i] + _P1_DIAG[j], _Z_DIAG[i] + _Z_DIAG[j], _ZPP_DIAG[i] * _ZPP_DIAG[j]]
        for i, j in _FIT_ENTRIES])
    rhs = np.array([c[i, j] for i, j in _FIT_ENTRIES])
    if np.linalg.matrix_rank(design) < 4 or not np.all(np.isfinite(rhs)):
        raise np.linalg.LinAlgError("shift-table system is singular or non-finite")
    coeffs, *_ = np.linalg.lstsq(design, rhs, rcond=None)
    c0, c1, cz, czz = (float(x) for x in coeffs)
    fit_residual = design @ coeffs - rhs
    c11 = float(c[1, 1] - _model_entry(1, 1, c0, c1, cz, czz, 0.0))
    residuals = {}
    for i, j in _RESIDUAL_ENTRIES:
        residuals[f"C{i}{j}"] = float(c[i, j] - _model_entry(i, j, c0, c1, cz, czz, c11))
    out = {
        "c0": c0, "c1": c1, "cZ": cz, "cZZ": czz, "c11": c11,
        "residual": residuals,
        "residual_rms": float(np.sqrt(
            (np.sum(fit_residual ** 2) + sum(v ** 2 for v in residuals.values()))
            / (len(fit_residual) + len(residuals)))),
    }
    if target_czz is not None and target_czz != 0.0:
        out["czz_over_target"] = czz / target_czz
    return out
