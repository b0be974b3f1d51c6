"""Truncated bosonic operator algebra on composite Hilbert spaces.

Everything downstream (Hamiltonians, collapse operators, logical gates) is
assembled from the primitives here: truncated ladder operators, the
two-photon flip ``xtilde``, the diagonal ``ztilde`` family, and a Kronecker
embedding that places local operators into a labelled composite space.

Operators are scipy CSR matrices (each physical operator has O(dim)
nonzeros); states are plain 1-d numpy arrays.  All constructors are pure and
the returned matrices should be treated as immutable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

__all__ = [
    "SystemLayout",
    "single_vslq",
    "two_vslq",
    "measurement_layout",
    "annihilation",
    "creation",
    "number_op",
    "fock_projector",
    "identity_op",
    "xtilde",
    "ztilde",
    "embed",
    "basis_state",
    "product_state",
    "plus_state",
    "minus_state",
    "logical_basis",
    "expectation",
    "trace_product",
    "DimensionError",
    "LayoutError",
]


class DimensionError(ValueError):
    """Operator/state dimensions are inconsistent or unphysical."""


class LayoutError(ValueError):
    """A subsystem label is unknown or a layout is malformed."""


@dataclass(frozen=True)
class SystemLayout:
    """Ordered list of (label, dimension) pairs defining a composite space.

    The flat index convention is C-order over the subsystem list, i.e. the
    last subsystem varies fastest.
    """

    subsystems: tuple

    def __init__(self, subsystems: Iterable[tuple]):
        subs = tuple((str(lbl), int(d)) for lbl, d in subsystems)
        if not subs:
            raise LayoutError("layout needs at least one subsystem")
        labels = [lbl for lbl, _ in subs]
        if len(set(labels)) != len(labels):
            raise LayoutError(f"duplicate subsystem labels in {labels}")
        for lbl, d in subs:
            if d < 1:
                raise LayoutError(f"subsystem {lbl!r} has dimension {d} < 1")
        object.__setattr__(self, "subsystems", subs)

    @property
    def labels(self):
        return tuple(lbl for lbl, _ in self.subsystems)

    @property
    def dims(self):
        return tuple(d for _, d in self.subsystems)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LayoutError(f"unknown subsystem label {label!r}; "
                              f"layout has {self.labels}") from None

    def dim_of(self, label: str) -> int:
        return self.dims[self.index(label)]

    def occupation_vector(self, label: str) -> np.ndarray:
        """Photon number of `label` for every flat basis index (length dim)."""
        k = self.index(label)
        grid = np.zeros(self.dims, dtype=np.float64)
        shape = [1] * len(self.dims)
        shape[k] = self.dims[k]
        grid += np.arange(self.dims[k]).reshape(shape)
        return grid.ravel()


def single_vslq(shadow_dim: int = 2) -> SystemLayout:
    """Canonical single-copy layout: two qutrits plus two shadow qubits."""
    return SystemLayout([("l", 3), ("r", 3), ("Sl", shadow_dim), ("Sr", shadow_dim)])


def two_vslq(shadow_dim: int = 2) -> SystemLayout:
    """Two-copy layout, copy A first, then copy B; (l, r, Sl, Sr) per copy."""
    subs = []
    for suffix in ("A", "B"):
        subs += [(f"l{suffix}", 3), (f"r{suffix}", 3),
                 (f"Sl{suffix}", shadow_dim), (f"Sr{suffix}", shadow_dim)]
    return SystemLayout(subs)


def measurement_layout(shadow_dim: int = 2, resonator_dim: int = 6) -> SystemLayout:
    """Single VSLQ plus a readout resonator (label "R") appended last."""
    if resonator_dim < 4:
        raise LayoutError("readout resonator needs at least 4 levels")
    subs = list(single_vslq(shadow_dim).subsystems) + [("R", resonator_dim)]
    return SystemLayout(subs)


# ---------------------------------------------------------------------------
# local operators
# ---------------------------------------------------------------------------

def annihilation(d: int) -> sp.csr_matrix:
    """Truncated lowering operator: A[n-1, n] = sqrt(n) for 1 <= n < d."""
    if d < 2:
        raise DimensionError(f"annihilation needs dimension >= 2, got {d}")
    data = np.sqrt(np.arange(1, d, dtype=np.float64))
    return sp.csr_matrix(sp.diags(data, offsets=1, shape=(d, d), dtype=np.complex128))


def creation(d: int) -> sp.csr_matrix:
    return sp.csr_matrix(annihilation(d).conj().T)


def number_op(d: int) -> sp.csr_matrix:
    return sp.csr_matrix(sp.diags(np.arange(d, dtype=np.float64), dtype=np.complex128))


def fock_projector(d: int, k: int) -> sp.csr_matrix:
    """Projector |k><k| on a d-level subsystem."""
    if not 0 <= k < d:
        raise DimensionError(f"level {k} outside 0..{d - 1}")
    diag = np.zeros(d)
    diag[k] = 1.0
    return sp.csr_matrix(sp.diags(diag, dtype=np.complex128))


def identity_op(d: int) -> sp.csr_matrix:
    return sp.identity(d, dtype=np.complex128, format="csr")


def xtilde(d: int = 3) -> sp.csr_matrix:
    """Two-photon flip (a^dag a^dag + a a)/sqrt(2).

    For d = 3 this swaps |0> and |2> and annihilates |1>.
    """
    a = annihilation(d)
    return sp.csr_matrix((a.conj().T @ a.conj().T + a @ a) / np.sqrt(2.0))


_ZTILDE_DIAGS = {
    "bare": (-1.0, 0.0, 1.0),
    "prime": (-1.0, 1.0, 1.0),
    "doubleprime": (-1.0, 0.5, 1.0),
}


def ztilde(d: int = 3, variant: str = "bare") -> sp.csr_matrix:
    """Diagonal logical-Z building blocks on a qutrit.

    bare        diag(-1, 0, 1)
    prime       diag(-1, 1, 1)   (loss-transparent: |1> counts as |2>)
    doubleprime diag(-1, 1/2, 1) (half weight on |1>, used by the ZZ drive)
    """
    if d != 3:
        raise DimensionError(f"ztilde is defined on qutrits, got d={d}")
    try:
        diag = _ZTILDE_DIAGS[variant]
    except KeyError:
        raise ValueError(f"unknown ztilde variant {variant!r}; "
                         f"pick one of {sorted(_ZTILDE_DIAGS)}") from None
    return sp.csr_matrix(sp.diags(diag, dtype=np.complex128))


# ---------------------------------------------------------------------------
# embedding into the composite space
# ---------------------------------------------------------------------------

def embed(op, targets: Sequence[str], layout: SystemLayout) -> sp.csr_matrix:
    """Lift a local operator onto the composite space.

    `op` acts on the tensor product of the target subsystems in the order
    given by `targets`; identity everywhere else.  Non-contiguous and
    reordered targets are handled by an index permutation, so
    embed(A @ B) == embed(A) @ embed(B) for any same-target pair.
    """
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise LayoutError(f"repeated target labels {targets}")
    positions = [layout.index(lbl) for lbl in targets]
    tdims = [layout.dims[p] for p in positions]
    op = sp.csr_matrix(op, dtype=np.complex128)
    d_loc = int(np.prod(tdims))
    if op.shape != (d_loc, d_loc):
        raise DimensionError(
            f"operator shape {op.shape} does not match target dims {tdims}")

    rest = [i for i in range(len(layout.dims)) if i not in positions]
    d_rest = int(np.prod([layout.dims[i] for i in rest], dtype=np.int64)) if rest else 1
    big = sp.kron(op, sp.identity(d_rest, dtype=np.complex128), format="coo")

    # map flat indices of the (targets..., rest...) ordering back to layout order
    order = positions + rest
    flat = np.arange(layout.dim, dtype=np.int64).reshape(layout.dims)
    perm = flat.transpose(order).ravel()

    out = sp.coo_matrix((big.data, (perm[big.row], perm[big.col])),
                        shape=(layout.dim, layout.dim))
    out = out.tocsr()
    out.sort_indices()
    return out


# ---------------------------------------------------------------------------
# states
# ---------------------------------------------------------------------------

def basis_state(layout: SystemLayout, occupations: Mapping[str, int] | None = None) -> np.ndarray:
    """Fock product state; unspecified subsystems sit in |0>."""
    occupations = dict(occupations or {})
    locals_ = {}
    for lbl, n in occupations.items():
        d = layout.dim_of(lbl)
        if not 0 <= n < d:
            raise DimensionError(f"occupation {n} outside 0..{d - 1} for {lbl!r}")
        v = np.zeros(d, dtype=np.complex128)
        v[n] = 1.0
        locals_[lbl] = v
    return product_state(layout, locals_)


def product_state(layout: SystemLayout, local_states: Mapping[str, np.ndarray]) -> np.ndarray:
    """Tensor product of per-subsystem vectors; vacuum where unspecified."""
    psi = np.array([1.0 + 0.0j])
    for lbl, d in layout.subsystems:
        if lbl in local_states:
            v = np.asarray(local_states[lbl], dtype=np.complex128)
            if v.shape != (d,):
                raise DimensionError(f"local state for {lbl!r} has shape {v.shape}, want ({d},)")
        else:
            v = np.zeros(d, dtype=np.complex128)
            v[0] = 1.0
        psi = np.kron(psi, v)
    return psi


def plus_state() -> np.ndarray:
    """(|0> + |2>)/sqrt(2) on a qutrit: the xtilde = +1 state."""
    return np.array([1.0, 0.0, 1.0], dtype=np.complex128) / np.sqrt(2.0)


def minus_state() -> np.ndarray:
    """(|0> - |2>)/sqrt(2) on a qutrit: the xtilde = -1 state."""
    return np.array([1.0, 0.0, -1.0], dtype=np.complex128) / np.sqrt(2.0)


def logical_basis(layout: SystemLayout, copy: str = "") -> tuple:
    """The two degenerate ground states of one VSLQ copy.

    |0_L> = |+>_l |+>_r and |1_L> = |->_l |->_r with |+-> = (|0> +- |2>)/sqrt(2);
    both satisfy xtilde_l xtilde_r = +1 and have no support on |1> levels.
    Shadow qubits (and any other subsystem) are left in vacuum.

    Sign convention (fixed by direct computation, see tests): the
    loss-transparent Z_L = ztilde'_l ztilde'_r exchanges |0_L> <-> |1_L>,
    while X_L is diagonal with eigenvalues +1 on |0_L> and -1 on |1_L>.
    """
    l, r = f"l{copy}", f"r{copy}"
    if layout.dim_of(l) != 3 or layout.dim_of(r) != 3:
        raise LayoutError("logical basis needs qutrit primary modes")
    zero = product_state(layout, {l: plus_state(), r: plus_state()})
    one = product_state(layout, {l: minus_state(), r: minus_state()})
    return zero, one


# ---------------------------------------------------------------------------
# expectations
# ---------------------------------------------------------------------------

def trace_product(op, rho: np.ndarray) -> complex:
    """Tr(op @ rho) without forming the product matrix."""
    if sp.issparse(op):
        coo = op.tocoo()
        return complex(np.sum(coo.data * rho[coo.col, coo.row]))
    return complex(np.einsum("ij,ji->", np.asarray(op), rho))


def expectation(rho, op) -> complex:
    """Tr(rho op) for a density matrix, or <psi|op|psi> for a vector."""
    mat = getattr(rho, "rho", rho)
    mat = np.asarray(mat)
    n = op.shape[0]
    if mat.ndim == 1:
        if mat.shape[0] != n:
            raise DimensionError(f"state dim {mat.shape[0]} != operator dim {n}")
        return complex(np.vdot(mat, op @ mat))
    if mat.shape != (n, n):
        raise DimensionError(f"density matrix shape {mat.shape} != operator dim {n}")
    return trace_product(op, mat)
