"""Numba kernels for the dense density-matrix pipeline.

The right-hand side at dim 1296 is memory-bound; these kernels fuse the
passes (sparse H @ rho, anti-Hermitian assembly, lowering-channel jumps,
RK4 combination) that the numpy fallback in `dynamics` performs one
temporary at a time.  Jump terms exploit that raising the photon number of
subsystem c shifts the flat row index by the post-stride B_c, so
L rho L^dag is plain index arithmetic.

Everything here is optional: `dynamics` falls back to numpy expressions
when numba is unavailable.  fastmath stays off so results match the
fallback to rounding order.
"""

import numba
import numpy as np

# fork-safe threading layer: benchmark workers are forked processes
numba.config.THREADING_LAYER = "workqueue"

__all__ = ["spmm", "assemble_rhs", "axpy_into", "rk4_update"]


@numba.njit(cache=True, parallel=True)
def spmm(indptr, indices, data, b, out):
    """out = A @ b for CSR A (complex), dense b; row-parallel."""
    n = out.shape[0]
    for i in numba.prange(n):
        orow = out[i]
        for k in range(n):
            orow[k] = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            v = data[p]
            brow = b[indices[p]]
            for k in range(n):
                orow[k] += v * brow[k]


@numba.njit(cache=True, parallel=True)
def assemble_rhs(hr, rho, halfg, gammas, wplus, jdx, out):
    """out = -i(hr - hr^dag) - (halfg_i + halfg_j) rho + jump terms.

    wplus[c, i] is sqrt(n_i + 1) where subsystem c can absorb one more
    photon and 0 elsewhere; jdx[c, i] is the raised flat index (clamped
    where invalid, masked by the zero weight).
    """
    n = out.shape[0]
    n_ch = gammas.shape[0]
    for i in numba.prange(n):
        orow = out[i]
        hrow = hr[i]
        rrow = rho[i]
        gi = halfg[i]
        for j in range(n):
            v = -1j * (hrow[j] - np.conj(hr[j, i]))
            orow[j] = v - (gi + halfg[j]) * rrow[j]
        for c in range(n_ch):
            g = gammas[c]
            if g == 0.0:
                continue
            wi = wplus[c, i]
            if wi == 0.0:
                continue
            gw = g * wi
            srow = rho[jdx[c, i]]
            wrow = wplus[c]
            jrow = jdx[c]
            for j in range(n):
                wj = wrow[j]
                if wj != 0.0:
                    orow[j] += gw * wj * srow[jrow[j]]


@numba.njit(cache=True, parallel=True)
def axpy_into(y, k, c, out):
    """out = y + c * k (elementwise)."""
    n = y.shape[0]
    for i in numba.prange(n):
        for j in range(n):
            out[i, j] = y[i, j] + c * k[i, j]


@numba.njit(cache=True, parallel=True)
def rk4_update(y, k1, k2, k3, k4, h, tmp):
    """y <- symmetrized RK4 update; tmp holds the pre-symmetrization state."""
    n = y.shape[0]
    c = h / 6.0
    for i in numba.prange(n):
        for j in range(n):
            tmp[i, j] = y[i, j] + c * (k1[i, j] + 2.0 * (k2[i, j] + k3[i, j])
                                       + k4[i, j])
    for i in numba.prange(n):
        for j in range(n):
            y[i, j] = 0.5 * (tmp[i, j] + np.conj(tmp[j, i]))
