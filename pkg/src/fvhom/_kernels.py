"""Low-level CSR kernels compiled with numba.

All kernels are sequential and allocation-free, so repeated calls with the
same inputs are bit-reproducible.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def csr_matvec(row_ptr, col_idx, values, x, out):
    n = row_ptr.shape[0] - 1
    for i in range(n):
        acc = 0.0
        for k in range(row_ptr[i], row_ptr[i + 1]):
            acc += values[k] * x[col_idx[k]]
        out[i] = acc


@njit(cache=True)
def ilu0_factor(row_ptr, col_idx, lu, diag_idx, pivot_floor):
    """In-place ILU(0) on the CSR pattern; lu starts as a copy of the values.

    After return, entries left of the diagonal hold unit-lower L (diagonal
    implicit), the rest hold U.  Returns the row of the first unusable pivot,
    or -1 on success.  Columns must be sorted within each row and every row
    must contain its diagonal (diag_idx).
    """
    n = row_ptr.shape[0] - 1
    for i in range(n):
        for idx in range(row_ptr[i], row_ptr[i + 1]):
            k = col_idx[idx]
            if k >= i:
                break
            piv = lu[diag_idx[k]]
            if abs(piv) < pivot_floor:
                return k
            factor = lu[idx] / piv
            lu[idx] = factor
            # subtract factor * U(k, j) from row i on the shared pattern
            kk = diag_idx[k] + 1
            ii = idx + 1
            end_k = row_ptr[k + 1]
            end_i = row_ptr[i + 1]
            while kk < end_k and ii < end_i:
                ck = col_idx[kk]
                ci = col_idx[ii]
                if ck == ci:
                    lu[ii] -= factor * lu[kk]
                    kk += 1
                    ii += 1
                elif ck < ci:
                    kk += 1
                else:
                    ii += 1
        if abs(lu[diag_idx[i]]) < pivot_floor:
            return i
    return -1


@njit(cache=True)
def lower_unit_solve(row_ptr, col_idx, lu, b, out):
    """Solve L y = b with unit-diagonal L stored left of the diagonal."""
    n = row_ptr.shape[0] - 1
    for i in range(n):
        acc = b[i]
        for idx in range(row_ptr[i], row_ptr[i + 1]):
            k = col_idx[idx]
            if k >= i:
                break
            acc -= lu[idx] * out[k]
        out[i] = acc


@njit(cache=True)
def upper_solve(row_ptr, col_idx, lu, diag_idx, y, out):
    """Solve U x = y with U stored on and right of the diagonal."""
    n = row_ptr.shape[0] - 1
    for i in range(n - 1, -1, -1):
        acc = y[i]
        for idx in range(diag_idx[i] + 1, row_ptr[i + 1]):
            acc -= lu[idx] * out[col_idx[idx]]
        out[i] = acc / lu[diag_idx[i]]
