"""Sparse CSR kernels: numba-jitted hot loops with a pure-numpy fallback.

The fallback is selected by setting the environment variable
``SHIFTCP_NUMBA=0`` before import (or automatically when numba is not
installed). Both backends accumulate partial sums in identical order, so
their outputs are bitwise equal; ``tests/test_kernels.py`` asserts this and
``benchmarks/bench_kernels.py`` compares their speed.
"""

import os

import numpy as np

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAVE_NUMBA = False

USE_NUMBA = _HAVE_NUMBA and os.environ.get("SHIFTCP_NUMBA", "1") not in ("0", "false")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def _row_ids(indptr):
    n = indptr.shape[0] - 1
    return np.repeat(np.arange(n, dtype=np.int64), np.diff(indptr))


def csr_matvec_numpy(indptr, indices, data, x):
    """y = S @ x for CSR S, without scipy."""
    n = indptr.shape[0] - 1
    products = data * x[indices]
    return np.bincount(_row_ids(indptr), weights=products, minlength=n)


def csr_matmul_numpy(indptr, indices, data, b):
    """C = S @ B for CSR S and dense B."""
    n = indptr.shape[0] - 1
    out = np.zeros((n, b.shape[1]), dtype=np.float64)
    # np.add.at is unbuffered and processes entries in storage order, which
    # keeps the accumulation order identical to the jitted loop.
    np.add.at(out, _row_ids(indptr), data[:, None] * b[indices])
    return out


if _HAVE_NUMBA:
    # No fastmath: reassociation/FMA would break bitwise agreement with numpy.
    @njit(cache=True)
    def csr_matvec_numba(indptr, indices, data, x):
        n = indptr.shape[0] - 1
        out = np.zeros(n, dtype=np.float64)
        for i in range(n):
            acc = 0.0
            for jj in range(indptr[i], indptr[i + 1]):
                acc += data[jj] * x[indices[jj]]
            out[i] = acc
        return out

    @njit(cache=True)
    def csr_matmul_numba(indptr, indices, data, b):
        n = indptr.shape[0] - 1
        h = b.shape[1]
        out = np.zeros((n, h), dtype=np.float64)
        for i in range(n):
            for jj in range(indptr[i], indptr[i + 1]):
                a = data[jj]
                j = indices[jj]
                for k in range(h):
                    out[i, k] += a * b[j, k]
        return out


def csr_matvec(indptr, indices, data, x):
    if USE_NUMBA:
        return csr_matvec_numba(indptr, indices, data, x)
    return csr_matvec_numpy(indptr, indices, data, x)


def csr_matmul(indptr, indices, data, b):
    if USE_NUMBA:
        return csr_matmul_numba(indptr, indices, data, np.ascontiguousarray(b))
    return csr_matmul_numpy(indptr, indices, data, b)
