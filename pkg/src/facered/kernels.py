"""Hot numeric kernels.

The cyclic Jacobi eigensolver sweep is the inner loop of nearly every
operation in this package (face computations, interior-point step lengths,
rank decisions).  It is compiled with numba by default; set the environment
variable ``FACERED_NO_NUMBA=1`` before import to select the pure-numpy
implementation instead (same algorithm, same results).

``benchmarks/bench_jacobi.py`` compares the two backends.
"""

import math
import os

import numpy as np

USE_NUMBA = os.environ.get("FACERED_NO_NUMBA", "") not in ("1", "true", "yes")


def _jacobi_cycle(A, Q, stop_off):
    """Run cyclic Jacobi sweeps on A in place, accumulating rotations in Q.

    Stops when the off-diagonal Frobenius norm drops below stop_off.
    Returns the number of sweeps performed.
    """
    n = A.shape[0]
    if n <= 1:
        return 0
    max_sweeps = 100
    for sweep in range(max_sweeps):
        off2 = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off2 += 2.0 * A[i, j] * A[i, j]
        if off2 <= stop_off * stop_off:
            return sweep
        # rotations below this threshold are skipped this sweep
        thresh = math.sqrt(off2) / (n * n)
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                if abs(apq) < thresh and sweep < 4:
                    continue
                diff = A[q, q] - A[p, p]
                if abs(apq) < 1e-150 * abs(diff):
                    t = apq / diff
                else:
                    theta = diff / (2.0 * apq)
                    t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- G^T A G with G the (p,q) rotation
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    qkp = Q[k, p]
                    qkq = Q[k, q]
                    Q[k, p] = c * qkp - s * qkq
                    Q[k, q] = s * qkp + c * qkq
    return max_sweeps


if USE_NUMBA:
    try:
        from numba import njit

        _jacobi_cycle = njit(cache=True)(_jacobi_cycle)
    except ImportError:  # pragma: no cover - numba is a declared dependency
        USE_NUMBA = False


def jacobi_eigh(A, stop_factor=1e-13):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Returns (w, Q) with eigenvalues w sorted descending and orthonormal
    eigenvector columns Q, so that A = Q @ diag(w) @ Q.T.
    """
    A = np.asarray(A, dtype=np.float64)
    n = A.shape[0]
    if n == 0:
        return np.zeros(0), np.zeros((0, 0))
    work = 0.5 * (A + A.T)
    fro = np.linalg.norm(work)
    Q = np.eye(n)
    _jacobi_cycle(work, Q, stop_factor * max(fro, 1e-300))
    w = np.diag(work).copy()
    order = np.argsort(-w)
    return w[order], Q[:, order]
