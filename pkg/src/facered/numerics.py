"""Exact rational and dense floating-point linear algebra.

Float spectral work goes through the Jacobi kernel in :mod:`facered.kernels`.
Rational work uses :class:`fractions.Fraction` (arbitrary precision, always
reduced, positive denominator) with exact Gaussian elimination and an exact
two-phase simplex using Bland's rule.
"""

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .kernels import jacobi_eigh

Rational = Fraction

#: default rank-tolerance rule: 1e-7 * max(1, largest magnitude) * n
RANK_TOL_COEFF = 1e-7


class NotSymmetricError(ValueError):
    def __init__(self, residual):
        self.residual = residual
        super().__init__(f"matrix is not symmetric (residual {residual:.3e})")


@dataclass(frozen=True)
class SymEigen:
    """Spectral decomposition A = Q diag(w) Q^T, eigenvalues descending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def sym_eigen(A, sym_tol=1e-12):
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    scale = max(1.0, float(np.abs(A).max()) if A.size else 0.0)
    residual = float(np.abs(A - A.T).max()) / scale if A.size else 0.0
    if residual > sym_tol:
        raise NotSymmetricError(residual)
    w, Q = jacobi_eigh(A)
    return SymEigen(eigenvalues=w, eigenvectors=Q)


def default_rank_tol(A):
    A = np.asarray(A, dtype=float)
    n = max(A.shape) if A.size else 1
    top = float(np.abs(A).max()) if A.size else 0.0
    return RANK_TOL_COEFF * max(1.0, top) * n


def _sv_decomp(A):
    """Singular values/vectors through the symmetric embedding [[0,A],[A^T,0]].

    Returns (s descending, U, V) with A = U diag(s) V^T restricted to the
    numerically nonzero part plus noise-level tail; unlike a Gram-matrix
    approach, small singular values are computed at full relative accuracy.
    """
    A = np.asarray(A, dtype=float)
    mr, nc = A.shape
    if A.size == 0:
        return np.zeros(0), np.zeros((mr, 0)), np.zeros((nc, 0))
    B = np.zeros((mr + nc, mr + nc))
    B[:mr, mr:] = A
    B[mr:, :mr] = A.T
    w, Q = jacobi_eigh(B)
    k = min(mr, nc)
    s = w[:k]
    U = np.sqrt(2.0) * Q[:mr, :k]
    V = np.sqrt(2.0) * Q[mr:, :k]
    s = np.clip(s, 0.0, None)
    return s, U, V


def _singular_values(A):
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros(0)
    if A.shape[0] == A.shape[1] and np.abs(A - A.T).max() <= 1e-13 * max(
        1.0, np.abs(A).max()
    ):
        w, _ = jacobi_eigh(A)
        return np.sort(np.abs(w))[::-1]
    s, _, _ = _sv_decomp(A)
    return s


def numeric_rank(A, tol=None):
    """Count of singular values exceeding tol * sigma_max."""
    if tol is None:
        tol = RANK_TOL_COEFF
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = _singular_values(A)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def nullspace_basis(A, tol=None):
    """Orthonormal columns spanning the (right) numerical kernel of A."""
    if tol is None:
        tol = RANK_TOL_COEFF
    if tol <= 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a matrix")
    ncols = A.shape[1]
    if A.size == 0:
        return np.eye(ncols)
    s, _, V = _sv_decomp(A)
    if s.size == 0 or s[0] == 0.0:
        return np.eye(ncols)
    Vkeep = V[:, s > tol * s[0]]
    # kernel = orthocomplement of the numerical row space
    proj = np.eye(ncols) - Vkeep @ Vkeep.T
    w, Q = jacobi_eigh(proj)
    return Q[:, w > 0.5]


def range_basis(A, tol=None):
    """Orthonormal columns spanning the numerical column space of A."""
    if tol is None:
        tol = RANK_TOL_COEFF
    A = np.asarray(A, dtype=float)
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    s, U, _ = _sv_decomp(A)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[0], 0))
    return U[:, s > tol * s[0]]


# ---------------------------------------------------------------------------
# exact rational linear algebra
# ---------------------------------------------------------------------------


def _to_fraction_matrix(A):
    return [[Fraction(x) for x in row] for row in A]


def rational_rref(A):
    """Reduced row-echelon form with exact arithmetic.

    Returns (rref rows, pivot column indices).
    """
    M = _to_fraction_matrix(A)
    nrows = len(M)
    ncols = len(M[0]) if nrows else 0
    pivots = []
    r = 0
    for c in range(ncols):
        if r >= nrows:
            break
        pivot = next((i for i in range(r, nrows) if M[i][c] != 0), None)
        if pivot is None:
            continue
        M[r], M[pivot] = M[pivot], M[r]
        inv = M[r][c]
        M[r] = [x / inv for x in M[r]]
        for i in range(nrows):
            if i != r and M[i][c] != 0:
                f = M[i][c]
                M[i] = [a - f * b for a, b in zip(M[i], M[r])]
        pivots.append(c)
        r += 1
    return M, pivots


def rational_nullspace(A):
    """Exact kernel basis of a rational matrix, as a list of columns."""
    nrows = len(A)
    ncols = len(A[0]) if nrows else 0
    if ncols == 0:
        return []
    M, pivots = rational_rref(A)
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * ncols
        vec[f] = Fraction(1)
        for r, p in enumerate(pivots):
            vec[p] = -M[r][f]
        basis.append(vec)
    return basis


def rational_rank(A):
    _, pivots = rational_rref(A)
    return len(pivots)


# ---------------------------------------------------------------------------
# exact simplex
# ---------------------------------------------------------------------------


@dataclass
class LpResult:
    status: str  # "optimal" | "unbounded" | "infeasible"
    x: list | None = None
    value: Fraction | None = None
    ray: list | None = None


def _pivot(T, basis, row, col):
    m = len(T) - 1
    piv = T[row][col]
    T[row] = [x / piv for x in T[row]]
    for i in range(m + 1):
        if i != row and T[i][col] != 0:
            f = T[i][col]
            T[i] = [a - f * b for a, b in zip(T[i], T[row])]
    basis[row] = col


def _simplex_core(T, basis, ncols):
    """Maximize with Bland's rule on tableau T (last row = reduced costs).

    Returns "optimal" or ("unbounded", entering column).
    """
    m = len(T) - 1
    while True:
        enter = next((j for j in range(ncols) if T[m][j] > 0), None)
        if enter is None:
            return "optimal", None
        leave, best = None, None
        for i in range(m):
            if T[i][enter] > 0:
                ratio = T[i][ncols] / T[i][enter]
                if best is None or ratio < best or (
                    ratio == best and basis[i] < basis[leave]
                ):
                    best, leave = ratio, i
        if leave is None:
            return "unbounded", enter
        _pivot(T, basis, leave, enter)


def rational_lp(c, A, b, sense="max"):
    """Exact LP: optimize c^T x subject to A x = b, x >= 0.

    Two-phase simplex with Bland's rule; everything in Fractions.
    """
    m = len(A)
    n = len(c)
    for row in A:
        if len(row) != n:
            raise ValueError("A row length does not match c")
    if len(b) != m:
        raise ValueError("b length does not match A")
    c = [Fraction(x) for x in c]
    if sense == "min":
        c = [-x for x in c]
    elif sense != "max":
        raise ValueError("sense must be 'max' or 'min'")
    rows = _to_fraction_matrix(A) if m else []
    rhs = [Fraction(x) for x in b]
    for i in range(m):
        if rhs[i] < 0:
            rows[i] = [-x for x in rows[i]]
            rhs[i] = -rhs[i]

    # phase 1: artificials n..n+m-1
    total = n + m
    T = []
    for i in range(m):
        art = [Fraction(0)] * m
        art[i] = Fraction(1)
        T.append(rows[i] + art + [rhs[i]])
    # maximize -sum(artificials); reduced costs with the artificial basis
    obj = [Fraction(0)] * (total + 1)
    for i in range(m):
        obj = [o + t for o, t in zip(obj, T[i])]
    for j in range(n, total):
        obj[j] = Fraction(0)
    T.append(obj)
    basis = list(range(n, total))
    _simplex_core(T, basis, total)
    if T[m][total] > 0:
        return LpResult(status="infeasible")
    # drive remaining artificials out of the basis
    drop_rows = []
    for i in range(m):
        if basis[i] >= n:
            col = next((j for j in range(n) if T[i][j] != 0), None)
            if col is None:
                drop_rows.append(i)
            else:
                _pivot(T, basis, i, col)
    for i in sorted(drop_rows, reverse=True):
        del T[i]
        del basis[i]
    m2 = len(basis)
    # strip artificial columns, rebuild objective row
    T = [row[:n] + [row[total]] for row in T[:m2]]
    obj = list(c) + [Fraction(0)]
    for i in range(m2):
        cb = c[basis[i]]
        if cb != 0:
            obj = [o - cb * t for o, t in zip(obj, T[i])]
    T.append(obj)
    status, enter = _simplex_core(T, basis, n)
    if status == "unbounded":
        ray = [Fraction(0)] * n
        ray[enter] = Fraction(1)
        for i in range(m2):
            ray[basis[i]] = -T[i][enter]
        return LpResult(status="unbounded", ray=ray)
    x = [Fraction(0)] * n
    for i in range(m2):
        x[basis[i]] = T[i][n]
    value = sum(ci * xi for ci, xi in zip(c, x))
    if sense == "min":
        value = -value
    return LpResult(status="optimal", x=x, value=value)
