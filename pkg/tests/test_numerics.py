"""Float and exact linear-algebra primitives."""

from fractions import Fraction

import numpy as np
import pytest

from facered.numerics import (
    NotSymmetricError,
    numeric_rank,
    nullspace_basis,
    range_basis,
    rational_lp,
    rational_nullspace,
    rational_rank,
    sym_eigen,
)


class TestSymEigen:
    def test_identity(self):
        eig = sym_eigen(np.eye(3))
        assert np.allclose(eig.eigenvalues, [1.0, 1.0, 1.0])

    def test_diagonal(self):
        eig = sym_eigen(np.diag([3.0, 1.0]))
        assert np.allclose(eig.eigenvalues, [3.0, 1.0])
        assert np.allclose(np.abs(eig.eigenvectors), np.eye(2))

    def test_offdiagonal_pair(self):
        # characteristic polynomial of [[0,1],[1,0]] is l^2 - 1
        eig = sym_eigen(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.allclose(eig.eigenvalues, [1.0, -1.0])

    def test_rejects_nonsymmetric(self):
        with pytest.raises(NotSymmetricError):
            sym_eigen(np.array([[0.0, 1.0], [0.0, 0.0]]))

    @pytest.mark.parametrize("n", [1, 2, 5, 8, 12])
    def test_reconstruction_and_orthonormality(self, n):
        rng = np.random.default_rng(n)
        A = rng.normal(size=(n, n))
        A = A + A.T
        eig = sym_eigen(A)
        Q, w = eig.eigenvectors, eig.eigenvalues
        assert np.abs(Q.T @ Q - np.eye(n)).max() <= 1e-10
        recon = Q @ np.diag(w) @ Q.T
        assert np.abs(A - recon).max() <= 1e-9 * max(1.0, np.abs(A).max())
        assert (np.diff(w) <= 1e-12).all()  # descending


class TestNumericRank:
    def test_zero(self):
        assert numeric_rank(np.zeros((3, 3)), tol=1e-8) == 0

    def test_identity(self):
        assert numeric_rank(np.eye(4), tol=1e-8) == 4

    def test_rank_one_outer(self):
        v = np.array([1.0, -1.0, 1.0, -1.0])
        assert numeric_rank(np.outer(v, v), tol=1e-8) == 1

    def test_rectangular(self):
        A = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        assert numeric_rank(A) == 1

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            numeric_rank(np.eye(2), tol=0.0)


class TestNullspaceBasis:
    def test_full_rank_empty(self):
        assert nullspace_basis(np.eye(2)).shape == (2, 0)

    def test_row_sum(self):
        # hand solve x1 + x2 = 0
        B = nullspace_basis(np.array([[1.0, 1.0]]))
        assert B.shape == (2, 1)
        assert np.allclose(np.abs(B[:, 0]), [1 / np.sqrt(2), 1 / np.sqrt(2)])
        assert abs(B[0, 0] + B[1, 0]) <= 1e-12

    def test_zero_matrix(self):
        B = nullspace_basis(np.zeros((2, 3)))
        assert B.shape == (3, 3)
        assert np.abs(B.T @ B - np.eye(3)).max() <= 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_dimension_count_and_annihilation(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.normal(size=(4, 7)) @ np.diag(rng.integers(0, 2, size=7)).astype(float)
        B = nullspace_basis(A)
        assert B.shape[1] == 7 - numeric_rank(A)
        if B.size:
            assert np.abs(A @ B).max() <= 1e-7 * max(1.0, np.abs(A).max())
            assert np.abs(B.T @ B - np.eye(B.shape[1])).max() <= 1e-10


class TestRangeBasis:
    def test_orthonormal_and_spanning(self):
        rng = np.random.default_rng(0)
        A = rng.normal(size=(5, 2))
        U = range_basis(np.hstack([A, A]))
        assert U.shape == (5, 2)
        # A's columns reconstruct from the basis
        proj = U @ U.T
        assert np.abs(proj @ A - A).max() <= 1e-8


class TestRationalNullspace:
    def test_full_rank_empty(self):
        assert rational_nullspace([[1, 0], [0, 1]]) == []

    def test_exact_kernel(self):
        basis = rational_nullspace([[1, 1]])
        assert len(basis) == 1
        x = basis[0]
        assert x[0] + x[1] == 0

    @pytest.mark.parametrize("seed", range(6))
    def test_rank_nullity_exact(self, seed):
        rng = np.random.default_rng(seed)
        A = [[int(x) for x in row] for row in rng.integers(-5, 6, size=(4, 8))]
        basis = rational_nullspace(A)
        assert len(basis) + rational_rank(A) == 8
        for vec in basis:
            for row in A:
                assert sum(Fraction(a) * x for a, x in zip(row, vec)) == 0


class TestRationalLp:
    def test_simple_optimal(self):
        res = rational_lp([1, 0], [[1, 1]], [1], sense="max")
        assert res.status == "optimal"
        assert res.x == [1, 0]
        assert res.value == 1

    def test_unbounded(self):
        res = rational_lp([1, 0], [[1, -1]], [0], sense="max")
        assert res.status == "unbounded"
        assert res.ray is not None
        # the ray keeps the constraint at zero and increases the objective
        assert res.ray[0] - res.ray[1] == 0
        assert res.ray[0] > 0

    def test_infeasible(self):
        res = rational_lp([0], [[1]], [-1], sense="max")
        assert res.status == "infeasible"

    def test_min_sense(self):
        res = rational_lp([1, 1], [[1, 1]], [1], sense="min")
        assert res.status == "optimal"
        assert res.value == 1

    @pytest.mark.parametrize("seed", range(8))
    def test_agrees_with_vertex_enumeration(self, seed):
        # exhaustive basic-feasible-solution oracle for n <= 5, m <= 4
        from itertools import combinations

        rng = np.random.default_rng(100 + seed)
        m, n = 2, 4
        A = [[Fraction(int(x)) for x in row] for row in rng.integers(-3, 4, size=(m, n))]
        x0 = [Fraction(int(x)) for x in rng.integers(0, 3, size=n)]
        b = [sum(A[i][j] * x0[j] for j in range(n)) for i in range(m)]
        c = [Fraction(int(x)) for x in rng.integers(-4, 5, size=n)]
        res = rational_lp(c, A, b, sense="max")
        best = None
        for cols in combinations(range(n), m):
            sub = [[A[i][j] for j in cols] for i in range(m)]
            # solve sub * xb = b exactly via the nullspace of the augmented
            aug = [row + [rhs] for row, rhs in zip(sub, b)]
            ker = rational_nullspace(aug)
            for vec in ker:
                if vec[-1] == 0:
                    continue
                xb = [-v / vec[-1] for v in vec[:-1]]
                if all(x >= 0 for x in xb):
                    x = [Fraction(0)] * n
                    for k, j in enumerate(cols):
                        x[j] = xb[k]
                    val = sum(ci * xi for ci, xi in zip(c, x))
                    if best is None or val > best:
                        best = val
        if res.status == "optimal" and best is not None:
            assert res.value >= best
            assert all(
                sum(A[i][j] * res.x[j] for j in range(n)) == b[i] for i in range(m)
            )
            assert all(x >= 0 for x in res.x)
