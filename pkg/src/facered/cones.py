"""Cone and face abstractions.

Supported cones: nonnegative orthant, PSD, EDM (through the linear
isomorphism with the PSD cone one order down), products of these, and a
hard-coded non-facially-exposed fixture (a cone over the convex hull of a
half disk glued to a square) used to exercise the face-singularity-degree
algorithm.
"""

from dataclasses import dataclass, field

import numpy as np

from .numerics import default_rank_tol, sym_eigen

FACE_PROJECTOR_TOL = 1e-8
ORTHONORMAL_TOL = 1e-10


class InvalidFaceError(ValueError):
    pass


class NotInDualError(ValueError):
    """The candidate exposing vector is not in the dual of the face."""


class NoReductionError(ValueError):
    """The candidate exposing vector is orthogonal to the whole face."""


# ---------------------------------------------------------------------------
# cone descriptors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Cone:
    """Tagged cone descriptor.

    kind is one of "orthant", "psd", "edm", "product"; n is the order
    (vector length for the orthant, matrix order for psd/edm); parts holds
    the factors of a product cone.
    """

    kind: str
    n: int = 0
    parts: tuple = ()

    def __post_init__(self):
        if self.kind in ("orthant", "psd", "edm") and self.n < 1:
            raise ValueError(f"{self.kind} cone needs order >= 1")
        if self.kind == "product" and not self.parts:
            raise ValueError("product cone needs at least one factor")


def orthant(n):
    return Cone("orthant", n=n)


def psd(n):
    return Cone("psd", n=n)


def edm(n):
    return Cone("edm", n=n)


def product(*parts):
    return Cone("product", parts=tuple(parts))


# ---------------------------------------------------------------------------
# faces
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrthantFace:
    n: int
    support: frozenset

    def __post_init__(self):
        if any(i < 0 or i >= self.n for i in self.support):
            raise InvalidFaceError("support indices out of range")


@dataclass(frozen=True)
class PsdFace:
    """Face {V R V^T : R psd} of the PSD cone, V with orthonormal columns."""

    n: int
    V: np.ndarray = field(compare=False)

    def __post_init__(self):
        V = np.asarray(self.V, dtype=float)
        if V.ndim != 2 or V.shape[0] != self.n:
            raise InvalidFaceError(f"face basis shape {V.shape} for order {self.n}")
        if V.shape[1]:
            gram = V.T @ V - np.eye(V.shape[1])
            if np.abs(gram).max() > ORTHONORMAL_TOL:
                raise InvalidFaceError("face basis columns are not orthonormal")
        object.__setattr__(self, "V", V)

    @property
    def rank(self):
        return self.V.shape[1]


@dataclass(frozen=True)
class ProductFace:
    parts: tuple


def full_face(cone):
    if cone.kind == "orthant":
        return OrthantFace(cone.n, frozenset(range(cone.n)))
    if cone.kind == "psd":
        return PsdFace(cone.n, np.eye(cone.n))
    if cone.kind == "edm":
        return PsdFace(cone.n - 1, np.eye(cone.n - 1)) if cone.n > 1 else PsdFace(1, np.eye(1))
    if cone.kind == "product":
        return ProductFace(tuple(full_face(p) for p in cone.parts))
    raise ValueError(f"unsupported cone kind {cone.kind!r}")


def face_dim(cone, face):
    if cone.kind == "orthant":
        return len(face.support)
    if cone.kind in ("psd", "edm"):
        r = face.rank
        return r * (r + 1) // 2
    if cone.kind == "product":
        return sum(face_dim(c, f) for c, f in zip(cone.parts, face.parts))
    raise ValueError(f"unsupported cone kind {cone.kind!r}")


def faces_equal(cone, f1, f2, tol=FACE_PROJECTOR_TOL):
    """Face comparison; PSD faces compare by projector V V^T."""
    if cone.kind == "orthant":
        return f1.support == f2.support
    if cone.kind in ("psd", "edm"):
        P1 = f1.V @ f1.V.T
        P2 = f2.V @ f2.V.T
        return bool(np.abs(P1 - P2).max() <= tol)
    if cone.kind == "product":
        return all(
            faces_equal(c, a, b, tol) for c, a, b in zip(cone.parts, f1.parts, f2.parts)
        )
    raise ValueError(f"unsupported cone kind {cone.kind!r}")


# ---------------------------------------------------------------------------
# dual residuals and exposure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DualResidual:
    in_dual: bool
    in_perp: bool
    residual: float


def dual_residual(cone, face, z, tol=None):
    """Check z against the dual of the face (as a cone in its own span).

    residual reports how far z is from the dual (0 when inside).
    """
    if cone.kind == "orthant":
        z = np.asarray(z, dtype=float)
        idx = sorted(face.support)
        zs = z[idx] if idx else np.zeros(0)
        tol = tol if tol is not None else 1e-9 * max(1.0, np.abs(z).max() if z.size else 0.0)
        neg = float(-zs.min()) if zs.size else 0.0
        return DualResidual(
            in_dual=neg <= tol,
            in_perp=bool(zs.size == 0 or np.abs(zs).max() <= tol),
            residual=max(neg, 0.0),
        )
    if cone.kind in ("psd", "edm"):
        z = np.asarray(z, dtype=float)
        V = face.V
        if V.shape[1] == 0:
            return DualResidual(in_dual=True, in_perp=True, residual=0.0)
        W = V.T @ z @ V
        W = 0.5 * (W + W.T)
        if tol is None:
            tol = default_rank_tol(W)
        eig = sym_eigen(W)
        lam_min = float(eig.eigenvalues[-1])
        return DualResidual(
            in_dual=lam_min >= -tol,
            in_perp=bool(np.abs(W).max() <= tol),
            residual=max(-lam_min, 0.0),
        )
    if cone.kind == "product":
        rs = [
            dual_residual(c, f, zp, tol)
            for c, f, zp in zip(cone.parts, face.parts, z)
        ]
        return DualResidual(
            in_dual=all(r.in_dual for r in rs),
            in_perp=all(r.in_perp for r in rs),
            residual=max(r.residual for r in rs),
        )
    raise ValueError(f"unsupported cone kind {cone.kind!r}")


def expose(cone, face, z, tol=None):
    """Intersect the face with the hyperplane z-perp: the exposed subface.

    Raises NotInDualError if z is not in the dual of the face, and
    NoReductionError if z annihilates the whole face (no progress).
    """
    res = dual_residual(cone, face, z, tol)
    if not res.in_dual:
        raise NotInDualError(f"z outside face dual (residual {res.residual:.3e})")
    if res.in_perp:
        raise NoReductionError("z is orthogonal to the face; no reduction")
    if cone.kind == "orthant":
        z = np.asarray(z, dtype=float)
        tol_ = tol if tol is not None else 1e-9 * max(1.0, np.abs(z).max())
        support = frozenset(i for i in face.support if z[i] <= tol_)
        return OrthantFace(face.n, support)
    if cone.kind in ("psd", "edm"):
        V = face.V
        W = V.T @ np.asarray(z, dtype=float) @ V
        W = 0.5 * (W + W.T)
        if tol is None:
            tol = default_rank_tol(W)
        eig = sym_eigen(W)
        lam = eig.eigenvalues
        lam_max = max(lam[0], 0.0) if lam.size else 0.0
        keep = np.abs(lam) <= tol * max(1.0, lam_max)
        Vnew = V @ eig.eigenvectors[:, keep]
        return PsdFace(face.n, Vnew)
    if cone.kind == "product":
        new_parts = []
        for c, f, zp in zip(cone.parts, face.parts, z):
            r = dual_residual(c, f, zp, tol)
            if r.in_perp:
                new_parts.append(f)
            else:
                new_parts.append(expose(c, f, zp, tol))
        return ProductFace(tuple(new_parts))
    raise ValueError(f"unsupported cone kind {cone.kind!r}")


# ---------------------------------------------------------------------------
# Lindenstrauss operators between Gram and distance matrices
# ---------------------------------------------------------------------------


def lindenstrauss_K(X):
    """K(X)_ij = X_ii + X_jj - 2 X_ij (works for float and Fraction arrays)."""
    X = np.asarray(X)
    d = np.diag(X)
    return d[:, None] + d[None, :] - 2 * X


def lindenstrauss_Kstar(D):
    """Adjoint of K: 2 (Diag(D e) - D)."""
    D = np.asarray(D)
    return 2 * (np.diag(D.sum(axis=1)) - D)


def off_diag(D):
    D = np.asarray(D).copy()
    np.fill_diagonal(D, 0 * D[0, 0])
    return D


def centering_J(n, exact=False):
    if exact:
        from fractions import Fraction

        J = np.full((n, n), Fraction(-1, n), dtype=object)
        for i in range(n):
            J[i, i] += 1
        return J
    return np.eye(n) - np.full((n, n), 1.0 / n)


def lindenstrauss_Kdagger(D):
    """Moore-Penrose pseudoinverse of K: -1/2 J offDiag(D) J."""
    D = np.asarray(D)
    n = D.shape[0]
    exact = D.dtype == object
    J = centering_J(n, exact=exact)
    half = __import__("fractions").Fraction(1, 2) if exact else 0.5
    return -half * (J @ off_diag(D) @ J)


def centered_basis(n):
    """Deterministic orthonormal basis U (n x (n-1)) of the complement of e.

    Columns of the Householder reflector mapping e/sqrt(n) to the last
    coordinate axis; used to identify the EDM cone with psd(n-1).
    """
    if n == 1:
        return np.zeros((1, 0))
    a = np.full(n, 1.0 / np.sqrt(n))
    u = a - np.eye(n)[:, n - 1]
    H = np.eye(n) - 2.0 * np.outer(u, u) / (u @ u)
    return H[:, : n - 1]


def edm_to_psd_functional(A, U=None):
    """Pull an EDM-space functional A back to the reduced PSD coordinates.

    <A, K(U Y U^T)> = <U^T K*(A) U, Y>.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if U is None:
        U = centered_basis(n)
    return U.T @ lindenstrauss_Kstar(A) @ U


# ---------------------------------------------------------------------------
# Figure-style fixture: cone over conv(half-disk U square), not facially
# exposed at the apex point A of the flat side
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Fig1Fixture:
    """Cone over C = {x^2+y^2<=1, y>=0} union [-1,1]x[-1,0] at height 1.

    The ray through A = (1,0,1) is a non-exposed face: every supporting
    functional vanishing at A also vanishes at B = (1,-1,1), so exposing
    cone(A) takes two steps: d1 = (-1,0,1) exposes cone{A,B}, then
    d2 = (0,-1,0) exposes cone{A} inside that face.
    """

    A: tuple = (1.0, 0.0, 1.0)
    B: tuple = (1.0, -1.0, 1.0)
    d1: tuple = (-1.0, 0.0, 1.0)
    d2: tuple = (0.0, -1.0, 0.0)

    # finite lattice of faces the oracle walks: full cone -> cone{A,B} -> ray A
    face_dims = {"full": 3, "segAB": 2, "rayA": 1, "zero": 0}

    def membership(self, x, tol=1e-9):
        """Is x in the cone cl cone{(p, 1) : p in C}?"""
        x = np.asarray(x, dtype=float)
        if abs(float(x[2])) <= tol:
            return bool(np.abs(x).max() <= tol)
        if x[2] < 0:
            return False
        px, py = x[0] / x[2], x[1] / x[2]
        in_disk = px * px + py * py <= 1.0 + tol and py >= -tol
        in_square = -1.0 - tol <= px <= 1.0 + tol and -1.0 - tol <= py <= tol
        return bool(in_disk or in_square)

    def base_points(self, samples=720):
        """Discretized base {(p,1) : p on the boundary of C} plus corners."""
        t = np.linspace(0.0, np.pi, samples)
        arc = np.stack([np.cos(t), np.sin(t), np.ones_like(t)], axis=1)
        corners = np.array(
            [[1.0, 0.0, 1.0], [1.0, -1.0, 1.0], [-1.0, -1.0, 1.0], [-1.0, 0.0, 1.0]]
        )
        side = np.linspace(0.0, 1.0, samples // 4)[:, None]
        edges = []
        for a, b in zip(corners, np.roll(corners, -1, axis=0)):
            edges.append(a * (1 - side) + b * side)
        return np.vstack([arc] + edges)

    def exposing_vector(self, face_tag, target_tag):
        """Oracle step for the face-singularity-degree algorithm."""
        if face_tag == target_tag:
            return None
        if face_tag == "full":
            return np.asarray(self.d1)
        if face_tag == "segAB" and target_tag == "rayA":
            return np.asarray(self.d2)
        raise InvalidFaceError(f"no oracle step from {face_tag} to {target_tag}")

    def expose_tag(self, face_tag, d):
        d = np.asarray(d, dtype=float)
        if face_tag == "full" and np.allclose(d, self.d1):
            return "segAB"
        if face_tag == "segAB" and np.allclose(d, self.d2):
            return "rayA"
        raise InvalidFaceError("exposing vector not in the fixture lattice")


def fig1_fixture():
    return Fig1Fixture()
