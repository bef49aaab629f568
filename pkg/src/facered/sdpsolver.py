"""Small dense primal-dual interior-point solver.

Solves   min <C, X> + c_z . z
         s.t. <A_i, X> + (G z)_i = b_i,   X psd (order n),  z >= 0
with a Mehrotra predictor-corrector using the HKM direction, a dense Schur
complement, and Cholesky factorizations.  Sized for the auxiliary problems
of facial reduction (n up to a few dozen, a few dozen constraints).
"""

from dataclasses import dataclass, field

import numpy as np

from .kernels import jacobi_eigh
from .numerics import range_basis

DEFAULT_TOL = 1e-8
MAX_ITER = 300
FRACTION_TO_BOUNDARY = 0.98
SCHUR_REG = 1e-12


@dataclass
class SdpProblem:
    n: int
    A: list  # m symmetric n x n constraint matrices
    b: np.ndarray
    C: np.ndarray
    G: np.ndarray | None = None  # m x p coefficients of the nonneg block
    c_z: np.ndarray | None = None

    def __post_init__(self):
        self.b = np.asarray(self.b, dtype=float)
        self.C = np.asarray(self.C, dtype=float)
        self.A = [np.asarray(Ai, dtype=float) for Ai in self.A]
        m = len(self.A)
        if self.b.shape != (m,):
            raise ValueError("b length does not match constraint count")
        for Ai in self.A:
            if Ai.shape != (self.n, self.n):
                raise ValueError("constraint matrix has wrong order")
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=float)
            if self.G.shape[0] != m:
                raise ValueError("G row count does not match constraints")
            p = self.G.shape[1]
            if self.c_z is None:
                self.c_z = np.zeros(p)
            else:
                self.c_z = np.asarray(self.c_z, dtype=float)

    @property
    def m(self):
        return len(self.A)

    @property
    def p(self):
        return 0 if self.G is None else self.G.shape[1]


@dataclass
class SdpSolution:
    # optimal | near-optimal | infeasible-certificate | unbounded-certificate
    # | numerical-failure.  "optimal" requires all residuals <= tol;
    # "near-optimal" is the best iterate when residuals stall in
    # (tol, 100*tol], which happens on degenerate auxiliary problems.
    status: str
    X: np.ndarray | None = None
    y: np.ndarray | None = None
    S: np.ndarray | None = None
    z: np.ndarray | None = None
    s_z: np.ndarray | None = None
    obj: float | None = None
    residuals: dict = field(default_factory=dict)
    iterations: int = 0
    certificate: np.ndarray | None = None


def _min_eig(M):
    w, _ = jacobi_eigh(M)
    return float(w[-1]) if w.size else 0.0


def _max_step_psd(X, dX):
    """Largest alpha <= 1 with X + alpha dX staying psd (X assumed pd)."""
    try:
        L = np.linalg.cholesky(X)
    except np.linalg.LinAlgError:
        return 0.0
    B = np.linalg.solve(L, np.linalg.solve(L, dX).T)
    lam = _min_eig(0.5 * (B + B.T))
    if lam >= -1e-14:
        return 1.0
    return min(1.0, -1.0 / lam)


def _max_step_pos(z, dz):
    mask = dz < 0
    if not mask.any():
        return 1.0
    return min(1.0, float(np.min(-z[mask] / dz[mask])))


def solve(prob: SdpProblem, tol=DEFAULT_TOL, max_iter=MAX_ITER) -> SdpSolution:
    n, m, p = prob.n, prob.m, prob.p
    if m == 0:
        # unconstrained: optimum 0 at X = 0 when C is psd, else unbounded
        lam = _min_eig(prob.C) if n else 0.0
        if lam < -tol:
            return SdpSolution(status="unbounded-certificate", obj=None)
        return SdpSolution(
            status="optimal", X=np.zeros((n, n)), y=np.zeros(0),
            S=prob.C.copy(), z=np.zeros(p), s_z=np.zeros(p), obj=0.0,
            residuals={"primal": 0.0, "dual": 0.0, "gap": 0.0},
        )

    Astack = np.stack(prob.A)  # (m, n, n)
    G = prob.G if p else np.zeros((m, 0))
    c_z = prob.c_z if p else np.zeros(0)
    b, C = prob.b, prob.C

    # row equilibration: wildly scaled constraints stall the Schur solves
    rowscale = np.array(
        [
            max(
                float(np.linalg.norm(Astack[k])) if n else 0.0,
                float(np.abs(G[k]).max(initial=0.0)) if p else 0.0,
                1e-30,
            )
            for k in range(m)
        ]
    )
    Astack = Astack / rowscale[:, None, None]
    G = G / rowscale[:, None] if p else G
    b = b / rowscale

    scale = max(1.0, float(np.abs(b).max()), float(np.abs(C).max()) if C.size else 0.0)
    X = np.eye(n) * scale
    S = np.eye(n) * scale
    y = np.zeros(m)
    z = np.ones(p) * scale
    s_z = np.ones(p) * scale

    bnorm = 1.0 + float(np.linalg.norm(b))
    cnorm = 1.0 + float(np.linalg.norm(C)) + (float(np.linalg.norm(c_z)) if p else 0.0)

    def a_of(Xm):
        return np.einsum("kij,ij->k", Astack, Xm)

    def astar(yv):
        return np.tensordot(yv, Astack, axes=(0, 0))

    status = "numerical-failure"
    best = None  # (worst residual, X, y, S, z, s_z)
    it = 0
    for it in range(1, max_iter + 1):
        Rp = b - a_of(X) - (G @ z if p else 0.0)
        Rd = C - astar(y) - S
        rdz = c_z - G.T @ y - s_z if p else np.zeros(0)
        mu = (float(np.sum(X * S)) + (float(z @ s_z) if p else 0.0)) / (n + p)

        pobj = float(np.sum(C * X)) + (float(c_z @ z) if p else 0.0)
        dobj = float(b @ y)
        pres = float(np.linalg.norm(Rp)) / bnorm
        dres = (float(np.linalg.norm(Rd)) + (float(np.linalg.norm(rdz)) if p else 0.0)) / cnorm
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        worst = max(pres, dres, gap)
        if best is None or worst < best[0]:
            best = (worst, X.copy(), y.copy(), S.copy(), z.copy(), s_z.copy())
        if pres <= tol and dres <= tol and gap <= tol:
            status = "optimal"
            break

        # primal infeasibility: y with A*(y) <= 0, G^T y <= 0, b.y = 1
        t = float(b @ y)
        if t > 1e-6 * scale:
            v = y / t
            viol = max(_min_eig(-astar(v)), 0.0)
            lam_max = -_min_eig(-astar(v))
            gviol = float(np.max(G.T @ v)) if p else 0.0
            if lam_max <= 1e-8 and gviol <= 1e-8:
                v_orig = v / rowscale
                return SdpSolution(
                    status="infeasible-certificate", y=v_orig, certificate=v_orig,
                    residuals={"farkas_psd": lam_max, "farkas_orthant": gviol},
                    iterations=it,
                )
        # primal unboundedness heuristic
        if pobj < -1e12 * scale:
            return SdpSolution(status="unbounded-certificate", X=X / max(np.abs(X).max(), 1.0), iterations=it)

        try:
            np.linalg.cholesky(S)
            Sinv = np.linalg.inv(S)
        except np.linalg.LinAlgError:
            break
        Sinv = 0.5 * (Sinv + Sinv.T)

        # Schur complement M_ij = tr(A_i X A_j S^-1) (+ orthant block)
        T = np.einsum("ab,kbc,cd->kad", X, Astack, Sinv)
        M = np.einsum("iab,jba->ij", Astack, T)
        M = 0.5 * (M + M.T)
        if p:
            M += (G * (z / s_z)) @ G.T
        reg = SCHUR_REG * (1.0 + float(np.trace(M)))
        Lm = None
        for bump in range(7):
            try:
                Lm = np.linalg.cholesky(M + reg * np.eye(m))
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if Lm is None:
            break

        def solve_schur(rhs):
            dy = np.linalg.solve(Lm.T, np.linalg.solve(Lm, rhs))
            # refinement against the unregularized Schur matrix recovers the
            # digits lost to the diagonal shift on ill-conditioned systems
            for _ in range(2):
                dy = dy + np.linalg.solve(Lm.T, np.linalg.solve(Lm, rhs - M @ dy))
            return dy

        def direction(sigma_mu, corr_mat, corr_z):
            base_mat = sigma_mu * Sinv - X - X @ Rd @ Sinv - corr_mat
            base_z = (sigma_mu / s_z - z - (z / s_z) * rdz - corr_z) if p else np.zeros(0)
            rhs = Rp - a_of(0.5 * (base_mat + base_mat.T)) - (G @ base_z if p else 0.0)
            dy = solve_schur(rhs)
            dS = Rd - astar(dy)
            ds_z = rdz - G.T @ dy if p else np.zeros(0)
            dX = sigma_mu * Sinv - X - X @ dS @ Sinv - corr_mat
            dX = 0.5 * (dX + dX.T)
            dz = (sigma_mu / s_z - z - (z / s_z) * ds_z - corr_z) if p else np.zeros(0)
            return dX, dy, dS, dz, ds_z

        # predictor
        dXa, dya, dSa, dza, dsza = direction(0.0, np.zeros((n, n)), np.zeros(p))
        ap = min(_max_step_psd(X, dXa), _max_step_pos(z, dza) if p else 1.0)
        ad = min(_max_step_psd(S, dSa), _max_step_pos(s_z, dsza) if p else 1.0)
        Xa = X + ap * dXa
        Sa = S + ad * dSa
        mu_aff = float(np.sum(Xa * Sa))
        if p:
            mu_aff += float((z + ap * dza) @ (s_z + ad * dsza))
        mu_aff /= n + p
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10)) if mu > 0 else 0.0
        # keep mu from collapsing below the remaining infeasibility, or the
        # directions lose the accuracy needed to restore feasibility
        infeas = float(np.linalg.norm(Rp)) + float(np.linalg.norm(Rd))
        if p:
            infeas += float(np.linalg.norm(rdz))
        if max(pres, dres) > 100.0 * tol and mu < 5.0 * infeas:
            sigma = max(sigma, 0.7)

        # corrector
        corr_mat = dXa @ dSa @ Sinv
        corr_z = dza * dsza / s_z if p else np.zeros(0)
        dX, dy, dS, dz, ds_z = direction(sigma * mu, corr_mat, corr_z)

        ap = FRACTION_TO_BOUNDARY * min(
            _max_step_psd(X, dX), _max_step_pos(z, dz) if p else 1.0
        )
        ad = FRACTION_TO_BOUNDARY * min(
            _max_step_psd(S, dS), _max_step_pos(s_z, ds_z) if p else 1.0
        )
        if ap <= 1e-13 and ad <= 1e-13:
            break
        # a near-full step from an infeasible start can inflate tr(XS) by
        # orders of magnitude and catapult the iterate far off the central
        # path; cap the post-step complementarity growth instead
        for _ in range(60):
            mu_new = float(np.sum((X + ap * dX) * (S + ad * dS)))
            if p:
                mu_new += float(
                    np.maximum(z + ap * dz, 1e-300)
                    @ np.maximum(s_z + ad * ds_z, 1e-300)
                )
            mu_new /= n + p
            if mu_new <= 10.0 * mu or (ap <= 1e-13 and ad <= 1e-13):
                break
            ap *= 0.5
            ad *= 0.5
        X = X + ap * dX
        y = y + ad * dy
        S = S + ad * dS
        if p:
            z = np.maximum(z + ap * dz, 1e-300)
            s_z = np.maximum(s_z + ad * ds_z, 1e-300)
        X = 0.5 * (X + X.T)
        S = 0.5 * (S + S.T)

    if status != "optimal" and best is not None:
        if best[0] <= 100.0 * tol:
            status = "near-optimal"
        _, X, y, S, z, s_z = best
    pobj = float(np.sum(C * X)) + (float(c_z @ z) if p else 0.0)
    dobj = float(b @ y)
    sol = SdpSolution(
        status=status, X=X, y=y / rowscale, S=S, z=z, s_z=s_z, obj=pobj,
        residuals={
            "primal": float(np.linalg.norm(b - a_of(X) - (G @ z if p else 0.0))) / bnorm,
            "dual": float(np.linalg.norm(C - astar(y) - S)) / cnorm,
            "gap": abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
            "dual_obj": dobj,
        },
        iterations=it,
    )
    return sol


# ---------------------------------------------------------------------------
# symmetric vectorization helpers
# ---------------------------------------------------------------------------


def svec(M):
    """Isometric vectorization of a symmetric matrix (off-diagonals * sqrt2)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    iu = np.triu_indices(n)
    out = M[iu].copy()
    out[iu[0] != iu[1]] *= np.sqrt(2.0)
    return out


def smat(v, n):
    iu = np.triu_indices(n)
    M = np.zeros((n, n))
    v = np.asarray(v, dtype=float).copy()
    off = iu[0] != iu[1]
    v = v.copy()
    v[off] /= np.sqrt(2.0)
    M[iu] = v
    M[(iu[1], iu[0])] = v
    return M


# ---------------------------------------------------------------------------
# the slice maximization used by greedy facial reduction
# ---------------------------------------------------------------------------


@dataclass
class SliceOptimum:
    value: float
    v: np.ndarray | None  # multiplier in the original constraint coordinates
    W: np.ndarray | None  # psd block of the optimizer
    w: np.ndarray | None  # orthant block of the optimizer
    status: str


class SolverFailure(RuntimeError):
    def __init__(self, solution):
        self.solution = solution
        super().__init__(f"interior-point solver failed: {solution.status}")


def _clearly_positive(sol, value):
    """A stalled solve is still usable when its best iterate is nearly
    feasible and its value is unambiguously above the noise floor; accuracy
    decisions near zero stay reserved for fully converged solves."""
    res = sol.residuals or {}
    return (
        res.get("primal", np.inf) <= 1e-5
        and res.get("dual", np.inf) <= 1e-5
        and res.get("gap", np.inf) <= 1e-4
        and value >= 1e-2
    )


def max_linear_over_slice(Bmats, b, P, O=None, q=None, tol=DEFAULT_TOL):
    """Maximize <P, W> (+ q.w) over the trace-normalized exposer slice.

    The slice is { (W, w) = sum_k v_k (B_k, O_k) : v . b = 0, W psd,
    w >= 0, trace W + sum w <= 1 }, with B_k symmetric (order r) and O the
    optional m x p_o orthant components.  Returns the optimum, an attaining
    multiplier v, and the blocks.  A zero slice returns value 0 directly.
    """
    m = len(Bmats)
    r = Bmats[0].shape[0] if m else 0
    b = np.asarray(b, dtype=float)
    O = np.zeros((m, 0)) if O is None else np.asarray(O, dtype=float)
    po = O.shape[1]
    if m == 0 or (r == 0 and po == 0):
        return SliceOptimum(0.0, None, None, None, "empty")

    # per-constraint normalization: wide dynamic range in the data would
    # otherwise push genuine multiplier directions down to the span-pruning
    # noise floor
    cscale = np.array(
        [
            max(
                float(np.linalg.norm(Bk)) if r else 0.0,
                float(np.abs(O[k]).max(initial=0.0)),
                abs(float(b[k])),
                1e-30,
            )
            for k, Bk in enumerate(Bmats)
        ]
    )
    Bmats = [Bk / cscale[k] for k, Bk in enumerate(Bmats)]
    O = O / cscale[:, None] if po else O
    b = b / cscale

    # orthonormal basis of the b-orthogonal multipliers
    if np.linalg.norm(b) <= 1e-14:
        Ub = np.eye(m)
    else:
        Ub = range_basis(np.eye(m) - np.outer(b, b) / float(b @ b), tol=1e-10)
    nb = Ub.shape[1]
    if nb == 0:
        return SliceOptimum(0.0, None, None, None, "empty")

    R = r * (r + 1) // 2
    img = np.zeros((R + po, nb))
    for k in range(nb):
        u = Ub[:, k]
        Wk = np.tensordot(u, np.stack(Bmats), axes=(0, 0)) if r else np.zeros((0, 0))
        img[:R, k] = svec(Wk) if r else np.zeros(0)
        img[R:, k] = u @ O
    # span tolerance also prunes noise directions inherited from earlier
    # inexact face reductions: float rounding of the data limits face
    # accuracy to ~1e-7, and near-dependent functionals amplify that tilt
    # into spurious slice directions with tiny singular values
    Lbasis = range_basis(img, tol=1e-5)
    s = Lbasis.shape[1]
    if s == 0:
        return SliceOptimum(0.0, None, None, None, "empty")
    # orthogonal complement of the slice span: equality constraints
    Ncomp = range_basis(np.eye(R + po) - Lbasis @ Lbasis.T, tol=1e-10)

    q = np.zeros(po) if q is None else np.asarray(q, dtype=float)
    ncon = Ncomp.shape[1] + 1
    Amats = []
    Grows = np.zeros((ncon, po + 1))
    bvec = np.zeros(ncon)
    for j in range(Ncomp.shape[1]):
        Amats.append(smat(Ncomp[:R, j], r) if r else np.zeros((0, 0)))
        Grows[j, :po] = Ncomp[R:, j]
    # normalization: trace W + sum w + t = 1
    Amats.append(np.eye(r))
    Grows[ncon - 1, :po] = 1.0
    Grows[ncon - 1, po] = 1.0
    bvec[ncon - 1] = 1.0

    Cobj = -np.asarray(P, dtype=float) if r else np.zeros((0, 0))
    c_z = np.concatenate([-q, [0.0]])
    prob = SdpProblem(n=r, A=Amats, b=bvec, C=Cobj, G=Grows, c_z=c_z)
    sol = solve(prob, tol=tol)
    W = 0.5 * (sol.X + sol.X.T) if r else np.zeros((0, 0))
    w = sol.z[:po]
    value = float(np.sum(np.asarray(P, dtype=float) * W)) + float(q @ w)
    if sol.status not in ("optimal", "near-optimal") and not _clearly_positive(
        sol, value
    ):
        raise SolverFailure(sol)
    # recover the multiplier by least squares in the slice coordinates
    target = np.concatenate([svec(W) if r else np.zeros(0), w])
    alpha, *_ = np.linalg.lstsq(img, target, rcond=None)
    v = (Ub @ alpha) / cscale  # undo the per-constraint normalization
    return SliceOptimum(value, v, W, w, "optimal")
