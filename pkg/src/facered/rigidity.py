"""Bar-joint and tensegrity framework rigidity via facial reduction.

A framework's squared edge lengths define a distance-matrix completion
problem over the EDM cone.  Facial reduction of that system produces a
sequence of PSD stress matrices; the number of reduction steps is the
framework's singularity degree, and the accumulated stress ranks certify
dimensional (and hence universal) rigidity.

Also here: combinatorial generators and tests (Laman via the (2,3)-pebble
game, chordality via Lex-BFS, clique-wise EDM completability for chordal
graphs) used to produce interesting inputs.
"""

from dataclasses import dataclass, field

import numpy as np

from . import cones
from .cones import centered_basis, lindenstrauss_Kdagger
from .facial import ConicSystem, facial_reduction, nullspace_reduce
from .numerics import (
    Rational,
    numeric_rank,
    nullspace_basis,
)
from .sdpsolver import smat, svec

COINCIDENT_TOL = 1e-9


# ---------------------------------------------------------------------------
# graphs and frameworks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple  # tuple of (i, j) with i < j

    def __post_init__(self):
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < j < self.n):
                raise ValueError(f"bad edge ({i}, {j}) for {self.n} vertices")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @property
    def m(self):
        return len(self.edges)

    def adjacency(self):
        adj = [set() for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].add(j)
            adj[j].add(i)
        return adj


def graph(n, edges):
    return Graph(n, tuple(sorted(tuple(sorted(e)) for e in edges)))


@dataclass(frozen=True)
class Framework:
    """Points in R^d joined by members (bars by default; cables may only
    shorten, struts may only lengthen)."""

    graph: Graph
    P: object  # n x d configuration; float or Fraction entries
    members: tuple = ()  # per-edge "bar" | "cable" | "strut"

    def __post_init__(self):
        if self.members and len(self.members) != self.graph.m:
            raise ValueError("members must align with the edge list")
        for t in self.members:
            if t not in ("bar", "cable", "strut"):
                raise ValueError(f"unknown member type {t!r}")

    @property
    def n(self):
        return self.graph.n

    @property
    def d(self):
        return len(self.P[0])

    def points(self):
        return np.asarray([[float(x) for x in row] for row in self.P])

    def member_types(self):
        return self.members if self.members else ("bar",) * self.graph.m

    def is_tensegrity(self):
        return any(t != "bar" for t in self.member_types())

    def has_coincident_points(self, tol=COINCIDENT_TOL):
        P = self.points()
        for i in range(self.n):
            for j in range(i + 1, self.n):
                if np.linalg.norm(P[i] - P[j]) <= tol:
                    return True
        return False


def framework(gr, P, members=()):
    return Framework(gr, tuple(tuple(row) for row in P), tuple(members))


# ---------------------------------------------------------------------------
# infinitesimal rigidity
# ---------------------------------------------------------------------------


def rigidity_matrix(fw: Framework):
    """|E| x nd matrix of the differential of the edge-length map."""
    P = fw.points()
    n, d = P.shape
    R = np.zeros((fw.graph.m, n * d))
    for e, (i, j) in enumerate(fw.graph.edges):
        diff = P[i] - P[j]
        R[e, i * d : (i + 1) * d] = diff
        R[e, j * d : (j + 1) * d] = -diff
    return R


def edge_lengths_sq(fw: Framework):
    P = fw.points()
    return np.array(
        [float(np.sum((P[i] - P[j]) ** 2)) for i, j in fw.graph.edges]
    )


def rigidity_map(fw: Framework):
    """Squared member lengths; its Jacobian is 2x the rigidity matrix."""
    return edge_lengths_sq(fw)


def trivial_motion_dim(fw: Framework):
    """Dimension of the rigid motions restricted to the configuration."""
    P = fw.points()
    d = P.shape[1]
    k = numeric_rank(P - P.mean(axis=0))  # dimension of the affine span
    # translations plus the rotations that move the configuration
    return d + d * (d - 1) // 2 - (d - k) * (d - k - 1) // 2


@dataclass(frozen=True)
class InfinitesimalVerdict:
    rigid: bool
    flex_dim: int
    rank: int
    independent: bool  # rigidity-matrix rows linearly independent
    minimal: bool  # rigid with independent rows


def infinitesimal_verdict(fw: Framework) -> InfinitesimalVerdict:
    R = rigidity_matrix(fw)
    n, d = fw.n, fw.d
    rank = numeric_rank(R)
    flex_dim = n * d - trivial_motion_dim(fw) - rank
    indep = rank == fw.graph.m
    return InfinitesimalVerdict(
        rigid=flex_dim == 0,
        flex_dim=flex_dim,
        rank=rank,
        independent=indep,
        minimal=flex_dim == 0 and indep,
    )


def equilibrium_stress_basis(fw: Framework):
    """Orthonormal basis of the equilibrium stresses (left kernel of R)."""
    R = rigidity_matrix(fw)
    return nullspace_basis(R.T)


def stress_matrix_from(gr: Graph, omega):
    """Stress matrix: Omega_ij = -omega_ij on edges, row sums zero."""
    n = gr.n
    Omega = np.zeros((n, n))
    for w, (i, j) in zip(omega, gr.edges):
        w = float(w)
        Omega[i, j] -= w
        Omega[j, i] -= w
        Omega[i, i] += w
        Omega[j, j] += w
    return Omega


def affine_flex_dim(fw: Framework):
    """Dimension of affine flexes: symmetric S with the edge directions in
    S-isotropic position, i.e. <S, (p_i-p_j)(p_i-p_j)^T> = 0 for all members."""
    P = fw.points()
    d = fw.d
    rows = []
    for i, j in fw.graph.edges:
        diff = P[i] - P[j]
        rows.append(svec(np.outer(diff, diff)))
    if not rows:
        return d * (d + 1) // 2
    return nullspace_basis(np.vstack(rows)).shape[1]


# ---------------------------------------------------------------------------
# EDM completion system and stress sequences
# ---------------------------------------------------------------------------


def _edge_functional(n, i, j):
    M = np.zeros((n, n))
    M[i, j] = M[j, i] = 0.5
    return M


def edm_completion_system(fw: Framework) -> ConicSystem:
    """Conic system whose feasible set is the EDM completions of the
    framework's member lengths.  Cables relax to <=, struts to >=."""
    n = fw.n
    b = edge_lengths_sq(fw)
    types = fw.member_types()
    if not fw.is_tensegrity():
        constraints = [_edge_functional(n, i, j) for i, j in fw.graph.edges]
        return ConicSystem(cones.edm(n), constraints, b)
    slack_edges = [e for e, t in enumerate(types) if t != "bar"]
    p = len(slack_edges)
    col = {e: k for k, e in enumerate(slack_edges)}
    constraints = []
    for e, (i, j) in enumerate(fw.graph.edges):
        vec = np.zeros(p)
        if types[e] == "cable":
            vec[col[e]] = 1.0  # d_ij + s = b, s >= 0
        elif types[e] == "strut":
            vec[col[e]] = -1.0  # d_ij - s = b
        constraints.append((_edge_functional(n, i, j), vec))
    return ConicSystem(cones.product(cones.edm(n), cones.orthant(p)), constraints, b)


@dataclass
class StressLevel:
    omega: np.ndarray  # per-edge stress coefficients
    Omega: np.ndarray  # n x n stress matrix (psd, row sums zero)
    rank: int


def reduced_gram(fw: Framework):
    """Gram matrix of the centered configuration in the e-perp coordinates."""
    P = fw.points()
    Pc = P - P.mean(axis=0)
    U = centered_basis(fw.n)
    return U.T @ (Pc @ Pc.T) @ U


def _nullspace_form_inputs(fw: Framework):
    """(Xhat, basis, ineqs): the feasible Grams are Xhat + span(basis),
    stress exposers of cables/struts sign-constrained through ineqs."""
    n = fw.n
    U = centered_basis(n)
    r0 = n - 1
    funs = [U.T @ cones.lindenstrauss_Kstar(_edge_functional(n, i, j)) @ U
            for i, j in fw.graph.edges]
    rows = np.vstack([svec(F) for F in funs])
    basis = [smat(col, r0) for col in nullspace_basis(rows).T]
    ineqs = []
    for e, t in enumerate(fw.member_types()):
        i, j = fw.graph.edges[e]
        H = U.T @ _edge_functional(n, i, j) @ U  # <H, W> = ambient Omega_ij
        if t == "cable":
            ineqs.append((H, -1.0))  # Omega_ij <= 0, i.e. omega_ij >= 0
        elif t == "strut":
            ineqs.append((H, 1.0))
    return reduced_gram(fw), basis, ineqs


def psd_stress_sequence(fw: Framework):
    """PSD stress matrices certifying the minimal face, one per reduction
    step of the nullspace form; returns (levels, final face basis, margins)."""
    Xhat, basis, ineqs = _nullspace_form_inputs(fw)
    exposers, V, margins = nullspace_reduce(Xhat, basis, ineqs)
    U = centered_basis(fw.n)
    levels = []
    for W in exposers:
        Omega = U @ W @ U.T
        Omega = 0.5 * (Omega + Omega.T)
        omega = np.array([-Omega[i, j] for i, j in fw.graph.edges])
        levels.append(StressLevel(omega=omega, Omega=Omega, rank=numeric_rank(W)))
    return levels, V, margins


def framework_sd(fw: Framework):
    """Singularity degree of the framework's completion problem.

    Computed twice: on the distance-matrix image system and in nullspace
    form over the Gram coordinates.  The counts must agree.
    """
    report = facial_reduction(edm_completion_system(fw))
    levels, _, _ = psd_stress_sequence(fw)
    if report.sd != len(levels):
        raise AssertionError(
            f"image-form sd {report.sd} != nullspace-form sd {len(levels)}"
        )
    return report.sd, report, levels


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


@dataclass
class RigidityVerdict:
    infinitesimal: InfinitesimalVerdict
    stress_space_dim: int
    affine_flex_dim: int
    gram_rank: int
    minimal_face_rank: int
    stress_rank_sum: int
    dimensionally_rigid: bool
    universally_rigid_certified: bool
    super_stable: bool
    sd: int
    apriori_bound: int | None
    levels: list = field(default_factory=list)


class CoincidentPointsError(ValueError):
    pass


def rigidity_verdicts(fw: Framework) -> RigidityVerdict:
    if fw.has_coincident_points():
        raise CoincidentPointsError("framework has coincident points")
    inf = infinitesimal_verdict(fw)
    stress_dim = equilibrium_stress_basis(fw).shape[1]
    afd = affine_flex_dim(fw)
    sd, report, levels = framework_sd(fw)
    gram_rank = numeric_rank(reduced_gram(fw))
    face = report.minimal_face
    psd_face = face.parts[0] if hasattr(face, "parts") else face
    stress_rank_sum = sum(lev.rank for lev in levels)
    # dimensional rigidity: rank(Gram) + sum of stress ranks reaches n - 1
    dim_rigid = gram_rank + stress_rank_sum == fw.n - 1
    ur = dim_rigid and afd == 0
    return RigidityVerdict(
        infinitesimal=inf,
        stress_space_dim=stress_dim,
        affine_flex_dim=afd,
        gram_rank=gram_rank,
        minimal_face_rank=psd_face.rank,
        stress_rank_sum=stress_rank_sum,
        dimensionally_rigid=dim_rigid,
        universally_rigid_certified=ur,
        super_stable=ur and sd <= 1,
        sd=sd,
        apriori_bound=apriori_sd_bound(fw),
        levels=levels,
    )


# ---------------------------------------------------------------------------
# combinatorics: Laman, chordality, clique-wise completability
# ---------------------------------------------------------------------------


def _pebble_find(pebbles, out_adj, u, avoid):
    """Free a pebble onto u by reversing a path (DFS), skipping `avoid`."""
    seen = {u}
    stack = [(u, iter(sorted(out_adj[u])))]
    parent = {}
    while stack:
        v, it = stack[-1]
        found = None
        for w in it:
            if w in seen or w in avoid:
                continue
            seen.add(w)
            parent[w] = v
            if pebbles[w] > 0:
                found = w
                break
            stack.append((w, iter(sorted(out_adj[w]))))
            break
        else:
            stack.pop()
            continue
        if found is not None:
            pebbles[found] -= 1
            cur = found
            while cur != u:
                prev = parent[cur]
                out_adj[cur].add(prev)
                out_adj[prev].discard(cur)
                cur = prev
            pebbles[u] += 1
            return True
    return False


def laman_independent_count(gr: Graph):
    """Edges accepted by the (2,3)-pebble game (rank in the rigidity matroid
    of dimension two)."""
    pebbles = [2] * gr.n
    out_adj = [set() for _ in range(gr.n)]
    accepted = 0
    for i, j in gr.edges:
        while pebbles[i] + pebbles[j] < 4:
            if pebbles[i] < 2 and _pebble_find(pebbles, out_adj, i, {j}):
                continue
            if pebbles[j] < 2 and _pebble_find(pebbles, out_adj, j, {i}):
                continue
            break
        if pebbles[i] + pebbles[j] >= 4:
            if pebbles[i] > 0:
                pebbles[i] -= 1
                out_adj[i].add(j)
            else:
                pebbles[j] -= 1
                out_adj[j].add(i)
            accepted += 1
    return accepted


def is_laman(gr: Graph):
    """Minimally generically rigid in the plane: 2n-3 edges, all independent."""
    return gr.m == 2 * gr.n - 3 and laman_independent_count(gr) == gr.m


def laman_sparse(gr: Graph):
    """Every subgraph on k vertices has at most 2k-3 edges (count dropped)."""
    return laman_independent_count(gr) == gr.m


def laman_excess(gr: Graph):
    return gr.m - (2 * gr.n - 3)


def apriori_sd_bound(fw: Framework):
    """Excess-edge upper bound on the singularity degree, when available.

    d=2: |E| - (2n-3) once a spanning Laman subgraph exists (pebble game);
    d=3: |E| - (3n-6) once the rigidity matrix reaches the 3D spanning rank.
    Returns None when no spanning rigid subcount is detected.
    """
    gr = fw.graph
    if fw.d == 2:
        if gr.n >= 2 and laman_independent_count(gr) == 2 * gr.n - 3:
            return gr.m - (2 * gr.n - 3)
        return None
    if fw.d == 3:
        if gr.n >= 3 and numeric_rank(rigidity_matrix(fw)) == 3 * gr.n - 6:
            return gr.m - (3 * gr.n - 6)
        return None
    return None


def is_laman_circuit(gr: Graph):
    """2n-2 edges and every single-edge deletion is Laman."""
    if gr.m != 2 * gr.n - 2:
        return False
    for k in range(gr.m):
        sub = Graph(gr.n, gr.edges[:k] + gr.edges[k + 1 :])
        if not is_laman(sub):
            return False
    return True


def lex_bfs_order(gr: Graph):
    adj = gr.adjacency()
    labels = [[] for _ in range(gr.n)]
    order = []
    remaining = set(range(gr.n))
    while remaining:
        v = max(remaining, key=lambda u: (labels[u], -u))
        order.append(v)
        remaining.discard(v)
        for w in adj[v]:
            if w in remaining:
                labels[w].append(gr.n - len(order))
    return order


def is_chordal(gr: Graph):
    """Lex-BFS order is a perfect elimination order iff the graph is chordal."""
    order = lex_bfs_order(gr)
    pos = {v: k for k, v in enumerate(order)}
    adj = gr.adjacency()
    for v in order:
        earlier = [w for w in adj[v] if pos[w] < pos[v]]
        if not earlier:
            continue
        u = max(earlier, key=lambda w: pos[w])
        rest = set(earlier) - {u}
        if not rest <= adj[u] | {u}:
            return False
    return True


def maximal_cliques_chordal(gr: Graph):
    order = lex_bfs_order(gr)
    pos = {v: k for k, v in enumerate(order)}
    adj = gr.adjacency()
    cliques = []
    for v in order:
        clique = frozenset({v} | {w for w in adj[v] if pos[w] < pos[v]})
        if not any(clique <= c for c in cliques):
            cliques = [c for c in cliques if not c <= clique]
            cliques.append(clique)
    return cliques


def bakonyi_johnson_check(gr: Graph, D, tol=1e-9):
    """Chordal partial distance matrix is completable to an EDM iff every
    maximal-clique principal submatrix is an EDM (its centered Gram is psd)."""
    if not is_chordal(gr):
        raise ValueError("completability by clique checks needs a chordal graph")
    D = np.asarray(D, dtype=float)
    for clique in maximal_cliques_chordal(gr):
        idx = sorted(clique)
        sub = D[np.ix_(idx, idx)]
        G = lindenstrauss_Kdagger(sub)
        lam_min = min(np.linalg.eigvalsh(0.5 * (G + G.T)), default=0.0)
        if lam_min < -tol * max(1.0, float(np.abs(sub).max())):
            return False
    return True


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------


def gen_laman(n, rng):
    """Henneberg type-I growth from a single edge: always Laman."""
    if n < 2:
        raise ValueError("need at least two vertices")
    edges = [(0, 1)] if n >= 2 else []
    for v in range(2, n):
        a, b = rng.choice(v, size=2, replace=False)
        edges.append(tuple(sorted((int(a), v))))
        edges.append(tuple(sorted((int(b), v))))
    return graph(n, edges)


def gen_chordal(n, rng, max_attach=4):
    """Grow by attaching each vertex to a clique subset: always chordal."""
    edges = []
    cliques = [frozenset({0})]
    for v in range(1, n):
        base = cliques[int(rng.integers(len(cliques)))]
        k = int(rng.integers(1, min(len(base), max_attach) + 1))
        subset = rng.choice(sorted(base), size=k, replace=False)
        subset = frozenset(int(x) for x in subset)
        for u in subset:
            edges.append(tuple(sorted((u, v))))
        new_clique = subset | {v}
        cliques = [c for c in cliques if not c <= new_clique]
        cliques.append(new_clique)
    return graph(n, edges)


def gen_maximal_planar(n, rng):
    """Apollonian growth from K4: stacked maximal planar (hence chordal)."""
    if n < 4:
        raise ValueError("need at least four vertices")
    edges = {(i, j) for i in range(4) for j in range(i + 1, 4)}
    faces = [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
    for v in range(4, n):
        fidx = int(rng.integers(len(faces)))
        a, b, c = faces.pop(fidx)
        for u in (a, b, c):
            edges.add(tuple(sorted((u, v))))
        faces += [(a, b, v), (a, c, v), (b, c, v)]
    return graph(n, sorted(edges))


def wheel_graph(k):
    """Hub joined to a k-cycle: the classic family of rigidity circuits."""
    edges = [(0, i) for i in range(1, k + 1)]
    edges += [tuple(sorted((i, i % k + 1))) for i in range(1, k + 1)]
    return graph(k + 1, edges)


def random_generic_config(n, d, rng):
    """Rational points with large random numerators/denominators (generic
    with probability 1 for the algebraic conditions that matter here)."""
    P = []
    for _ in range(n):
        row = []
        for _ in range(d):
            num = int(rng.integers(1, 2**32))
            den = int(rng.integers(1, 2**32))
            sign = -1 if rng.integers(2) else 1
            row.append(Rational(sign * num, den))
        P.append(tuple(row))
    return tuple(P)


def gen_ladder_sdp(n) -> ConicSystem:
    """Worst-case psd system with singularity degree n - 1.

    Constraints: <E_11, X> = 0 and, for 1 < i < n,
    <E_ii + E_{i-1,i+1} + E_{i+1,i-1}, X> = 0.  Each reduction step can only
    zero out one more diagonal entry, so n - 1 steps are needed to reach the
    minimal face span{e_n e_n^T}... intersected down to the zero target of
    the last constraint chain.
    """
    A = [_basis_mat(n, 0, 0)]
    for i in range(1, n - 1):
        M = _basis_mat(n, i, i)
        M = M + _basis_mat(n, i - 1, i + 1) + _basis_mat(n, i + 1, i - 1)
        A.append(M)
    b = np.zeros(len(A))
    return ConicSystem(cones.psd(n), A, b)


def _basis_mat(n, i, j):
    M = np.zeros((n, n))
    M[i, j] = 1.0
    return M
