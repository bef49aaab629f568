"""Command-line front end.

Subcommands: reduce (facial reduction of a conic system), validate
(certificate checking), rigidity (framework/tensegrity analysis, optional
SVG), gen (instance generators).

Exit codes: 0 success, 1 infeasible or failed verdict, 2 parse/validation
error, 3 numerical failure.  Report lines meant for scripting use the stable
prefixes "sd:", "rank:", "verdict:".

Exact mode serializes numbers as strings ("3/7" or decimal text) so
rationals round-trip bit-exactly; float mode uses plain JSON numbers.
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import cones, facial, rigidity
from .facial import (
    CertStep,
    Certificate,
    ConicSystem,
    EngineNumericalError,
    InfeasibleSystemError,
    facial_reduction,
    validate_certificate,
)
from .rigidity import (
    CoincidentPointsError,
    Framework,
    framework,
    gen_chordal,
    gen_ladder_sdp,
    gen_laman,
    gen_maximal_planar,
    graph,
    is_chordal,
    is_laman,
    random_generic_config,
    rigidity_verdicts,
)
from .sdpsolver import SolverFailure

ENGINE_VERSION = "facered 1.0"

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_PARSE = 2
EXIT_NUMERICAL = 3


class ParseError(ValueError):
    pass


# ---------------------------------------------------------------------------
# number and matrix (de)serialization
# ---------------------------------------------------------------------------


def _num_in(x, exact):
    try:
        if exact:
            return Fraction(x) if not isinstance(x, str) else Fraction(x)
        return float(Fraction(x)) if isinstance(x, str) else float(x)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ParseError(f"bad number {x!r}") from exc


def _num_out(x, exact):
    if exact:
        return str(Fraction(x))
    return float(x)


def _mat_in(rows, exact):
    if exact:
        return [[_num_in(x, True) for x in row] for row in rows]
    try:
        return np.asarray([[_num_in(x, False) for x in row] for row in rows])
    except ValueError as exc:
        raise ParseError("ragged matrix") from exc


def _vec_in(xs, exact):
    if exact:
        return [_num_in(x, True) for x in xs]
    return np.asarray([_num_in(x, False) for x in xs])


def _mat_out(M, exact):
    return [[_num_out(x, exact) for x in row] for row in np.asarray(M, dtype=object)]


def _vec_out(v, exact):
    return [_num_out(x, exact) for x in v]


# ---------------------------------------------------------------------------
# problem / framework / certificate files
# ---------------------------------------------------------------------------


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc


def _cone_in(desc):
    try:
        kind = desc["type"]
        if kind == "product":
            return cones.product(*[_cone_in(p) for p in desc["parts"]])
        n = int(desc["n"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad cone description {desc!r}") from exc
    ctor = {"psd": cones.psd, "orthant": cones.orthant, "edm": cones.edm}.get(kind)
    if ctor is None:
        raise ParseError(f"unknown cone type {kind!r}")
    return ctor(n)


def _cone_out(cone):
    if cone.kind == "product":
        return {"type": "product", "parts": [_cone_out(p) for p in cone.parts]}
    return {"type": cone.kind, "n": cone.n}


def parse_problem(doc) -> ConicSystem:
    if not isinstance(doc, dict):
        raise ParseError("problem file must be a JSON object")
    mode = doc.get("mode", "float")
    if mode not in ("float", "exact"):
        raise ParseError(f"unknown mode {mode!r}")
    exact = mode == "exact"
    cone = _cone_in(doc.get("cone", {}))
    try:
        raw = doc["constraints"]
        b = _vec_in(doc["b"], exact)
    except KeyError as exc:
        raise ParseError(f"missing field {exc}") from exc
    constraints = []
    for fun in raw:
        if cone.kind == "orthant":
            constraints.append(_vec_in(fun, exact))
        elif cone.kind == "product":
            if not isinstance(fun, dict) or "matrix" not in fun or "vector" not in fun:
                raise ParseError("product constraints need {'matrix':…, 'vector':…}")
            constraints.append(
                (_mat_in(fun["matrix"], exact), _vec_in(fun["vector"], exact))
            )
        else:
            constraints.append(_mat_in(fun, exact))
    if len(constraints) != len(b):
        raise ParseError("constraint count does not match b")
    _check_shapes(cone, constraints)
    try:
        return ConicSystem(cone, constraints, b, mode=mode)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def _check_shapes(cone, constraints):
    for fun in constraints:
        if cone.kind == "orthant" and len(fun) != cone.n:
            raise ParseError("constraint vector length mismatch")
        if cone.kind in ("psd", "edm"):
            M = np.asarray(fun, dtype=float)
            if M.shape != (cone.n, cone.n):
                raise ParseError("constraint matrix order mismatch")
            if np.abs(M - M.T).max(initial=0.0) > 1e-12 * max(1.0, np.abs(M).max(initial=0.0)):
                raise ParseError("constraint matrix not symmetric")


def serialize_problem(sys: ConicSystem):
    exact = sys.mode == "exact"
    out = {"cone": _cone_out(sys.cone), "mode": sys.mode, "b": _vec_out(sys.b, exact)}
    funs = []
    for fun in sys.constraints:
        if sys.cone.kind == "orthant":
            funs.append(_vec_out(fun, exact))
        elif sys.cone.kind == "product":
            funs.append(
                {"matrix": _mat_out(fun[0], exact), "vector": _vec_out(fun[1], exact)}
            )
        else:
            funs.append(_mat_out(fun, exact))
    out["constraints"] = funs
    return out


def parse_framework(doc) -> Framework:
    if not isinstance(doc, dict):
        raise ParseError("framework file must be a JSON object")
    try:
        d = int(doc["dim"])
        verts = doc["vertices"]
        raw_edges = doc["edges"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad framework file: {exc}") from exc
    if d not in (2, 3):
        raise ParseError("dim must be 2 or 3")
    P = []
    for row in verts:
        if len(row) != d:
            raise ParseError("vertex coordinate count mismatch")
        P.append(tuple(Fraction(x) if isinstance(x, str) else float(x) for x in row))
    edges, kinds = [], []
    for e in raw_edges:
        if len(e) not in (2, 3):
            raise ParseError(f"bad edge {e!r}")
        i, j = int(e[0]), int(e[1])
        kind = e[2] if len(e) == 3 else "bar"
        if kind not in ("bar", "cable", "strut"):
            raise ParseError(f"bad member kind {kind!r}")
        edges.append((i, j))
        kinds.append(kind)
    order = sorted(range(len(edges)), key=lambda k: tuple(sorted(edges[k])))
    try:
        gr = graph(len(P), edges)
        return framework(gr, P, tuple(kinds[k] for k in order))
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def serialize_framework(fw: Framework, seed=None):
    def coord(x):
        return str(x) if isinstance(x, Fraction) else float(x)

    doc = {
        "dim": fw.d,
        "vertices": [[coord(x) for x in row] for row in fw.P],
        "edges": [
            [i, j, t] for (i, j), t in zip(fw.graph.edges, fw.member_types())
        ],
    }
    if seed is not None:
        doc["provenance"] = {"seed": seed}
    return doc


def _face_out(face, exact=False):
    if hasattr(face, "support"):
        return {"support": sorted(face.support), "n": face.n}
    if hasattr(face, "parts"):
        return {"parts": [_face_out(p, exact) for p in face.parts]}
    return {"V": _mat_out(face.V, False), "n": face.n}


def _face_in(doc):
    if "support" in doc:
        return cones.OrthantFace(int(doc["n"]), frozenset(int(i) for i in doc["support"]))
    if "parts" in doc:
        return cones.ProductFace(tuple(_face_in(p) for p in doc["parts"]))
    V = np.asarray(_mat_in(doc["V"], False), dtype=float)
    if V.size == 0:
        V = V.reshape(int(doc["n"]), 0)
    return cones.PsdFace(int(doc["n"]), V)


def _z_out(Z, exact):
    if isinstance(Z, tuple):
        return {"matrix": _mat_out(Z[0], False), "vector": _vec_out(Z[1], False)}
    arr = np.asarray(Z, dtype=object)
    if arr.ndim == 1 or isinstance(Z, list):
        return {"vector": _vec_out(Z, exact)}
    return {"matrix": _mat_out(Z, exact)}


def _z_in(doc, cone, exact):
    if "matrix" in doc and "vector" in doc:
        return (
            np.asarray(_mat_in(doc["matrix"], False), dtype=float),
            np.asarray(_vec_in(doc["vector"], False), dtype=float),
        )
    if "matrix" in doc:
        return np.asarray(_mat_in(doc["matrix"], False), dtype=float)
    return _vec_in(doc["vector"], exact)


def serialize_certificate(report, exact):
    steps = []
    for step in report.certificate.steps:
        steps.append(
            {
                "v": _vec_out(step.v, exact),
                "Z": _z_out(step.Z, exact),
                "face_basis": _face_out(step.face, exact),
            }
        )
    return {
        "engine": ENGINE_VERSION,
        "tolerances": {k: str(v) for k, v in report.tolerances.items()},
        "steps": steps,
    }


def parse_certificate(doc, sys: ConicSystem) -> Certificate:
    if not isinstance(doc, dict) or "steps" not in doc:
        raise ParseError("certificate file needs a 'steps' list")
    exact = sys.mode == "exact"
    steps = []
    for raw in doc["steps"]:
        try:
            steps.append(
                CertStep(
                    v=_vec_in(raw["v"], exact),
                    Z=_z_in(raw["Z"], sys.cone, exact),
                    face=_face_in(raw["face_basis"]),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ParseError(f"bad certificate step: {exc}") from exc
    return Certificate(steps)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _describe_face(face):
    if hasattr(face, "support"):
        return f"orthant support {sorted(face.support)} of {face.n}"
    if hasattr(face, "parts"):
        return " x ".join(_describe_face(p) for p in face.parts)
    return f"psd rank {face.rank} of order {face.n}"


def _step_rank(step):
    Z = step.Z
    if isinstance(Z, tuple):
        from .numerics import numeric_rank

        return numeric_rank(Z[0])
    if isinstance(Z, list):
        return sum(1 for x in Z if x != 0)
    from .numerics import numeric_rank

    return numeric_rank(Z)


def print_reduce_report(report, out=sys.stdout):
    print(f"sd: {report.sd}", file=out)
    print(f"verdict: strictly_feasible {str(report.strictly_feasible).lower()}", file=out)
    print(f"verdict: exactness {report.exactness}", file=out)
    print(f"face: {_describe_face(report.minimal_face)}", file=out)
    for k, step in enumerate(report.certificate.steps, 1):
        print(f"rank: step {k} exposer rank {_step_rank(step)}", file=out)


# ---------------------------------------------------------------------------
# SVG emission
# ---------------------------------------------------------------------------


def framework_svg(fw: Framework, levels=()):
    """Flat SVG: bars solid, cables dashed, struts doubled; edge color by
    the sign of the first stress level (red positive, blue negative)."""
    P = fw.points()[:, :2]
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    span = max(float((hi - lo).max()), 1e-9)
    size = 400.0
    pad = 40.0

    def xy(p):
        q = (p - lo) / span * (size - 2 * pad) + pad
        return float(q[0]), float(size - q[1])

    omega = levels[0].omega if levels else np.zeros(fw.graph.m)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{size:.0f}" height="{size:.0f}" '
        f'viewBox="0 0 {size:.0f} {size:.0f}">'
    ]
    for e, (i, j) in enumerate(fw.graph.edges):
        x1, y1 = xy(P[i])
        x2, y2 = xy(P[j])
        w = float(omega[e]) if e < len(omega) else 0.0
        color = "#c0392b" if w > 1e-9 else ("#2c5aa0" if w < -1e-9 else "#777777")
        kind = fw.member_types()[e]
        dash = ' stroke-dasharray="8 5"' if kind == "cable" else ""
        if kind == "strut":
            dx, dy = y2 - y1, x1 - x2
            norm = max((dx * dx + dy * dy) ** 0.5, 1e-9)
            ox, oy = 2.5 * dx / norm, 2.5 * dy / norm
            for s in (-1, 1):
                parts.append(
                    f'<line x1="{x1 + s * ox:.2f}" y1="{y1 + s * oy:.2f}" '
                    f'x2="{x2 + s * ox:.2f}" y2="{y2 + s * oy:.2f}" '
                    f'stroke="{color}" stroke-width="2"/>'
                )
        else:
            parts.append(
                f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" '
                f'stroke="{color}" stroke-width="3"{dash}/>'
            )
    for k, p in enumerate(P):
        x, y = xy(p)
        parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="6" fill="#222222"/>')
        parts.append(
            f'<text x="{x + 9:.2f}" y="{y - 9:.2f}" font-size="14" '
            f'font-family="sans-serif">{k}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_reduce(args):
    path = Path(args.problem)
    if path.is_dir():
        return _reduce_batch(path, args)
    sys_ = parse_problem(_load_json(path))
    if args.mode:
        sys_ = ConicSystem(sys_.cone, sys_.constraints, sys_.b, mode=args.mode)
    kwargs = {}
    if args.tol is not None and sys_.mode == "float":
        kwargs["tol_aux"] = args.tol
    report = facial_reduction(sys_, **kwargs)
    print_reduce_report(report)
    if args.certificate_out:
        with open(args.certificate_out, "w") as fh:
            json.dump(serialize_certificate(report, sys_.mode == "exact"), fh, indent=1)
    return EXIT_OK


def _reduce_one(path_str):
    try:
        report = facial_reduction(parse_problem(_load_json(path_str)))
        return path_str, EXIT_OK, f"sd: {report.sd}"
    except InfeasibleSystemError:
        return path_str, EXIT_INFEASIBLE, "verdict: infeasible"
    except ParseError as exc:
        return path_str, EXIT_PARSE, f"error: {exc}"
    except (EngineNumericalError, SolverFailure) as exc:
        return path_str, EXIT_NUMERICAL, f"error: {exc}"


def _reduce_batch(directory, args):
    paths = sorted(str(p) for p in directory.glob("*.json"))
    jobs = max(1, args.jobs or 1)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_reduce_one, paths))
    else:
        results = [_reduce_one(p) for p in paths]
    worst = EXIT_OK
    for path_str, code, line in results:
        print(f"{path_str}: {line}")
        worst = max(worst, code)
    return worst


def cmd_validate(args):
    sys_ = parse_problem(_load_json(args.problem))
    cert = parse_certificate(_load_json(args.certificate), sys_)
    ok, report = validate_certificate(sys_, cert)
    for entry in report:
        tag = f"step {entry['step']}" if "step" in entry else f"witness {entry['witness']}"
        detail = " ".join(
            f"{k}={str(v).lower()}" for k, v in entry.items() if k not in ("step", "witness")
        )
        print(f"verdict: {tag} {detail}")
    print(f"verdict: certificate {'valid' if ok else 'invalid'}")
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_rigidity(args):
    fw = parse_framework(_load_json(args.framework))
    try:
        v = rigidity_verdicts(fw)
    except CoincidentPointsError as exc:
        raise ParseError(str(exc)) from exc
    print(f"sd: {v.sd}")
    print(f"rank: gram {v.gram_rank}")
    for k, lev in enumerate(v.levels, 1):
        print(f"rank: stress level {k} rank {lev.rank}")
    print(f"rank: stress sum {v.stress_rank_sum}")
    print(f"verdict: infinitesimally_rigid {str(v.infinitesimal.rigid).lower()}")
    print(f"verdict: independent {str(v.infinitesimal.independent).lower()}")
    print(f"verdict: laman {str(is_laman(fw.graph)).lower()}")
    print(f"verdict: chordal {str(is_chordal(fw.graph)).lower()}")
    bound = "none" if v.apriori_bound is None else str(v.apriori_bound)
    print(f"verdict: apriori_sd_bound {bound}")
    print(f"verdict: dimensionally_rigid {str(v.dimensionally_rigid).lower()}")
    print(f"verdict: affine_flex_dim {v.affine_flex_dim}")
    print(f"verdict: universally_rigid {str(v.universally_rigid_certified).lower()}")
    print(f"verdict: super_stable {str(v.super_stable).lower()}")
    if args.svg_out:
        with open(args.svg_out, "w") as fh:
            fh.write(framework_svg(fw, v.levels))
    return EXIT_OK


def cmd_gen(args):
    if args.n > 64:
        raise ParseError("n must be at most 64")
    rng = np.random.default_rng(args.seed)
    if args.kind == "ladder":
        if args.n < 2:
            raise ParseError("ladder needs n >= 2")
        doc = serialize_problem(gen_ladder_sdp(args.n))
    else:
        if args.kind == "laman":
            gr = gen_laman(args.n, rng)
            d = 2
        elif args.kind == "chordal":
            gr = gen_chordal(args.n, rng)
            d = 2
        elif args.kind == "planar":
            gr = gen_maximal_planar(args.n, rng)
            d = 3
        else:
            raise ParseError(f"unknown generator {args.kind!r}")
        if args.dim:
            d = args.dim
        fw = framework(gr, random_generic_config(gr.n, d, rng))
        doc = serialize_framework(fw, seed=args.seed)
    text = json.dumps(doc, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="facered",
        description="Facial reduction, singularity degree, and rigidity analysis.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", help="facially reduce a conic system")
    p.add_argument("problem", help="problem JSON file or directory of them")
    p.add_argument("--mode", choices=["float", "exact"])
    p.add_argument("--tol", type=float, help="auxiliary-problem tolerance")
    p.add_argument("--certificate-out")
    p.add_argument("--jobs", type=int, default=1, help="parallelism for directories")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("validate", help="check a certificate against its problem")
    p.add_argument("problem")
    p.add_argument("certificate")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("rigidity", help="analyze a framework or tensegrity")
    p.add_argument("framework")
    p.add_argument("--svg-out")
    p.set_defaults(func=cmd_rigidity)

    p = sub.add_parser("gen", help="generate an instance file")
    p.add_argument("kind", choices=["laman", "chordal", "planar", "ladder"])
    p.add_argument("n", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dim", type=int, choices=[2, 3])
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)
    return ap


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleSystemError as exc:
        print(f"verdict: infeasible ({exc})", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (EngineNumericalError, SolverFailure) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
