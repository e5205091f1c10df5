"""Command-line front end.

Every subcommand reads one problem per JSON file and prints JSON (or CSV
with ``--format csv``) on stdout.  Exit codes: 0 success, 1 domain error
(JSON diagnostics on stderr), 2 usage error.  Floats are printed with 17
significant digits and lists are sorted, so identical inputs give
byte-identical output.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .chardet import (
    char_det_scaled,
    char_det_via_j,
    separation_check,
    special_lattice,
    unperturbed_lattice,
)
from .classify import canonical_form, classify, peculiar_pair_verdict
from .errors import BVPError, ValidationError
from .integrate import QuadGrid, SampledFunction, fundamental_matrix
from .model import ProblemSpec, compute_j_invariants, ensure_valid, match_quasi_periodic, match_special, validate
from .probe import (
    adjoint_problem,
    build_bundle,
    bump,
    completeness_defect,
    default_guesses,
    eigen_residuals,
    gram_condition,
    locate_eigenvalues,
    second_component_residual,
)
from .resolvent import apply_resolvent, kernel_rank, one_dim_form, rank_resolvent_diff
from .spectrum import Rect, find_eigenvalues

__all__ = ["main", "render_json", "build_parser"]


# --------------------------------------------------------------------------
# deterministic output


def _fmt(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = format(x, ".17g")
    return "0" if s == "-0" else s


def render_json(obj, indent: int = 0) -> str:
    """JSON text with floats at 17 significant digits and complex as ``[re, im]``."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return render_json([float(obj.real), float(obj.imag)], indent)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {render_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(isinstance(v, (int, float, bool, np.integer, np.floating)) for v in seq):
            return "[" + ", ".join(render_json(v) for v in seq) + "]"
        return "[\n" + ",\n".join(pad + render_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot render {type(obj).__name__}")


def _csv(header: list[str], rows: list[list]) -> str:
    out = [",".join(header)]
    for r in rows:
        out.append(",".join(_fmt(float(v)) if isinstance(v, (float, int, np.floating, np.integer))
                            and not isinstance(v, bool) else str(v).lower() if isinstance(v, bool) else str(v)
                            for v in r))
    return "\n".join(out) + "\n"


def _key(z: complex, i: int = 0) -> tuple[float, float, int]:
    return (round(z.real, 12), round(z.imag, 12), i)


# --------------------------------------------------------------------------
# argument helpers


def _complex_arg(text: str) -> complex:
    try:
        parts = [float(t) for t in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected re,im but got {text!r}") from exc
    if len(parts) == 1:
        parts.append(0.0)
    if len(parts) != 2 or not all(math.isfinite(v) for v in parts):
        raise argparse.ArgumentTypeError(f"expected re,im but got {text!r}")
    return complex(parts[0], parts[1])


def _rect_arg(text: str) -> Rect:
    try:
        return Rect.parse(text)
    except (ValueError, BVPError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not (v > 0 and math.isfinite(v)):
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load(path: str) -> ProblemSpec:
    try:
        obj = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path} must hold a JSON object")
    return ProblemSpec.from_json(obj)


def _load_valid(path: str) -> ProblemSpec:
    return ensure_valid(_load(path))


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> tuple[object, str | None]:
    p = _load(args.problem)
    diags = validate(p)
    if diags:
        raise ValidationError("; ".join(d.code for d in diags), diagnostics=diags)
    return {"valid": True, "n": p.n}, None


def cmd_classify(args):
    p = _load_valid(args.problem)
    return classify(p, args.small_q_threshold).to_json(), None


def cmd_det(args):
    p = _load_valid(args.problem)
    lam = args.lam
    det, ddet, h = char_det_scaled(p, [lam], derivative=True)
    out = {
        "lambda": lam,
        "delta": complex(det[0]),
        "delta_prime": complex(ddet[0]),
        "hadamard_scale": float(h[0]),
    }
    if p.n == 2:
        out["delta_via_j"] = char_det_via_j(p, fundamental_matrix(p, lam))
        out["j_invariants"] = compute_j_invariants(p.bc).as_dict()
    csv = _csv(["re", "im", "delta_re", "delta_im"], [[lam.real, lam.imag, det[0].real, det[0].imag]])
    return out, csv


def cmd_lattice(args):
    p = _load_valid(args.problem)
    if p.n != 2:
        raise ValidationError("lattices are defined for n = 2")
    qp = match_quasi_periodic(p.bc)
    out: dict = {}
    if qp is not None:
        lat = unperturbed_lattice(p.B, qp[0], qp[1], args.nmax)
        out["kind"] = "quasi_periodic"
        if p.B.essential_non_dirac:
            sep = separation_check(p.B, qp[0], qp[1])
            out["separated"] = sep.separated
            out["collision"] = list(sep.collision) if sep.collision else None
    else:
        sp = match_special(p.bc)
        if sp is None:
            raise ValidationError("lattice needs quasi-periodic or special boundary conditions")
        lat = special_lattice(p.B, sp[0], sp[1], args.nmax)
        out["kind"] = "special"
    entries = sorted(lat.entries, key=lambda e: _key(e[2], 10 * e[0] + e[1]))
    out["points"] = [{"n": n, "j": j, "lambda": lam} for n, j, lam in entries]
    csv = _csv(["n", "j", "re", "im"], [[n, j, lam.real, lam.imag] for n, j, lam in entries])
    return out, csv


def cmd_spectrum(args):
    p = _load_valid(args.problem)
    if args.rect is None:
        raise ValidationError("spectrum needs --rect x0,x1,y0,y1")
    ev = find_eigenvalues(p, args.rect, args.tol)
    items = sorted(ev.items, key=lambda e: _key(e.lam))
    rows = [{"lambda": e.lam, "multiplicity": e.multiplicity, "refined": e.refined, "residual": e.residual}
            for e in items]
    out = {
        "rect": list(ev.search_rect.as_tuple()) if ev.search_rect else None,
        "count": ev.count,
        "guard": ev.guard,
        "tol": ev.tol,
        "eigenvalues": rows,
    }
    csv = _csv(["re", "im", "multiplicity", "refined", "residual"],
               [[e.lam.real, e.lam.imag, e.multiplicity, e.refined, e.residual] for e in items])
    return out, csv


def cmd_rank_diff(args):
    pA, pB = _load_valid(args.problem), _load_valid(args.other)
    if pA.n != pB.n:
        raise ValidationError("the two problems have different sizes")
    out: dict = {"rank": rank_resolvent_diff(pA.bc, pB.bc)}
    if pA.n == 2:
        val, scale = one_dim_form(pA.bc, pB.bc)
        out["one_dim_form"] = val
        out["one_dim_scale"] = scale
    if args.lam is not None:
        if not (pA.B == pB.B and pA.Q == pB.Q):
            raise ValidationError("the two problems must share B and Q")
        out["lambda"] = args.lam
        out["kernel_rank"] = kernel_rank(pA, pB, args.lam)
    return out, _csv(["rank"], [[out["rank"]]])


def _random_rhs(grid: QuadGrid, n: int, seed: int) -> SampledFunction:
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal((4, n)) + 1j * rng.standard_normal((4, n))
    vals = np.polynomial.polynomial.polyval(grid.x, coef).T
    return SampledFunction(grid, vals)


def cmd_resolve(args):
    p = _load_valid(args.problem)
    if args.lam is None:
        raise ValidationError("resolve needs --lambda re,im")
    grid = QuadGrid.for_problem(p)
    if args.rhs:
        try:
            text = Path(args.rhs).read_text()
        except OSError as exc:
            raise ValidationError(f"cannot read {args.rhs}: {exc.strerror}") from exc
        f = SampledFunction.from_csv(text, grid)
    else:
        f = _random_rhs(grid, p.n, args.seed)
    y = apply_resolvent(p, args.lam, f)
    out = {
        "lambda": args.lam,
        "x": grid.x,
        "y": [[complex(v) for v in row] for row in y.values],
        "norm": y.norm(),
    }
    return out, y.to_csv()


def cmd_peculiar(args):
    pA, pB = _load_valid(args.problem), _load_valid(args.other)
    v = peculiar_pair_verdict(pA, pB)
    return v.to_json(), _csv(["is_peculiar", "rank_one", "resolvent_rank"],
                             [[v.is_peculiar, v.rank_one, v.resolvent_rank]])


def cmd_probe(args):
    p = _load_valid(args.problem)
    if p.n != 2:
        raise ValidationError("probe is defined for n = 2")
    num = args.num_eig
    guesses = default_guesses(p, num)
    if guesses is None:
        raise ValidationError("probe needs quasi-periodic or special boundary conditions")
    target = p
    if args.adjoint:
        # adjoint eigenvalues are the conjugates of the direct ones
        target = adjoint_problem(p)
        guesses = np.conj(guesses)
    lams = locate_eigenvalues(target, num, guesses=guesses, tol=args.tol)
    bundle = build_bundle(target, lams)
    res = second_component_residual(bundle, args.a)
    bres, cres = eigen_residuals(target, bundle)
    Ns = sorted({N for N in (1, 5, 10, 20, 40, len(bundle)) if N <= len(bundle)})
    w = bump(bundle.grid, args.a)
    defect = completeness_defect(bundle, w, Ns, test_id=f"bump on [{args.a:.17g}, 1], second component")
    gram = [[N, gram_condition(bundle, N)] for N in Ns]
    out = {
        "adjoint": bool(args.adjoint),
        "a": args.a,
        "canonical_form": canonical_form(target.bc).to_json(),
        "eigenvalues": list(bundle.eigenvalues),
        "second_component_residuals": res,
        "boundary_residuals": bres,
        "collocation_residuals": cres,
        "defect": defect.to_json(),
        "gram_condition": gram,
    }
    rows = [[i, lam.real, lam.imag, r, b] for i, (lam, r, b) in enumerate(zip(bundle.eigenvalues, res, bres))]
    return out, _csv(["index", "re", "im", "f2_residual", "bc_residual"], rows)


# --------------------------------------------------------------------------
# parser


_FORMAT_HELP = (
    "Problem files are JSON objects with keys n, B (list of [re, im]), C and D "
    "(n x n lists of [re, im]), optional Q ({Q12, Q21} expressions for n = 2 or "
    "{entries}) and optional solver settings."
)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="bvpspec",
        description="Spectral numerics for -i B^-1 y' + Q y = lambda y on [0, 1] with C y(0) + D y(1) = 0. "
        + _FORMAT_HELP,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json",
                        help="output format (CSV uses '.' as decimal separator)")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized inputs (default 0)")
    sub = ap.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, fn, help_text, pair=False):
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text + " " + _FORMAT_HELP)
        sp.add_argument("problem", help="problem JSON file")
        if pair:
            sp.add_argument("other", help="second problem JSON file (same B and Q)")
        sp.set_defaults(func=fn)
        return sp

    add("validate", cmd_validate, "Check a problem file; exit 1 with diagnostics if invalid.")
    sp = add("classify", cmd_classify, "Regularity, canonical form, normality and similarity verdicts.")
    sp.add_argument("--small-q-threshold", type=_positive, default=None,
                    help="user bound on sup|Q| (sup norm on [0,1]) below which Q counts as small")
    sp = add("det", cmd_det, "Characteristic determinant Delta(lambda) and its derivative.")
    sp.add_argument("--lambda", dest="lam", type=_complex_arg, required=True,
                    help="spectral parameter as re,im")
    sp = add("lattice", cmd_lattice, "Zeros of the determinant for Q = 0 (quasi-periodic or special conditions).")
    sp.add_argument("--nmax", type=int, default=10, help="index range -nmax..nmax per family (default 10)")
    sp = add("spectrum", cmd_spectrum, "Eigenvalues in a rectangle by the argument principle and Newton refinement.")
    sp.add_argument("--rect", type=_rect_arg, help="search rectangle x0,x1,y0,y1 in the lambda plane")
    sp.add_argument("--tol", type=_positive, default=1e-10,
                    help="relative tolerance for refined eigenvalues (default 1e-10)")
    sp = add("rank-diff", cmd_rank_diff, "Rank of the resolvent difference of two problems.", pair=True)
    sp.add_argument("--lambda", dest="lam", type=_complex_arg, default=None,
                    help="also compute the SVD rank of the discretized difference at re,im")
    sp = add("resolve", cmd_resolve, "Solve (L - lambda) y = f; f from --rhs CSV or random from --seed.")
    sp.add_argument("--lambda", dest="lam", type=_complex_arg, help="spectral parameter as re,im")
    sp.add_argument("--rhs", help="CSV with columns x, re/im per component (interpolated to the grid)")
    add("peculiar", cmd_peculiar, "Peculiar-pair verdict for two problems on the same system.", pair=True)
    sp = add("probe", cmd_probe, "Eigenfunction bundle: second-component residuals, completeness defect, Gram condition.")
    sp.add_argument("--a", type=float, default=0.5, help="left end of the test interval [a, 1], 0 <= a < 1")
    sp.add_argument("--num-eig", type=_positive_int, default=40, help="number of eigenfunctions (default 40)")
    sp.add_argument("--adjoint", action="store_true", help="use the adjoint problem")
    sp.add_argument("--tol", type=_positive, default=1e-10, help="eigenvalue tolerance (default 1e-10)")
    return ap


_VALUE_FLAGS = ("--rect", "--lambda", "--a")


def _glue_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--rect -10,10,...`` into ``--rect=-10,10,...`` so argparse does not read an option."""
    out: list[str] = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1][1:2].isdigit():
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        out, csv = args.func(args)
    except BVPError as exc:
        sys.stderr.write(render_json(exc.to_json()) + "\n")
        return 1
    if args.format == "csv" and csv is not None:
        sys.stdout.write(csv)
    else:
        sys.stdout.write(render_json(out) + "\n")
    return 0
