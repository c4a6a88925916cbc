"""Command-line front end.

Exit status: 0 on success or a passing check, 2 when a symmetry check
fails, 1 on any error. Data goes to stdout (or ``--out``); progress and
errors go to stderr.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import builders, cellio
from .errors import CellFormatError, CellHomError
from .homog import (
    check_macro_symmetry,
    classify_macro,
    effective_tensor,
    effective_transport,
    thread_count,
)
from .microsym import AffineSymmetry, check_micro_symmetry, scan_symmetries
from .solver import SolverOptions
from .tensor import ElasticityTensor, UnimodularMap, generator_catalog

EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _progress(msg):
    print(msg, file=sys.stderr, flush=True)


def _param(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _read_json(path):
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise CellFormatError(f"{path}: invalid JSON ({exc})") from None


def _options(args):
    return SolverOptions(cg_tol=args.cg_tol, max_iter=args.max_iter, keep_grad=False)


def _threads(args):
    return 1 if args.deterministic else thread_count()


def _matrix_csv(rows):
    return "".join(",".join("%.17g" % v for v in row) + "\n" for row in rows)


def _emit(args, payload, matrix=None):
    if args.format == "csv":
        if matrix is not None:
            text = _matrix_csv(matrix)
        else:
            text = "".join(f"{k},{_csv_value(v)}\n" for k, v in payload.items())
    else:
        text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _csv_value(v):
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (dict, list)):
        return json.dumps(v, separators=(",", ":"))
    return str(v).lower() if isinstance(v, bool) else str(v)


def _load_H(path, dim=None):
    obj = _read_json(path)
    if isinstance(obj, dict) and "H" in obj:
        obj = obj["H"]
    H = UnimodularMap(np.array(obj, dtype=float))
    return H


def _catalog_candidates(C0, tol):
    out = []
    for name, H in generator_catalog(C0.dim).items():
        r, ok = check_macro_symmetry(C0, H, tol)
        out.append({"name": name, "H": H.matrix.tolist(), "residual": r, "pass": bool(ok)})
    return out


def _tensor_from_input(path, args):
    """C0 from a report file, or by homogenizing a cell config."""
    obj = _read_json(path)
    if isinstance(obj, dict) and "C0" in obj:
        return ElasticityTensor.from_dict(obj["C0"])
    if isinstance(obj, dict) and "mandel" in obj:
        return ElasticityTensor.from_dict(obj)
    cell = cellio.cell_from_config(obj, os.path.dirname(os.path.abspath(path)))
    _progress(f"homogenizing {path} (grid {'x'.join(map(str, cell.grid))})")
    return effective_tensor(cell, _options(args), threads=_threads(args)).C0


# ---------------------------------------------------------------- commands


def cmd_build_example(args):
    params = dict(args.param or [])
    cell = builders.build_example(args.name, args.n, **params)
    prefix = args.out or args.name
    cfg, vox = cellio.save_cell(cell, prefix)
    _progress(f"built {args.name} on grid {'x'.join(map(str, cell.grid))}")
    sys.stdout.write(json.dumps({"config": cfg, "voxels": vox}) + "\n")
    return EXIT_OK


def cmd_homogenize(args):
    cell = cellio.load_cell(args.cell)
    _progress(f"homogenizing {args.cell} (grid {'x'.join(map(str, cell.grid))}, "
              f"{len(cell.materials)} materials)")
    report = effective_tensor(cell, _options(args), threads=_threads(args))
    for s in report.solves:
        _progress(f"  case {s.case}: {s.iterations} iterations, residual {s.residual:.3e}")
    cls = classify_macro(report, args.tol)
    report.symmetry = {"candidates": _catalog_candidates(report.C0, args.tol), "class": cls.name}
    _emit(args, report.to_dict(), report.C0.mandel)
    return EXIT_OK


def cmd_check_micro(args):
    cell = cellio.load_cell(args.cell)
    if args.catalog:
        found = scan_symmetries(cell, args.tol)
        payload = {
            "candidates": [
                {"name": c.name, **c.h.to_dict(), "status": c.status,
                 "residual": None if c.status == "incompatible" else c.residual}
                for c in found
            ]
        }
        _emit(args, payload)
        return EXIT_OK
    if not args.h:
        raise CellHomError("check-micro needs --h FILE or --catalog")
    h = AffineSymmetry.from_dict(_read_json(args.h))
    rep = check_micro_symmetry(cell, h, args.tol)
    _emit(args, rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_check_macro(args):
    C0 = _tensor_from_input(args.input, args)
    if args.catalog:
        cands = _catalog_candidates(C0, args.tol)
        _emit(args, {"candidates": cands})
        return EXIT_OK
    if not args.H:
        raise CellHomError("check-macro needs --H FILE or --catalog")
    r, ok = check_macro_symmetry(C0, _load_H(args.H), args.tol)
    _emit(args, {"residual": r, "pass": bool(ok)})
    return EXIT_OK if ok else EXIT_FAIL


def cmd_classify(args):
    C0 = _tensor_from_input(args.input, args)
    cls = classify_macro(C0, args.tol)
    _emit(args, cls.to_dict())
    return EXIT_OK


def cmd_transport(args):
    cell = cellio.load_cell(args.cell)
    _progress(f"transport on {args.cell} (grid {'x'.join(map(str, cell.grid))})")
    rep = effective_transport(cell, _options(args), threads=_threads(args))
    _emit(args, rep.to_dict(), rep.M0)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser():
    p = argparse.ArgumentParser(prog="cellhom", description="Periodic homogenization and symmetry checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, solver=True):
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--tol", type=float, default=1e-8, help="pass threshold for residuals")
        if solver:
            sp.add_argument("--cg-tol", type=float, default=1e-10)
            sp.add_argument("--max-iter", type=int, default=None)
            sp.add_argument("--deterministic", action="store_true",
                            help="solve load cases serially (ignores CELLHOM_THREADS)")

    b = sub.add_parser("build-example", help="write an example cell (config + voxel file)")
    b.add_argument("name", choices=sorted(builders.EXAMPLES))
    b.add_argument("--n", type=int, default=None, help="grid resolution")
    b.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE",
                   help="builder parameter; VALUE is parsed as JSON when possible")
    b.add_argument("--out", help="output prefix (default: the example name)")
    b.set_defaults(func=cmd_build_example)

    h = sub.add_parser("homogenize", help="effective elasticity tensor of a cell")
    h.add_argument("cell")
    common(h)
    h.set_defaults(func=cmd_homogenize)

    m = sub.add_parser("check-micro", help="check an affine symmetry of a cell")
    m.add_argument("cell")
    m.add_argument("--h", help="AffineSymmetry JSON file")
    m.add_argument("--catalog", action="store_true", help="scan the built-in candidate catalog")
    common(m, solver=False)
    m.set_defaults(func=cmd_check_micro, tol=1e-12)

    c = sub.add_parser("check-macro", help="check a material symmetry of C0")
    c.add_argument("input", help="report JSON, tensor JSON or cell config")
    c.add_argument("--H", help="JSON file with a matrix or an object with key 'H'")
    c.add_argument("--catalog", action="store_true", help="test every catalog generator")
    common(c)
    c.set_defaults(func=cmd_check_macro)

    k = sub.add_parser("classify", help="symmetry class of C0")
    k.add_argument("input", help="report JSON, tensor JSON or cell config")
    common(k)
    k.set_defaults(func=cmd_classify)

    t = sub.add_parser("transport", help="effective mobility of a cell")
    t.add_argument("cell")
    common(t)
    t.set_defaults(func=cmd_transport)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CellHomError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error[invalid-input]: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
