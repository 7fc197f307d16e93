"""Command-line driver: ``holojet <command> SCENE [options]``.

Human-readable text goes to stdout; ``--out FILE`` writes the JSON report.
Reports are written with sorted keys and carry the engine version,
tolerances and seed, so identical inputs give byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

import numpy as np

from . import __version__
from ._backend import NAME as BACKEND
from .connection import flow_domain_guard, validate_bracket_preserving, validate_right_inverse
from .flow import FlowError
from .geometry import involutivity_check, sample_points
from .holonomy import hierarchy_check, holonomy_equivalent
from .invariants import NonAffineConnectionError, has_enough_conservation_laws, invariant_fibre
from .lexer import ParseError
from .multiindex import JetLayout
from .prolong import ExpressionTooLargeError, format_jetfield, prolong, vertical_prolong
from .scene import Scene, load_scene
from .symexpr import ExprError, to_string
from .transport import JetPoint, jet_of_section, transport_ode

__all__ = ["main", "build_parser", "run"]


PROBE_TIME = 2.0


class CliError(Exception):
    pass


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple[str, str]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected two path names separated by a comma")
    return parts[0], parts[1]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("scene", help="scene file, or the name of a shipped scene")
    common.add_argument("--strict", action="store_true", help="treat validator failures as errors")
    common.add_argument("--tol", type=float, default=1e-5, help="comparison tolerance (default 1e-5)")
    common.add_argument("--ode-tol", type=float, default=1e-9, help="integrator tolerance (default 1e-9)")
    common.add_argument("--seed", type=int, default=0, help="random seed for samples and probes")
    common.add_argument("--out", help="write the JSON report here")

    ap = argparse.ArgumentParser(prog="holojet", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"holojet {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sub.add_parser("validate", parents=[common], help="geometry and connection checks")

    p = sub.add_parser("prolong", parents=[common], help="symbolic prolongation of a lifted generator")
    p.add_argument("--field", required=True, help="generator name")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--vertical", action="store_true", help="vertical prolongation instead")

    p = sub.add_parser("invariants", parents=[common], help="invariant jet fibres")
    p.add_argument("--order", type=int, required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--point", type=_floats, action="append", help="base point, e.g. 1,0 (repeatable)")
    g.add_argument("--grid", type=int, help="lattice points per axis over the chart box")
    p.add_argument("--csv", help="write the dimension table as CSV")

    p = sub.add_parser("transport", parents=[common], help="transport a jet along a path")
    p.add_argument("--path", required=True)
    p.add_argument("--jet", required=True, help="section name, or coordinates like f=1,f_x=0.5")
    p.add_argument("--order", type=int, required=True)
    p.add_argument("--csv", help="write the jet path as CSV")

    p = sub.add_parser("holonomy", parents=[common], help="holonomy equivalence of two paths")
    p.add_argument("--paths", type=_pair, required=True)
    p.add_argument("--order", type=int, required=True)

    p = sub.add_parser("hierarchy", parents=[common], help="equivalence verdicts for orders 0..k")
    p.add_argument("--paths", type=_pair, required=True)
    p.add_argument("--max-order", type=int, required=True)
    return ap


def _envelope(args, result: dict) -> dict:
    return {
        "engine": {"name": "holojet", "version": __version__, "backend": BACKEND},
        "command": args.command,
        "scene": args.scene,
        "settings": {"tol": args.tol, "ode_tol": args.ode_tol, "seed": args.seed, "strict": args.strict},
        "result": result,
    }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


# --------------------------------------------------------------------------
# commands


def cmd_validate(scene: Scene, args, say) -> dict:
    inv = involutivity_check(scene.foliation)
    ri = validate_right_inverse(scene.connection)
    br = validate_bracket_preserving(scene.connection)
    B = scene.bundle
    # start off the zero section so fibre growth is visible
    mid = tuple(0.5 * (a + b) for a, b in B.base.box) + tuple(
        0.5 * (a + b) + 0.05 * (b - a) for a, b in B.fibre_box
    )
    probes = {}
    for name, L in zip(scene.foliation.names, scene.connection.lifts):
        probes[name] = flow_domain_guard(scene.connection, L, mid, PROBE_TIME, tol=args.ode_tol).as_dict()
    say(f"involutivity: {'pass' if inv.passed else 'FAIL'} (worst residual {inv.worst_residual:.3g})")
    say(f"right inverse: {'pass' if ri.passed else 'FAIL'} (max residual {ri.max_residual:.3g})")
    say(
        f"bracket preservation: {'pass' if br.passed else 'FAIL'} (max residual {br.max_residual:.3g}, "
        f"{br.n_nonunique} samples with non-unique coefficients)"
    )
    for name, pr in probes.items():
        say(f"completeness probe {name} from {list(mid)}: {pr['message']}")
    for w in scene.warnings:
        say(f"warning: {w}")
    return {
        "involutivity": inv.as_dict(),
        "right_inverse": ri.as_dict(),
        "bracket": br.as_dict(),
        "completeness_probes": probes,
        "affine_fibre": scene.connection.affine_fibre,
        "warnings": list(scene.warnings),
    }


def cmd_prolong(scene: Scene, args, say) -> dict:
    try:
        L = scene.connection.lift(args.field)
    except ValueError:
        raise CliError(f"unknown generator {args.field!r}") from None
    V = vertical_prolong(L, args.order) if args.vertical else prolong(L, args.order)
    text = format_jetfield(V)
    say(text)
    lay = V.layout
    comps = {}
    if not V.vertical:
        comps.update({n: to_string(c) for n, c in zip(lay.base_names, V.a)})
    comps.update({lay.name(a, I): to_string(c) for (a, I), c in zip(lay.jet_coords, V.phi)})
    return {"field": args.field, "order": args.order, "vertical": args.vertical, "components": comps}


def _points(scene: Scene, args) -> list[tuple[float, ...]]:
    if args.point:
        pts = args.point
    elif args.grid:
        pts = [tuple(p) for p in sample_points(scene.chart.box, lattice=args.grid, n_random=0)]
    else:
        pts = [tuple(0.5 * (a + b) for a, b in scene.chart.box)]
    for p in pts:
        if len(p) != scene.chart.n_base:
            raise CliError(f"point {p} needs {scene.chart.n_base} coordinates")
    return [tuple(map(float, p)) for p in pts]


def cmd_invariants(scene: Scene, args, say) -> dict:
    pts = _points(scene, args)
    c = scene.connection
    rows = []
    if c.affine_fibre:
        fibres = []
        for p in pts:
            fib = invariant_fibre(c, p, args.order)
            say(fib.message)
            for line in fib.constraints.format_rows():
                say("  " + line)
            fibres.append(fib.as_dict())
            rows.append((p, fib.dimension, fib.jet_dim, fib.rank))
        result = {"order": args.order, "method": "affine", "fibres": fibres}
    else:
        rep = has_enough_conservation_laws(c, pts, args.order)
        for p, d in zip(rep.points, rep.dims):
            say(f"invariant {args.order}-jets at {p}: local dimension {d} of {rep.jet_dim} (nonlinear)")
            rows.append((p, d, rep.jet_dim, None))
        result = {"order": args.order, "method": rep.method, "fibres": [], "enough": rep.as_dict()}
    result["table"] = [{"point": list(p), "dimension": d, "jet_dim": n, "rank": r} for p, d, n, r in rows]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(",".join(list(scene.chart.names) + ["dimension", "jet_dim"]) + "\n")
            for p, d, n, _ in rows:
                fh.write(",".join([repr(v) for v in p] + [str(d), str(n)]) + "\n")
    return result


def _start_jet(scene: Scene, spec: str, x, k: int) -> JetPoint:
    lay = JetLayout(scene.bundle.base.names, scene.bundle.fibre_names, k)
    if spec in scene.sections:
        return jet_of_section(scene.sections[spec], lay, x)
    if "=" not in spec:
        raise CliError(f"{spec!r} is neither a section name nor a list of name=value pairs")
    vals = {}
    for part in spec.split(","):
        name, _, v = part.partition("=")
        try:
            vals[name.strip()] = float(v)
        except ValueError:
            raise CliError(f"bad jet coordinate value in {part!r}") from None
    try:
        return JetPoint.from_mapping(lay, x, vals)
    except KeyError as exc:
        raise CliError(str(exc.args[0])) from None


def cmd_transport(scene: Scene, args, say) -> dict:
    p = scene.path(args.path)
    j0 = _start_jet(scene, args.jet, p.start, args.order)
    jp = transport_ode(scene.connection, p, j0, args.order, tol=args.ode_tol)
    end = jp.endpoint
    for name, v in end.as_mapping().items():
        say(f"{name} = {v:.12g}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write(jp.to_csv())
    return {
        "path": args.path,
        "order": args.order,
        "start": j0.as_mapping(),
        "end": end.as_mapping(),
        "coordinates": end.layout.coord_names,
        "n_steps": jp.n_steps,
        "n_samples": len(jp.t),
    }


def cmd_holonomy(scene: Scene, args, say) -> dict:
    a, b = args.paths
    rep = holonomy_equivalent(
        scene.connection, scene.path(a), scene.path(b), args.order, args.tol, seed=args.seed, names=(a, b)
    )
    say(f"{a} vs {b} at order {args.order}: {rep.verdict} (max discrepancy {rep.max_discrepancy:.3g})")
    return rep.as_dict()


def cmd_hierarchy(scene: Scene, args, say) -> dict:
    a, b = args.paths
    rep = hierarchy_check(
        scene.connection, scene.path(a), scene.path(b), args.max_order, args.tol, seed=args.seed, names=(a, b)
    )
    for r in rep.reports:
        say(f"order {r.k}: {r.verdict} (max discrepancy {r.max_discrepancy:.3g})")
    if not rep.monotone:
        say(f"ENGINE BUG: hierarchy monotonicity violated at {rep.violations}")
    return rep.as_dict()


COMMANDS = {
    "validate": cmd_validate,
    "prolong": cmd_prolong,
    "invariants": cmd_invariants,
    "transport": cmd_transport,
    "holonomy": cmd_holonomy,
    "hierarchy": cmd_hierarchy,
}


def run(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    """Parse ``argv``, run the command and return the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)

    def say(msg: str) -> None:
        print(msg, file=stdout)

    try:
        scene = load_scene(args.scene, strict=args.strict, tol=args.ode_tol)
        result = COMMANDS[args.command](scene, args, say)
        if args.command == "hierarchy" and not result["monotone"]:
            code = 3
        else:
            code = 0
    except (ParseError, ExprError, CliError, FlowError, NonAffineConnectionError, ExpressionTooLargeError) as exc:
        print(f"holojet: error: {exc}", file=stderr)
        return 1
    except (KeyError, ValueError, FileNotFoundError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"holojet: error: {msg}", file=stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(dumps(_envelope(args, result)))
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
