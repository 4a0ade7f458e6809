"""Command-line entry point: verify, sweep, gen, export-sdpa, ibp.

All flags take explicit values; reports are JSON with sorted keys, so the
same invocation on the same files reproduces the same bytes up to wall-time
fields.  Exit codes: 0 success, 1 usage error, 2 solver non-convergence
under --strict.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import List, Optional

import numpy as np

from .cliques import ConfigError
from .intervals import interval_propagate, write_interval_csv
from .model import (
    Box,
    ModelFormatError,
    NetworkModel,
    PolytopeSpec,
    load_model,
    random_model,
    save_model,
)
from .sdp import SolveParams, export_sdpa
from .verify import RunOptions, scaling_study, verify_polytope

THREADS_ENV = "SOSBOUND_THREADS"


class UsageError(Exception):
    pass


def _parse_order(text: str):
    if text == "min":
        return "min"
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"--order must be an integer or 'min', got {text!r}")


def _box_from_args(values: List[float], n_u: int) -> Box:
    if len(values) == 2 and n_u > 1:
        values = values * n_u
    if len(values) != 2 * n_u:
        raise UsageError(
            f"--box needs {2 * n_u} numbers (lo hi per input) or a single lo hi pair"
        )
    lo = np.array(values[0::2], dtype=float)
    hi = np.array(values[1::2], dtype=float)
    return Box(lo, hi)


def _faces_from_args(args, n_y: int) -> PolytopeSpec:
    if args.axis_faces:
        return PolytopeSpec.axis_faces(n_y)
    if not args.face:
        raise UsageError("provide --face (repeatable) or --axis-faces")
    faces = []
    for vec in args.face:
        if len(vec) != n_y:
            raise UsageError(f"each --face needs {n_y} numbers")
        faces.append((np.array(vec, dtype=float), None))
    return PolytopeSpec(tuple(faces))


def _default_threads(args) -> Optional[int]:
    if args.threads:
        return args.threads
    env = os.environ.get(THREADS_ENV)
    return int(env) if env else None


def _solver_params(args) -> SolveParams:
    return SolveParams(
        tol_primal=args.tol,
        tol_dual=args.tol,
        tol_gap=args.tol,
        max_iter=args.max_iter,
    )


def _add_model_solver_flags(p, with_faces=True):
    p.add_argument("--model", required=True, help="model JSON file")
    p.add_argument("--box", type=float, nargs="+", required=True,
                   help="input box: lo hi per input (a single pair is broadcast)")
    if with_faces:
        p.add_argument("--face", type=float, nargs="+", action="append",
                       help="polytope face vector c (repeatable)")
        p.add_argument("--axis-faces", action="store_true",
                       help="use the 2 n_y axis-aligned faces")
    p.add_argument("--mode", choices=["sparse", "dense"], default="sparse")
    p.add_argument("--order", default="2", help="relaxation order (integer or 'min')")
    p.add_argument("--xm", type=float, default=None, help="sector midpoint hyper-parameter")
    p.add_argument("--no-ibp-boxes", action="store_true",
                   help="omit the interval box constraints")
    p.add_argument("--tol", type=float, default=1e-6, help="solver tolerance")
    p.add_argument("--max-iter", type=int, default=50_000)
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default: ${THREADS_ENV} or all cores)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="sosbound",
        description="Certified output bounds for feed-forward networks",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="certify polytope face bounds")
    _add_model_solver_flags(p)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--strict", action="store_true",
                   help="exit 2 unless every face solved to optimality")

    p = sub.add_parser("gen", help="write a random Gaussian model")
    p.add_argument("--inputs", type=int, default=1)
    p.add_argument("--outputs", type=int, default=1)
    p.add_argument("--layers", type=int, required=True)
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--act", choices=["relu", "sigmoid", "tanh"], required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("ibp", help="dump per-node interval bounds as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--box", type=float, nargs="+", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("export-sdpa", help="write the face SDP in sparse SDPA format")
    _add_model_solver_flags(p)
    p.add_argument("--out", required=True, help=".dat-s output path")
    p.add_argument("--blocks-out", default=None,
                   help="sidecar JSON mapping block indices to constraint labels")

    p = sub.add_parser("sweep", help="scaling study over layers or nodes")
    p.add_argument("--vary", choices=["layers", "nodes"], required=True)
    p.add_argument("--act", choices=["relu", "sigmoid", "tanh"], required=True)
    p.add_argument("--values", type=int, nargs="+", required=True)
    p.add_argument("--fixed", type=int, default=2,
                   help="the non-varying count (nodes for --vary layers)")
    p.add_argument("--modes", nargs="+", default=["sparse", "dense"])
    p.add_argument("--order", default="min")
    p.add_argument("--budget", type=float, default=1000.0, help="per-mode solve budget, seconds")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", required=True, help="CSV output path")
    return ap


def _cmd_verify(args) -> int:
    model = load_model(args.model)
    box = _box_from_args(args.box, model.n_u)
    faces = _faces_from_args(args, model.n_y)
    options = RunOptions(
        mode=args.mode,
        order=_parse_order(args.order),
        x_m=args.xm,
        include_ibp_boxes=not args.no_ibp_boxes,
        solver=_solver_params(args),
        threads=_default_threads(args),
    )
    report = verify_polytope(model, box, faces, options)
    with open(args.out, "w") as fh:
        fh.write(report.to_json())
        fh.write("\n")
    bad = [f for f in report.faces if f.status != "optimal"]
    for f in report.faces:
        print(f"face {f.face}: gamma={f.gamma:.6g} status={f.status}")
    if args.strict and bad:
        print(f"{len(bad)} face(s) did not reach optimality", file=sys.stderr)
        return 2
    return 0


def _cmd_gen(args) -> int:
    model = random_model(args.inputs, args.outputs, args.layers, args.nodes,
                         args.act, args.seed)
    save_model(model, args.out)
    print(f"wrote {args.out} ({args.layers} layers x {args.nodes} nodes, {args.act})")
    return 0


def _cmd_ibp(args) -> int:
    model = load_model(args.model)
    box = _box_from_args(args.box, model.n_u)
    bounds = interval_propagate(model, box)
    write_interval_csv(bounds, args.out)
    print(f"wrote {args.out}")
    return 0


def _cmd_export(args) -> int:
    from .assemble import assemble as assemble_face
    from .verify import _prepare

    model = load_model(args.model)
    box = _box_from_args(args.box, model.n_u)
    faces = _faces_from_args(args, model.n_y)
    options = RunOptions(
        mode=args.mode,
        order=_parse_order(args.order),
        x_m=args.xm,
        include_ibp_boxes=not args.no_ibp_boxes,
    )
    bounds, constraints, cliques, plan = _prepare(model, box, options)
    face = faces.faces[0][0]
    problem = assemble_face(model, constraints, bounds, cliques, plan, face,
                            mode=options.mode)
    export_sdpa(problem, args.out)
    if args.blocks_out:
        with open(args.blocks_out, "w") as fh:
            json.dump(
                {str(i): d for i, d in enumerate(problem.block_descriptors)},
                fh, indent=1, sort_keys=True,
            )
    print(f"wrote {args.out} ({len(problem.b)} rows, {len(problem.block_sizes)} blocks)")
    return 0


def _cmd_sweep(args) -> int:
    rows = scaling_study(
        vary=args.vary,
        activation=args.act,
        modes=args.modes,
        values=args.values,
        fixed=args.fixed,
        order=_parse_order(args.order),
        time_budget=args.budget,
        seed=args.seed,
        csv_path=args.out,
    )
    print(f"wrote {args.out} ({len(rows)} rows)")
    return 0


COMMANDS = {
    "verify": _cmd_verify,
    "gen": _cmd_gen,
    "ibp": _cmd_ibp,
    "export-sdpa": _cmd_export,
    "sweep": _cmd_sweep,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ModelFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
