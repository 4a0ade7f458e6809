"""End-to-end verification: intervals -> constraints -> cliques -> SDP.

Each polytope face is an independent program (faces may run in parallel); a
face's certified bound is the solver's residual-rounded gamma, never above
the closed-form interval certificate, which the compiled program always
contains.  Sampling oracles provide lower bounds for soundness checks and
gap reporting.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .assemble import assemble as assemble_face, ibp_warm_start
from .cliques import MultiplierPlan, build_cliques, build_plan, dense_clique
from .constraints import ConstraintSet, build_constraint_set
from .intervals import LayerBounds, interval_propagate, output_interval
from .model import (
    Box,
    NetworkModel,
    PolytopeSpec,
    forward_batch,
    model_fingerprint,
)
from .sdp import SdpSolution, SolveParams, solve

DEFAULT_SWEEP_BUDGET = 1000.0


@dataclass
class RunOptions:
    mode: str = "sparse"  # sparse | dense
    order: Union[int, str] = 2
    x_m: Optional[float] = None
    include_ibp_boxes: bool = True
    solver: SolveParams = field(default_factory=SolveParams)
    threads: Optional[int] = None
    warm_start: bool = True
    grid_resolution: Optional[int] = None
    n_samples: int = 10_000
    sample_seed: int = 0


@dataclass
class FaceResult:
    face: List[float]
    gamma: float
    gamma_solver: float
    gamma_ibp: float
    sampled_max: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    eq_residual_l1: float
    solve_s: float
    assembly_s: float
    n_rows: int
    n_blocks: int
    max_block: int
    error: Optional[str] = None


@dataclass
class VerificationReport:
    fingerprint: str
    mode: str
    order: Union[int, str]
    faces: List[FaceResult]
    config: Dict
    certification: str = "residual-slack+interval-cap"

    def gammas(self) -> List[float]:
        return [f.gamma for f in self.faces]

    def to_dict(self) -> Dict:
        return {
            "fingerprint": self.fingerprint,
            "mode": self.mode,
            "order": self.order,
            "certification": self.certification,
            "config": self.config,
            "faces": [vars(f).copy() for f in self.faces],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


# -- baselines ----------------------------------------------------------------


def ibp_output_bound(model: NetworkModel, bounds: LayerBounds, face: Sequence[float]) -> float:
    """Interval upper bound on c . y from the last-layer boxes."""
    out = output_interval(model, bounds)
    face = np.atleast_1d(np.asarray(face, dtype=float))
    return float(np.where(face > 0, face * out.hi, face * out.lo).sum())


def _sample_points(
    box: Box, grid_resolution: Optional[int], n_samples: int, seed: int
) -> np.ndarray:
    n_u = len(box)
    if n_u <= 3:
        res = grid_resolution or (1001 if n_u <= 2 else 101)
        axes = [np.linspace(box.lo[j], box.hi[j], res) for j in range(n_u)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    from scipy.stats import qmc

    sampler = qmc.Sobol(d=n_u, scramble=True, seed=seed)
    pts = sampler.random(n_samples)
    return qmc.scale(pts, box.lo, box.hi)


def sample_lower_bound(
    model: NetworkModel,
    box: Box,
    faces: PolytopeSpec,
    grid_resolution: Optional[int] = None,
    n_samples: int = 10_000,
    seed: int = 0,
) -> List[float]:
    """max of c . pi(u) over a deterministic grid or seeded sample per face.

    Always a valid lower bound on the true maximum.
    """
    pts = _sample_points(box, grid_resolution, n_samples, seed)
    out: List[float] = []
    C = np.stack([c for c, _ in faces.faces])
    best = np.full(C.shape[0], -np.inf)
    chunk = 200_000
    for start in range(0, pts.shape[0], chunk):
        Y = forward_batch(model, pts[start : start + chunk])
        vals = Y @ C.T
        best = np.maximum(best, vals.max(axis=0))
    out = [float(v) for v in best]
    return out


# -- the pipeline ---------------------------------------------------------------


def _prepare(
    model: NetworkModel, box: Box, options: RunOptions
) -> Tuple[LayerBounds, ConstraintSet, list, MultiplierPlan]:
    bounds = interval_propagate(model, box)
    constraints = build_constraint_set(
        model,
        bounds,
        include_ibp_boxes=options.include_ibp_boxes,
        x_m=options.x_m,
    )
    if options.mode == "dense":
        cliques = dense_clique(model)
    elif options.mode == "sparse":
        cliques = build_cliques(model)
    else:
        raise ValueError(f"unknown mode {options.mode!r}")
    plan = build_plan(constraints, cliques, options.order)
    return bounds, constraints, cliques, plan


def _solve_face(
    model: NetworkModel,
    bounds: LayerBounds,
    constraints: ConstraintSet,
    cliques,
    plan: MultiplierPlan,
    face: np.ndarray,
    options: RunOptions,
    sampled: float,
) -> FaceResult:
    t0 = time.perf_counter()
    gamma_ibp = ibp_output_bound(model, bounds, face)
    try:
        problem = assemble_face(
            model, constraints, bounds, cliques, plan, face, mode=options.mode
        )
    except Exception as exc:
        return FaceResult(
            face=[float(v) for v in face],
            gamma=gamma_ibp,
            gamma_solver=math.inf,
            gamma_ibp=gamma_ibp,
            sampled_max=sampled,
            status="assembly-error",
            iterations=0,
            primal_residual=math.inf,
            dual_residual=math.inf,
            gap=math.inf,
            eq_residual_l1=math.inf,
            solve_s=0.0,
            assembly_s=time.perf_counter() - t0,
            n_rows=0,
            n_blocks=0,
            max_block=0,
            error=f"{type(exc).__name__}: {exc}",
        )
    assembly_s = time.perf_counter() - t0
    params = replace(options.solver)
    if options.warm_start and params.warm_start is None:
        params.warm_start = ibp_warm_start(problem)
    sol = solve(problem, params)
    gamma = min(sol.gamma_certified, gamma_ibp)
    return FaceResult(
        face=[float(v) for v in face],
        gamma=gamma,
        gamma_solver=sol.gamma_certified,
        gamma_ibp=gamma_ibp,
        sampled_max=sampled,
        status=sol.status,
        iterations=sol.iterations,
        primal_residual=sol.primal_residual,
        dual_residual=sol.dual_residual,
        gap=sol.gap,
        eq_residual_l1=sol.eq_residual_l1,
        solve_s=sol.wall_time,
        assembly_s=assembly_s,
        n_rows=len(problem.b),
        n_blocks=len(problem.block_sizes),
        max_block=max(problem.block_sizes) if problem.block_sizes else 0,
    )


def verify_polytope(
    model: NetworkModel,
    box: Box,
    faces: PolytopeSpec,
    options: Optional[RunOptions] = None,
) -> VerificationReport:
    """Certified bound c . y <= gamma for every polytope face."""
    options = options or RunOptions()
    bounds, constraints, cliques, plan = _prepare(model, box, options)
    sampled = sample_lower_bound(
        model,
        box,
        faces,
        grid_resolution=options.grid_resolution,
        n_samples=options.n_samples,
        seed=options.sample_seed,
    )
    face_vecs = [c for c, _ in faces.faces]
    workers = options.threads or os.cpu_count() or 1
    if workers > 1 and len(face_vecs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda iv: _solve_face(
                        model, bounds, constraints, cliques, plan, iv[1], options, sampled[iv[0]]
                    ),
                    enumerate(face_vecs),
                )
            )
    else:
        results = [
            _solve_face(model, bounds, constraints, cliques, plan, c, options, sampled[i])
            for i, c in enumerate(face_vecs)
        ]
    config = {
        "mode": options.mode,
        "order": options.order,
        "x_m": options.x_m,
        "include_ibp_boxes": options.include_ibp_boxes,
        "tol_primal": options.solver.tol_primal,
        "tol_dual": options.solver.tol_dual,
        "tol_gap": options.solver.tol_gap,
        "max_iter": options.solver.max_iter,
        "warm_start": options.warm_start,
        "n_samples": options.n_samples,
        "grid_resolution": options.grid_resolution,
        "sample_seed": options.sample_seed,
    }
    return VerificationReport(
        fingerprint=model_fingerprint(model),
        mode=options.mode,
        order=options.order,
        faces=results,
        config=config,
    )


# -- scaling studies ------------------------------------------------------------


SWEEP_COLUMNS = [
    "mode",
    "order",
    "layers",
    "nodes",
    "face",
    "gamma",
    "assembly_s",
    "solve_s",
    "status",
]


def scaling_study(
    vary: str,
    activation: str,
    modes: Sequence[str] = ("sparse", "dense"),
    values: Sequence[int] = (1, 2, 4, 8, 16, 32, 64, 128),
    fixed: int = 2,
    order: Union[int, str] = "min",
    time_budget: float = DEFAULT_SWEEP_BUDGET,
    seed: int = 1,
    box_halfwidth: float = 1.0,
    solver: Optional[SolveParams] = None,
    csv_path: Optional[str] = None,
) -> List[Dict]:
    """Sweep layer or node count per mode until solving exceeds the budget.

    ``vary`` is "layers" (nodes fixed) or "nodes" (layers fixed).  Single
    input/output, face c = +1.  Budget exhaustion is recorded, not raised.
    """
    if vary not in ("layers", "nodes"):
        raise ValueError("vary must be 'layers' or 'nodes'")
    rows: List[Dict] = []
    from .model import random_model

    for mode in modes:
        for value in values:
            layers = value if vary == "layers" else fixed
            nodes = fixed if vary == "layers" else value
            model = random_model(1, 1, layers, nodes, activation, seed)
            box = Box(np.array([-box_halfwidth]), np.array([box_halfwidth]))
            options = RunOptions(
                mode=mode,
                order=order,
                solver=solver or SolveParams(),
                threads=1,
                n_samples=64,
                grid_resolution=64,
            )
            try:
                bounds, constraints, cliques, plan = _prepare(model, box, options)
                res = _solve_face(
                    model, bounds, constraints, cliques, plan,
                    np.array([1.0]), options, float("nan"),
                )
                row = {
                    "mode": mode,
                    "order": order,
                    "layers": layers,
                    "nodes": nodes,
                    "face": "+1",
                    "gamma": res.gamma,
                    "assembly_s": res.assembly_s,
                    "solve_s": res.solve_s,
                    "status": res.status,
                    "max_block": res.max_block,
                }
            except Exception as exc:  # record, keep sweeping other modes
                row = {
                    "mode": mode,
                    "order": order,
                    "layers": layers,
                    "nodes": nodes,
                    "face": "+1",
                    "gamma": float("nan"),
                    "assembly_s": float("nan"),
                    "solve_s": float("nan"),
                    "status": f"error:{type(exc).__name__}",
                    "max_block": 0,
                }
            rows.append(row)
            total = (row["assembly_s"] or 0) + (row["solve_s"] or 0)
            if not math.isfinite(total) or total > time_budget:
                row["status"] = row["status"] + "+budget"
                break
    if csv_path:
        write_sweep_csv(rows, csv_path)
    return rows


def write_sweep_csv(rows: List[Dict], path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def dump_output_samples(
    model: NetworkModel,
    box: Box,
    path: str,
    n_samples: int = 10_000,
    seed: int = 0,
) -> None:
    """CSV point list of sampled outputs, for reproducing accuracy figures."""
    pts = _sample_points(box, None, n_samples, seed)
    if pts.shape[0] > n_samples:
        stride = max(1, pts.shape[0] // n_samples)
        pts = pts[::stride]
    Y = forward_batch(model, pts)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"y{k}" for k in range(model.n_y)])
        for row in Y:
            writer.writerow([repr(float(v)) for v in row])
