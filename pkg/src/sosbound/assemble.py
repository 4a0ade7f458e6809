"""Compile a constraint set and multiplier plan into a block SDP.

The compiled program encodes the certificate identity

    gamma - f - sum_j t_j h_j - sum_i s_i g_i - sum_k sigma_k  =  0,

with one equality row per monomial of the union support: f is the affine
output objective (outputs substituted), each inequality multiplier s_i is the
Gram form of a PSD block on its owning clique's basis, each equality
multiplier t_j is a free-coefficient polynomial on the same basis support,
and each clique carries a residual SOS block sigma_k.  gamma is a free scalar
entering only the constant row; the objective is to minimize it.  Products of
distinct inequality constraints are never formed.

Numerics: before assembly every variable is affinely rescaled onto [-1, 1]
using its interval bounds and every constraint is normalized to unit max-abs
coefficient.  Neither step changes the feasible gamma set, and the rescaling
makes the post-solve residual slack a genuine bound: on the scaled box every
monomial has magnitude at most one, so a certificate whose rows are violated
by delta certifies gamma + ||delta||_1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .cliques import Clique, MultiplierPlan
from .constraints import ConstraintSet, TaggedConstraint
from .intervals import LayerBounds
from .model import NetworkModel
from .poly import Exponent, ExponentSet, ONE, Polynomial, affine_substitute
from .sdp import SQRT2, SdpProblem, SdpSolution, svec_index

RAD_FLOOR = 1e-9


class AssemblyError(RuntimeError):
    """Raised when the certificate program cannot be laid out consistently."""


@dataclass(frozen=True)
class CertificateLayout:
    """Where each multiplier lives in the decision vector.

    ``gram_blocks`` maps an inequality's index in the constraint list to its
    PSD block; ``t_slices`` maps an equality's index to its span of free
    scalars; ``residual_blocks`` maps a clique id to its PSD block.
    """

    gamma_col: int
    t_slices: Dict[int, Tuple[int, ExponentSet]]
    gram_blocks: Dict[int, Tuple[int, ExponentSet]]
    residual_blocks: Dict[int, Tuple[int, ExponentSet]]


def output_objective(model: NetworkModel, face: Sequence[float]) -> Polynomial:
    """The affine polynomial c . (W x + b) over last-layer variables."""
    face = np.atleast_1d(np.asarray(face, dtype=float))
    if face.shape != (model.n_y,):
        raise ValueError(f"face vector must have length {model.n_y}")
    W, b = model.layers[-1]
    weights = face @ W
    last_vars = model.layer_vars(model.depth)
    return Polynomial.affine(
        {last_vars[k]: weights[k] for k in range(len(last_vars))}, float(face @ b)
    )


def _var_scaling(model: NetworkModel, bounds: LayerBounds) -> Tuple[np.ndarray, np.ndarray]:
    lo, hi = bounds.var_box(model)
    mid = 0.5 * (lo + hi)
    rad = np.maximum(0.5 * (hi - lo), RAD_FLOOR)
    return mid, rad


def assemble(
    model: NetworkModel,
    constraints: ConstraintSet,
    bounds: LayerBounds,
    cliques: Sequence[Clique],
    plan: MultiplierPlan,
    face: Sequence[float],
    mode: str = "sparse",
) -> SdpProblem:
    """Build the coefficient-matching SDP for one polytope face."""
    if len(plan.constraint_clique) != len(constraints.constraints):
        raise AssemblyError(
            f"plan covers {len(plan.constraint_clique)} constraints, "
            f"set has {len(constraints.constraints)}"
        )
    mid, rad = _var_scaling(model, bounds)
    objective = affine_substitute(output_objective(model, face), mid, rad)

    scaled: List[Polynomial] = []
    for c in constraints.constraints:
        p = affine_substitute(c.poly, mid, rad)
        top = p.max_abs_coeff()
        if top > 0:
            p = p * (1.0 / top)
        scaled.append(p)

    # Column layout: gamma, then equality multiplier coefficients, then the
    # svec entries of the Gram blocks (inequalities first, cliques after).
    t_slices: Dict[int, Tuple[int, ExponentSet]] = {}
    n_free = 1
    for idx, c in enumerate(constraints.constraints):
        if c.kind == "eq":
            basis = plan.constraint_basis[idx]
            t_slices[idx] = (n_free, basis)
            n_free += len(basis)

    block_sizes: List[int] = []
    block_descriptors: List[str] = []
    gram_blocks: Dict[int, Tuple[int, ExponentSet]] = {}
    for idx, c in enumerate(constraints.constraints):
        if c.kind == "ineq":
            basis = plan.constraint_basis[idx]
            gram_blocks[idx] = (len(block_sizes), basis)
            block_descriptors.append(f"mult[{idx}] L{c.layer} N{c.node} {c.label}")
            block_sizes.append(len(basis))
    residual_blocks: Dict[int, Tuple[int, ExponentSet]] = {}
    for k, clique in enumerate(cliques):
        basis = plan.clique_basis[k]
        residual_blocks[clique.id] = (len(block_sizes), basis)
        block_descriptors.append(f"residual[clique {clique.id}]")
        block_sizes.append(len(basis))

    block_offsets = []
    off = n_free
    for s in block_sizes:
        block_offsets.append(off)
        off += s * (s + 1) // 2
    n_cols = off

    # First pass: every monomial that can appear in the identity.
    support = set(objective.support())
    support.add(ONE)
    prods: List[Tuple[int, List[Tuple[Exponent, float]]]] = []
    for idx, c in enumerate(constraints.constraints):
        p = scaled[idx]
        basis = plan.constraint_basis[idx]
        if c.kind == "eq":
            items = [(e, v) for e, v in p.items()]
            for b_exp in basis:
                for e, _ in items:
                    support.add(e * b_exp)
        else:
            items = [(e, v) for e, v in p.items()]
            for a in range(len(basis)):
                for bb in range(a, len(basis)):
                    prod = basis[a] * basis[bb]
                    for e, _ in items:
                        support.add(e * prod)
    for k, clique in enumerate(cliques):
        basis = plan.clique_basis[k]
        for a in range(len(basis)):
            for bb in range(a, len(basis)):
                support.add(basis[a] * basis[bb])

    row_monomials = sorted(support, key=lambda e: e.sort_key())
    row_of = {e: i for i, e in enumerate(row_monomials)}

    if mode == "sparse":
        for e in row_monomials:
            vs = e.variables()
            if vs and not any(cl.contains(vs) for cl in cliques):
                raise AssemblyError(
                    f"monomial {e.to_text()} lies outside every clique; "
                    "a constraint violated layer locality"
                )

    rows: List[int] = []
    cols: List[int] = []
    vals: List[float] = []

    rows.append(row_of[ONE])
    cols.append(0)
    vals.append(1.0)

    for idx, c in enumerate(constraints.constraints):
        p = scaled[idx]
        items = p.items()
        if c.kind == "eq":
            start, basis = t_slices[idx]
            for bi, b_exp in enumerate(basis):
                for e, v in items:
                    rows.append(row_of[e * b_exp])
                    cols.append(start + bi)
                    vals.append(-v)
        else:
            block_idx, basis = gram_blocks[idx]
            boff = block_offsets[block_idx]
            for a in range(len(basis)):
                for bb in range(a, len(basis)):
                    col = boff + svec_index(len(basis), a, bb)
                    prod = basis[a] * basis[bb]
                    w = 1.0 if a == bb else SQRT2
                    for e, v in items:
                        rows.append(row_of[e * prod])
                        cols.append(col)
                        vals.append(-v * w)

    for k, clique in enumerate(cliques):
        block_idx, basis = residual_blocks[clique.id]
        boff = block_offsets[block_idx]
        for a in range(len(basis)):
            for bb in range(a, len(basis)):
                col = boff + svec_index(len(basis), a, bb)
                rows.append(row_of[basis[a] * basis[bb]])
                cols.append(col)
                vals.append(-(1.0 if a == bb else SQRT2))

    A = sp.coo_matrix(
        (vals, (rows, cols)), shape=(len(row_monomials), n_cols)
    ).tocsr()
    b = np.zeros(len(row_monomials))
    for e, v in objective.items():
        b[row_of[e]] = v
    cvec = np.zeros(n_cols)
    cvec[0] = 1.0

    layout = CertificateLayout(0, t_slices, gram_blocks, residual_blocks)
    meta = {
        "mode": mode,
        "face": np.asarray(face, dtype=float),
        "objective": objective,
        "constraints": tuple(
            (scaled[i], c.kind, c.label) for i, c in enumerate(constraints.constraints)
        ),
        "var_shift": mid,
        "var_scale": rad,
        "row_monomials": tuple(row_monomials),
        "layout": layout,
        "order": plan.order,
    }
    return SdpProblem(
        block_sizes=tuple(block_sizes),
        n_free=n_free,
        A=A,
        b=b,
        c=cvec,
        block_descriptors=tuple(block_descriptors),
        meta=meta,
    )


# -- certificate inspection ---------------------------------------------------


def _eval_basis(basis: ExponentSet, point: np.ndarray) -> np.ndarray:
    out = np.empty(len(basis))
    for i, e in enumerate(basis):
        term = 1.0
        for v, p in e.pairs:
            term *= point[v] ** p
        out[i] = term
    return out


def residual_check(
    problem: SdpProblem, solution: SdpSolution, point: np.ndarray
) -> float:
    """|gamma - f - sum t h - sum s g - sum sigma| at one (original) point.

    The point is given in original variable coordinates and mapped through
    the assembly-time rescaling.  For an exact certificate this is zero; for
    a solver output it is bounded by the propagated equality-row violation.
    """
    meta = problem.meta
    if meta is None:
        raise ValueError("problem carries no assembly metadata")
    x = (np.asarray(point, dtype=float) - meta["var_shift"]) / meta["var_scale"]
    layout: CertificateLayout = meta["layout"]
    total = solution.free_values[layout.gamma_col]
    total -= meta["objective"].evaluate(x)
    polys = meta["constraints"]
    for idx, (start, basis) in layout.t_slices.items():
        coeffs = solution.free_values[start : start + len(basis)]
        t_val = float(coeffs @ _eval_basis(basis, x))
        total -= t_val * polys[idx][0].evaluate(x)
    for idx, (block_idx, basis) in layout.gram_blocks.items():
        m = _eval_basis(basis, x)
        s_val = float(m @ solution.block_values[block_idx] @ m)
        total -= s_val * polys[idx][0].evaluate(x)
    for _, (block_idx, basis) in layout.residual_blocks.items():
        m = _eval_basis(basis, x)
        total -= float(m @ solution.block_values[block_idx] @ m)
    return abs(float(total))


def ibp_warm_start(problem: SdpProblem) -> Optional[np.ndarray]:
    """Feasible start from the closed-form interval certificate.

    Constant multipliers on the last-layer box constraints certify the
    interval bound exactly.  Returns None when a needed box constraint was
    replaced (settled neuron) or omitted, in which case the solver starts
    from zero.
    """
    meta = problem.meta
    if meta is None:
        return None
    objective: Polynomial = meta["objective"]
    layout: CertificateLayout = meta["layout"]
    polys = meta["constraints"]

    need: Dict[int, float] = {}
    gamma0 = objective.coeff(ONE)
    for e, v in objective.items():
        if e.is_constant():
            continue
        (var,) = e.variables()
        need[var] = v
        gamma0 += abs(v)

    # Locate, per variable, the normalized box rows (1 - x) and (x + 1).
    upper_of: Dict[int, int] = {}
    lower_of: Dict[int, int] = {}
    for idx, (p, kind, label) in enumerate(polys):
        if kind != "ineq" or label not in ("input_lower", "input_upper", "ibp_lower", "ibp_upper"):
            continue
        vs = p.variables()
        if len(vs) != 1:
            continue
        var = vs[0]
        slope = p.coeff(Exponent([(var, 1)]))
        if slope > 0:
            lower_of[var] = idx
        else:
            upper_of[var] = idx

    z = np.zeros(problem.n_cols)
    z[layout.gamma_col] = gamma0
    offsets = {}
    off = problem.n_free
    for k, s in enumerate(problem.block_sizes):
        offsets[k] = off
        off += s * (s + 1) // 2
    for var, weight in need.items():
        idx = upper_of.get(var) if weight > 0 else lower_of.get(var)
        if idx is None:
            return None
        p = polys[idx][0]
        # A normalized box row is (1 -+ x) up to rounding; anything else
        # (e.g. a tightened or rescaled constraint) disqualifies the start.
        slope = p.coeff(Exponent([(var, 1)]))
        if len(p.variables()) != 1 or abs(abs(slope) - 1.0) > 1e-9:
            return None
        if abs(p.coeff(ONE) - 1.0) > 1e-9 or p.degree() != 1:
            return None
        block_idx, basis = layout.gram_blocks[idx]
        const_pos = basis.index(ONE)
        col = offsets[block_idx] + svec_index(len(basis), const_pos, const_pos)
        z[col] += abs(weight)
    return z
