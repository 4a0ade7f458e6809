"""Semi-algebraic encoding of a network: inequalities g and equalities h.

Every constraint touches only the variables of one hidden node and the full
previous layer (inputs for the first layer), which is the locality the clique
decomposition relies on.  ReLU nodes get the exact quadratic description
(two inequalities plus a complementarity equality, tightened to a single
equality when interval bounds settle the neuron); sigmoid/tanh nodes get two
sector constraints positioned at +/- x_m plus interval box constraints.

Sector pairs are never trusted from their geometric construction alone: each
candidate is validated on a dense grid of (v, phi(v)) samples over the node's
pre-activation interval, repaired by shifting the lines apart if necessary,
and replaced by the global single sector if the repair fails.  Unsound lines
are never returned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .intervals import LayerBounds
from .model import ACTIVATIONS, Box, NetworkModel
from .poly import Polynomial

SECTOR_GRID = 2001
SECTOR_MARGIN = 1e-9

# Global sectors valid on all of R: (phi - lo(v)) * (hi(v) - phi) >= 0.
GLOBAL_SECTOR = {
    "sigmoid": ((0.0, 0.5), (0.25, 0.5)),
    "tanh": ((0.0, 0.0), (1.0, 0.0)),
}


@dataclass(frozen=True)
class SectorLine:
    """A line ``slope * v + intercept`` in pre-activation space."""

    slope: float
    intercept: float

    def __post_init__(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ValueError("sector line must be finite")

    def __call__(self, v):
        return self.slope * np.asarray(v, dtype=float) + self.intercept


@dataclass(frozen=True)
class TaggedConstraint:
    """A polynomial constraint owned by one (layer, node) of the network."""

    poly: Polynomial
    kind: str  # "ineq" (>= 0) or "eq" (= 0)
    layer: int
    node: int
    label: str

    def __post_init__(self):
        if self.kind not in ("ineq", "eq"):
            raise ValueError(f"bad constraint kind {self.kind!r}")

    def describe(self) -> str:
        op = ">= 0" if self.kind == "ineq" else "= 0"
        return f"L{self.layer} N{self.node} {self.label}: {self.poly.to_text()} {op}"


@dataclass(frozen=True)
class ConstraintSet:
    """All constraints of a model, with counts by kind."""

    constraints: Tuple[TaggedConstraint, ...]

    @property
    def inequalities(self) -> Tuple[TaggedConstraint, ...]:
        return tuple(c for c in self.constraints if c.kind == "ineq")

    @property
    def equalities(self) -> Tuple[TaggedConstraint, ...]:
        return tuple(c for c in self.constraints if c.kind == "eq")

    def __len__(self) -> int:
        return len(self.constraints)

    def dump_text(self) -> str:
        return "\n".join(c.describe() for c in self.constraints)


# -- input and ReLU constraints -------------------------------------------


def input_constraints(box: Box) -> List[TaggedConstraint]:
    """The 2 n_u box inequalities on the input variables."""
    out = []
    for j in range(len(box)):
        x = Polynomial.variable(j)
        out.append(TaggedConstraint(x - box.lo[j], "ineq", 0, j, "input_lower"))
        out.append(TaggedConstraint(box.hi[j] - x, "ineq", 0, j, "input_upper"))
    return out


def _preactivation(model: NetworkModel, layer: int, node: int) -> Polynomial:
    """v = W^{layer-1}[node, :] . x^{layer-1} + b, over previous-layer vars."""
    W, b = model.layers[layer - 1]
    prev = model.layer_vars(layer - 1)
    coeffs = {prev[k]: W[node, k] for k in range(len(prev))}
    return Polynomial.affine(coeffs, b[node])


def relu_constraints(
    model: NetworkModel,
    bounds: LayerBounds,
    layer: int,
    node: int,
    include_ibp_boxes: bool = True,
) -> List[TaggedConstraint]:
    """Exact ReLU description of one node, tightened from its interval.

    An inactive node (pre_hi <= 0) collapses to phi = 0 and an always-active
    one (pre_lo > 0) to phi - v = 0; otherwise the node gets phi >= 0,
    phi - v >= 0 and the complementarity equality phi (phi - v) = 0, plus the
    interval box when requested.
    """
    phi = Polynomial.variable(model.var_index(layer, node))
    v = _preactivation(model, layer, node)
    pre_lo, pre_hi = bounds.node_pre(layer, node)
    if pre_hi <= 0.0:
        return [TaggedConstraint(phi, "eq", layer, node, "relu_dead")]
    if pre_lo > 0.0:
        return [TaggedConstraint(phi - v, "eq", layer, node, "relu_active")]
    out = [
        TaggedConstraint(phi, "ineq", layer, node, "relu_lower"),
        TaggedConstraint(phi - v, "ineq", layer, node, "relu_above_line"),
        TaggedConstraint(phi * (phi - v), "eq", layer, node, "relu_complementarity"),
    ]
    if include_ibp_boxes:
        post_lo, post_hi = bounds.node_post(layer, node)
        out.append(TaggedConstraint(phi - post_lo, "ineq", layer, node, "ibp_lower"))
        out.append(TaggedConstraint(post_hi - phi, "ineq", layer, node, "ibp_upper"))
    return out


# -- sector machinery -------------------------------------------------------


def sector_constraint(
    line_lo: SectorLine,
    line_hi: SectorLine,
    phi_var: int,
    pre_poly: Polynomial,
    layer: int,
    node: int,
    label: str,
) -> TaggedConstraint:
    """Quadratic sandwich (phi - lo(v)) (hi(v) - phi) >= 0 on the node."""
    phi = Polynomial.variable(phi_var)
    lo = pre_poly * line_lo.slope + line_lo.intercept
    hi = pre_poly * line_hi.slope + line_hi.intercept
    return TaggedConstraint((phi - lo) * (hi - phi), "ineq", layer, node, label)


def _sector_violation(
    f: Callable, lo: float, hi: float, pair: Tuple[SectorLine, SectorLine], grid: int
) -> float:
    """Most negative value of the pair's product on the (v, f(v)) grid."""
    v = np.linspace(lo, hi, grid)
    phi = f(v)
    prod = (phi - pair[0](v)) * (pair[1](v) - phi)
    return float(prod.min())


def _repair_pair(
    f: Callable,
    lo: float,
    hi: float,
    pair: Tuple[SectorLine, SectorLine],
    grid: int,
    margin: float,
) -> Optional[Tuple[SectorLine, SectorLine]]:
    """Shift the lines apart so the product clears ``margin`` on the grid.

    With p = phi - l1 and q = l2 - phi at a grid point, a uniform outward
    shift delta keeps the product above ``margin`` whenever delta is at least
    the larger root of (p + d)(q + d) = margin; take the worst case over the
    grid.  Returns None if the shifted pair still fails (caller falls back).
    """
    v = np.linspace(lo, hi, grid)
    phi = f(v)
    p = phi - pair[0](v)
    q = pair[1](v) - phi
    if float(((p) * (q)).min()) >= -margin:
        return pair
    disc = np.sqrt((p - q) ** 2 + 4.0 * margin)
    roots = 0.5 * (-(p + q) + disc)
    delta = float(max(roots.max(), 0.0)) + margin
    shifted = (
        SectorLine(pair[0].slope, pair[0].intercept - delta),
        SectorLine(pair[1].slope, pair[1].intercept + delta),
    )
    if _sector_violation(f, lo, hi, shifted, grid) >= -margin:
        return shifted
    return None


def _far_tangent(f: Callable, df: Callable, x_m: float, reach: float) -> float:
    """Tangency point a1 < x_m whose tangent passes through (x_m, f(x_m)).

    The tangent anchored on the opposite (convex) branch lies below the curve
    left of its crossing at x_m and above it to the right, which is exactly
    the upper role in the right-sector hourglass.  Bisect
    G(a) = f(a) + f'(a)(x_m - a) - f(x_m) after scanning down for a sign
    change; if none exists the tangency collapses onto x_m itself.
    """
    fm = f(x_m)
    G = lambda a: f(a) + df(a) * (x_m - a) - fm
    hi_a = x_m - 1e-6
    if G(hi_a) <= 0:
        return x_m
    lo_a = None
    step = max(1.0, x_m)
    a = x_m
    floor = min(-abs(reach), -x_m) - 8.0
    while a > floor:
        a -= step
        if G(a) < 0:
            lo_a = a
            break
    if lo_a is None:
        return x_m
    for _ in range(80):
        mid = 0.5 * (lo_a + hi_a)
        if G(mid) < 0:
            lo_a = mid
        else:
            hi_a = mid
    return 0.5 * (lo_a + hi_a)


def _chord(f: Callable, a: float, b: float, df: Callable) -> SectorLine:
    if abs(b - a) < 1e-9:
        slope = float(df(a))
    else:
        slope = (float(f(b)) - float(f(a))) / (b - a)
    return SectorLine(slope, float(f(a)) - slope * a)


def _tangent(f: Callable, df: Callable, a: float) -> SectorLine:
    slope = float(df(a))
    return SectorLine(slope, float(f(a)) - slope * a)


def _mirror_line(line: SectorLine, center_value: float) -> SectorLine:
    # Point symmetry of the curve about (0, f(0)): v -> -v, y -> 2 f(0) - y.
    return SectorLine(line.slope, 2.0 * center_value - line.intercept)


@dataclass(frozen=True)
class TwoSectorResult:
    """Validated sector pairs; ``fallback`` marks the global single sector."""

    left: Optional[Tuple[SectorLine, SectorLine]]
    right: Optional[Tuple[SectorLine, SectorLine]]
    fallback: bool = False

    def pairs(self) -> List[Tuple[str, Tuple[SectorLine, SectorLine]]]:
        out = []
        if self.left is not None:
            out.append(("left", self.left))
        if self.right is not None:
            out.append(("right", self.right))
        return out


def default_x_m(pre: Box | Tuple[float, float], node: int = 0) -> float:
    if isinstance(pre, Box):
        lo, hi = float(pre.lo[node]), float(pre.hi[node])
    else:
        lo, hi = pre
    return float(np.clip(min(abs(lo), hi) / 2.0, 0.1, 5.0))


def _right_pair(
    f: Callable, df: Callable, x_m: float, dom_lo: float, dom_hi: float
) -> Tuple[SectorLine, SectorLine]:
    """Right-sector candidate crossing at (x_m, f(x_m)).

    Lower line: chord on to (dom_hi, f(dom_hi)); upper line: tangent through
    the crossing, touching the curve at the far-branch tangency point.
    """
    lower = _chord(f, x_m, dom_hi, df)
    a1 = _far_tangent(f, df, x_m, dom_lo)
    if a1 == x_m:
        upper = _tangent(f, df, x_m)
    else:
        slope = float(df(a1))
        upper = SectorLine(slope, float(f(x_m)) - slope * x_m)
    return lower, upper


def build_two_sector(
    activation: str,
    pre: Tuple[float, float],
    x_m: float,
    grid: int = SECTOR_GRID,
    margin: float = SECTOR_MARGIN,
) -> TwoSectorResult:
    """Two sector pairs pinned at +/- x_m, each grid-certified on [lo, hi].

    The right pair joins the chord through (x_m, phi(x_m)) and (hi, phi(hi))
    with the tangent through the crossing that touches the curve on the far
    branch; the left pair is its mirror image at -x_m (the curves are point
    symmetric about (0, phi(0))).  A side is omitted when the interval stays
    on the other side of zero; if the interval is degenerate or a repaired
    pair still fails its grid check, the global single sector is returned
    instead (always valid, flagged as fallback).
    """
    if activation not in GLOBAL_SECTOR:
        raise ValueError(f"two-sector bounds only for sigmoid/tanh, not {activation}")
    if x_m <= 0:
        raise ValueError("x_m must be positive")
    f, df = ACTIVATIONS[activation]
    lo, hi = float(pre[0]), float(pre[1])
    (alo, llo), (ahi, lhi) = GLOBAL_SECTOR[activation]
    single = (SectorLine(alo, llo), SectorLine(ahi, lhi))
    if hi - lo < 1e-4:
        return TwoSectorResult(None, single, fallback=True)

    center = float(f(0.0))
    right = left = None
    if hi > 1e-6:
        cand = _right_pair(f, df, x_m, lo, hi)
        right = _repair_pair(f, lo, hi, cand, grid, margin)
    if lo < -1e-6:
        m_lower, m_upper = _right_pair(f, df, x_m, -hi, -lo)
        # Mirrored: the reflected tangent sits below the curve on the left
        # half, the reflected chord above; order them for outward repair.
        cand = (_mirror_line(m_upper, center), _mirror_line(m_lower, center))
        left = _repair_pair(f, lo, hi, cand, grid, margin)

    if right is None and left is None:
        return TwoSectorResult(None, single, fallback=True)
    return TwoSectorResult(left, right, fallback=False)


def sector_node_constraints(
    model: NetworkModel,
    bounds: LayerBounds,
    layer: int,
    node: int,
    x_m: Optional[float] = None,
    include_ibp_boxes: bool = True,
    grid: int = SECTOR_GRID,
    margin: float = SECTOR_MARGIN,
) -> List[TaggedConstraint]:
    """Sector + interval constraints for one sigmoid/tanh node."""
    phi_var = model.var_index(layer, node)
    v = _preactivation(model, layer, node)
    pre = bounds.node_pre(layer, node)
    if x_m is None:
        x_m = default_x_m(pre)
    sectors = build_two_sector(model.activation, pre, x_m, grid, margin)
    out = []
    for side, (l1, l2) in sectors.pairs():
        label = "sector_fallback" if sectors.fallback else f"sector_{side}"
        out.append(sector_constraint(l1, l2, phi_var, v, layer, node, label))
    if include_ibp_boxes:
        phi = Polynomial.variable(phi_var)
        post_lo, post_hi = bounds.node_post(layer, node)
        out.append(TaggedConstraint(phi - post_lo, "ineq", layer, node, "ibp_lower"))
        out.append(TaggedConstraint(post_hi - phi, "ineq", layer, node, "ibp_upper"))
    return out


# -- full constraint set ----------------------------------------------------


def build_constraint_set(
    model: NetworkModel,
    bounds: LayerBounds,
    include_ibp_boxes: bool = True,
    x_m: Optional[float] = None,
    grid: int = SECTOR_GRID,
    margin: float = SECTOR_MARGIN,
) -> ConstraintSet:
    """Input constraints plus per-node activation constraints for all layers."""
    out: List[TaggedConstraint] = list(input_constraints(bounds.input))
    for layer in range(1, model.depth + 1):
        for node in range(model.layer_size(layer)):
            if model.activation == "relu":
                out.extend(
                    relu_constraints(model, bounds, layer, node, include_ibp_boxes)
                )
            else:
                out.extend(
                    sector_node_constraints(
                        model, bounds, layer, node, x_m, include_ibp_boxes, grid, margin
                    )
                )
    cs = ConstraintSet(tuple(out))
    _check_locality(model, cs)
    return cs


def _check_locality(model: NetworkModel, cs: ConstraintSet) -> None:
    """Every constraint may touch only its node's layer and the previous one."""
    for c in cs.constraints:
        if c.layer == 0:
            allowed = set(model.layer_vars(0))
        else:
            allowed = set(model.layer_vars(c.layer)) | set(model.layer_vars(c.layer - 1))
        extra = set(c.poly.variables()) - allowed
        if extra:
            raise AssertionError(
                f"constraint {c.label} at layer {c.layer} touches foreign variables {sorted(extra)}"
            )
