"""Layer-pair cliques and multiplier monomial bases.

Every constraint couples one node with the whole previous layer, so the joint
coupling graph of the variables is a path of layers and its maximal cliques
are the consecutive layer pairs.  With the affine output substituted there is
one clique per activation layer: clique k = vars(layer k) + vars(layer k+1),
layer 0 being the inputs.  The clique graph is itself a path, hence chordal,
so no extension step is needed.

Multiplier bases per relaxation order ``w``: a constraint of degree d gets all
monomials over its owning clique of degree at most w - ceil(d/2); the
per-clique residual certificate gets degree w.  Minimum-order mode pins every
multiplier basis to the constant and the residual to degree 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple, Union

from .constraints import ConstraintSet, TaggedConstraint
from .model import NetworkModel
from .poly import Exponent, ExponentSet, basis_up_to_degree

MIN_ORDER = "min"
Order = Union[int, str]


class ConfigError(ValueError):
    """Raised when a relaxation order is below the admissible minimum."""


@dataclass(frozen=True)
class Clique:
    """An ordered variable set; consecutive cliques overlap in one layer."""

    id: int
    vars: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(sorted(self.vars)))

    def contains(self, variables: Sequence[int]) -> bool:
        s = set(self.vars)
        return all(v in s for v in variables)

    def __len__(self) -> int:
        return len(self.vars)


def build_cliques(model: NetworkModel) -> List[Clique]:
    """One clique per activation layer: (layer k, layer k+1) variable pairs."""
    return [
        Clique(k, model.layer_vars(k) + model.layer_vars(k + 1))
        for k in range(model.depth)
    ]


def dense_clique(model: NetworkModel) -> List[Clique]:
    """The single all-variables clique used by the dense baseline."""
    return [Clique(0, tuple(range(model.n_vars)))]


def assign_multiplier(constraint: TaggedConstraint, cliques: Sequence[Clique]) -> int:
    """Owning clique id: the lowest-id clique containing all the variables."""
    cvars = constraint.poly.variables()
    for clique in cliques:
        if clique.contains(cvars):
            return clique.id
    raise ValueError(
        f"constraint {constraint.label} at layer {constraint.layer} spans no clique "
        f"(vars {cvars}); constraints must stay within two consecutive layers"
    )


def min_admissible_order(objective_degree: int, constraints: ConstraintSet) -> int:
    degs = [objective_degree] + [c.poly.degree() for c in constraints.constraints]
    return max(1, math.ceil(max(degs) / 2))


def multiplier_basis(clique: Clique, order: Order, deg_g: int) -> ExponentSet:
    """Monomials over the clique of degree <= order - ceil(deg_g / 2).

    In minimum-order mode every multiplier basis is just the constant.
    """
    if order == MIN_ORDER:
        return basis_up_to_degree((), 0)
    if not isinstance(order, int):
        raise ConfigError(f"order must be an integer or '{MIN_ORDER}', got {order!r}")
    budget = order - math.ceil(deg_g / 2)
    if budget < 0:
        raise ConfigError(
            f"order {order} is below the admissible minimum for a degree-{deg_g} constraint"
        )
    return basis_up_to_degree(clique.vars, budget)


def certificate_basis(clique: Clique, order: Order) -> ExponentSet:
    """Residual SOS basis for one clique: degree ``order`` (1 in min mode)."""
    degree = 1 if order == MIN_ORDER else int(order)
    return basis_up_to_degree(clique.vars, degree)


@dataclass(frozen=True)
class MultiplierPlan:
    """Owning clique and monomial basis for every constraint and clique."""

    order: Order
    constraint_clique: Tuple[int, ...]
    constraint_basis: Tuple[ExponentSet, ...]
    clique_basis: Tuple[ExponentSet, ...]

    def basis_sizes(self) -> List[int]:
        return [len(b) for b in self.constraint_basis]


def build_plan(
    constraints: ConstraintSet,
    cliques: Sequence[Clique],
    order: Order,
    objective_degree: int = 1,
) -> MultiplierPlan:
    """Assign every constraint to a clique and fix all monomial bases."""
    if isinstance(order, int):
        floor = min_admissible_order(objective_degree, constraints)
        if order < floor:
            raise ConfigError(
                f"relaxation order {order} below admissible minimum {floor}"
            )
    elif order != MIN_ORDER:
        raise ConfigError(f"order must be an integer or '{MIN_ORDER}', got {order!r}")
    owners = []
    bases = []
    for c in constraints.constraints:
        cid = assign_multiplier(c, cliques)
        owners.append(cid)
        bases.append(multiplier_basis(cliques[cid], order, c.poly.degree()))
    cert = tuple(certificate_basis(cl, order) for cl in cliques)
    return MultiplierPlan(order, tuple(owners), tuple(bases), cert)


def clique_report(
    cliques: Sequence[Clique], plan: MultiplierPlan | None = None
) -> str:
    """JSON report: per clique, its variables and assigned constraint count."""
    counts: Dict[int, int] = {c.id: 0 for c in cliques}
    if plan is not None:
        for cid in plan.constraint_clique:
            counts[cid] += 1
    payload = {
        "cliques": [
            {
                "id": c.id,
                "vars": list(c.vars),
                "size": len(c),
                "constraints": counts[c.id],
            }
            for c in cliques
        ]
    }
    return json.dumps(payload, indent=1, sort_keys=True)
