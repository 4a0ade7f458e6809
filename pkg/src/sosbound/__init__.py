"""Certified output bounds for feed-forward networks.

The pipeline: interval bounds -> semi-algebraic constraints -> layer-pair
cliques and multiplier bases -> block SDP -> certified per-face bound.
"""

from .model import (
    Box,
    NetworkModel,
    PolytopeSpec,
    forward,
    forward_batch,
    load_model,
    random_model,
    save_model,
)
from .intervals import LayerBounds, interval_propagate
from .poly import Exponent, Polynomial, basis_up_to_degree, index_products
from .constraints import (
    ConstraintSet,
    SectorLine,
    TaggedConstraint,
    build_constraint_set,
    build_two_sector,
)
from .cliques import Clique, MultiplierPlan, build_cliques, build_plan, dense_clique
from .assemble import assemble, output_objective, residual_check
from .sdp import SdpProblem, SdpSolution, SolveParams, export_sdpa, project_psd, solve
from .verify import (
    RunOptions,
    VerificationReport,
    ibp_output_bound,
    sample_lower_bound,
    scaling_study,
    verify_polytope,
)

__version__ = "0.1.0"

__all__ = [
    "Box",
    "Clique",
    "ConstraintSet",
    "Exponent",
    "LayerBounds",
    "MultiplierPlan",
    "NetworkModel",
    "Polynomial",
    "PolytopeSpec",
    "RunOptions",
    "SdpProblem",
    "SdpSolution",
    "SectorLine",
    "SolveParams",
    "TaggedConstraint",
    "VerificationReport",
    "assemble",
    "basis_up_to_degree",
    "build_cliques",
    "build_constraint_set",
    "build_plan",
    "build_two_sector",
    "dense_clique",
    "export_sdpa",
    "forward",
    "forward_batch",
    "ibp_output_bound",
    "index_products",
    "interval_propagate",
    "load_model",
    "output_objective",
    "project_psd",
    "random_model",
    "residual_check",
    "sample_lower_bound",
    "save_model",
    "scaling_study",
    "solve",
    "verify_polytope",
]
