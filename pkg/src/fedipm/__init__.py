"""Federated interior-point solver with sketch-compressed Newton projections."""

from .barrier import BarrierKind, BlockBarrier
from .centralpath import HyperParams, ModifiedProgram, PathState, Profile, initialize, path_step
from .erm import erm_to_conic
from .estimators import FederatedLeastSquares, SketchTransformer
from .fednet import CommLedger, baseline_model, ledger_formula, run_federated
from .newton import ProjectionBundle, WeightMatrix, assemble_sketched_projection, exact_projection
from .problem import ProblemInstance, desk_lp, load_problem, random_box_lp, save_problem
from .sketch import SketchKind, SketchMatrix, SketchSpec, make_sketch, sketch_specs
from .solver import Mode, SolveResult, solve

__version__ = "0.1.0"

__all__ = [
    "BarrierKind",
    "BlockBarrier",
    "HyperParams",
    "ModifiedProgram",
    "PathState",
    "Profile",
    "initialize",
    "path_step",
    "erm_to_conic",
    "FederatedLeastSquares",
    "SketchTransformer",
    "CommLedger",
    "baseline_model",
    "ledger_formula",
    "run_federated",
    "ProjectionBundle",
    "WeightMatrix",
    "assemble_sketched_projection",
    "exact_projection",
    "ProblemInstance",
    "desk_lp",
    "load_problem",
    "random_box_lp",
    "save_problem",
    "SketchKind",
    "SketchMatrix",
    "SketchSpec",
    "make_sketch",
    "sketch_specs",
    "Mode",
    "SolveResult",
    "solve",
    "__version__",
]
