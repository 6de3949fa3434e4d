"""Matrix-free solvers for the anisotropic shifted-Laplace problem on
thin-shell grids: preconditioned CG and tensor-product multigrid with
vertical line relaxation, a simulated domain decomposition and an analytic
cost model."""

from .cg import ConvergenceHistory, cg_solve, estimate_condition
from .geometry import Geometry, ProblemParams, flat_box_geometry
from .grid import Field, GridShape, Layout
from .multigrid import MultigridHierarchy, mg_solve, vcycle
from .operator import StencilOperator, apply, assemble_dense, residual
from .parallel import Communicator, RankTopology, run_ranks
from .perfmodel import PerfCounters, cost_table, ratio_R
from .smoother import BlockJacobiPreconditioner, smooth

__version__ = "0.1.0"

__all__ = [
    "ConvergenceHistory", "cg_solve", "estimate_condition",
    "Geometry", "ProblemParams", "flat_box_geometry",
    "Field", "GridShape", "Layout",
    "MultigridHierarchy", "mg_solve", "vcycle",
    "StencilOperator", "apply", "assemble_dense", "residual",
    "Communicator", "RankTopology", "run_ranks",
    "PerfCounters", "cost_table", "ratio_R",
    "BlockJacobiPreconditioner", "smooth",
]
