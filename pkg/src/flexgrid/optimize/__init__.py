from .formulations import (
    Costs,
    Limits,
    Margins,
    ModelBuildError,
    build_convex_lp,
    build_milp_2d,
    build_milp_3d,
    extract_deltas,
)
from .lp import INF, LpModel, SimplexError, Solution, solve_lp
from .milp import MilpModel, solve_milp

__all__ = [
    "INF", "Costs", "Limits", "LpModel", "Margins", "MilpModel", "ModelBuildError", "SimplexError",
    "Solution", "build_convex_lp", "build_milp_2d", "build_milp_3d", "extract_deltas", "solve_lp",
    "solve_milp",
]
