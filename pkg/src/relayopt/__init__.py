"""Sum-rate optimisation for a source served by out-of-band relays with finite backhaul."""
from .gp_core import GPProblem, GPSolution, GPStatus, Monomial, Posynomial, PosynomialProduct, solve_gp
from .homotopy import HomotopyOptions, build_gp_subproblem, initial_point, monomial_lower_bound, run_homotopy
from .model import (
    Allocation,
    NetworkConfig,
    Permutation,
    check_feasibility,
    cutset_bound,
    sum_rate,
)
from .oracle import GridSpec, GridTooLarge, grid_search, inner_rate_assignment, oracle_search
from .schemes import Solution, solve_cf, solve_df_ml, solve_df_sl, solve_hybrid, solve_scheme

__version__ = "0.1.0"
