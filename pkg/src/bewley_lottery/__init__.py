"""
Stationary equilibrium of an incomplete-markets economy with occupational
choice and a lottery, plus the panel simulation and regressions built on it.
"""

__version__ = "0.1.0"

from .distribution import Distribution, invariant_distribution
from .econometrics import RegressionResult, ols, run_paper_regressions
from .equilibrium import (Equilibrium, compare_steady_states, compute_moments, solve,
                          solve_benchmark, solve_lottery)
from .household import NonConvergenceError, Prices, solve_household
from .model import (AssetGrid, LotterySpec, MarkovChain, ModelConfig, ModelError, Numerics,
                    default_lottery, stationary_distribution)
from .simulate import SimConfig, run_simulation

__all__ = [
    "AssetGrid", "Distribution", "Equilibrium", "LotterySpec", "MarkovChain", "ModelConfig",
    "ModelError", "NonConvergenceError", "Numerics", "Prices", "RegressionResult", "SimConfig",
    "compare_steady_states", "compute_moments", "default_lottery", "invariant_distribution", "ols",
    "run_paper_regressions", "run_simulation", "solve", "solve_benchmark", "solve_household",
    "solve_lottery", "stationary_distribution",
]
