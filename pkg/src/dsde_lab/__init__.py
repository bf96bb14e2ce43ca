"""dsde_lab: fully coupled forward-backward doubly stochastic equations with
Poisson jumps, solved by the method of continuation."""

__version__ = "0.1.0"

from .errors import (CFLError, ContinuationFailure, DomainTooSmallError, DSDEError,  # noqa: F401
                     InsufficientPathsError, InvalidArgumentError, InvalidDataError,
                     InvalidHamiltonianError, InvalidSystemError, MapDivergenceError,
                     NumericalBlowupError, ShapeMismatchError, UnsupportedFunctionError)
from .randomness import (MarkSpace, NoiseBundle, NoiseEnsemble, TimeGrid, make_grid,  # noqa: F401
                         sample_ensemble, sample_noise, zero_ensemble)
from .coeffs import (CoefficientSystem, State, check_boundary_monotonicity,  # noqa: F401
                     check_lipschitz, check_monotonicity, linear_system, zero_system)
from .bdsdep import BackwardProblem, RegressionConfig, solve_backward  # noqa: F401
from .fbdsdep import (HomotopyConfig, QuintupleSolution, SolverConfig, SourceTerms,  # noqa: F401
                      continuation_map, solution_distance, solve_alpha_zero, solve_fbdsdep)
