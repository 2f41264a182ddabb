"""Large-system analysis of randomly spread CDMA multiuser detection.

The package predicts the performance (BER, output SINR, multiuser
efficiency, free energy) of optimal and linear multiuser detectors when the
receiver works from imperfect channel estimates, and ships a finite-system
Monte Carlo lab to validate the predictions.
"""

from .errors import ConvergenceError, ResourceLimitError
from .gauss_quad import Integrand, QuadratureRule, gauss_expect, make_rule
from .linear_turbo import (
    FeedbackModel,
    FilterKind,
    LinearReplicaState,
    PowerDistribution,
    solve_flat_fading,
    solve_linear,
    solve_pic,
)
from .mc_lab import (
    CodeModel,
    Detector,
    Instance,
    McResult,
    Scenario,
    generate_instance,
    run_ber_experiment,
    simulate_symbol,
)
from .replica_solvers import (
    BranchResult,
    Estimator,
    Mode,
    ReceiverSpec,
    ReplicaState,
    SolverConfig,
    SystemParams,
    ber,
    free_energy,
    multiuser_efficiency,
    sinr,
    solve_all_branches,
    solve_fixed_point,
)
from .training_designer import TrainingProblem, optimize_alpha, spectral_efficiency

__version__ = "0.1.0"

__all__ = [
    "BranchResult",
    "CodeModel",
    "ConvergenceError",
    "Detector",
    "Estimator",
    "FeedbackModel",
    "FilterKind",
    "Instance",
    "Integrand",
    "LinearReplicaState",
    "McResult",
    "Mode",
    "PowerDistribution",
    "QuadratureRule",
    "ReceiverSpec",
    "ReplicaState",
    "ResourceLimitError",
    "Scenario",
    "SolverConfig",
    "SystemParams",
    "TrainingProblem",
    "ber",
    "free_energy",
    "gauss_expect",
    "generate_instance",
    "make_rule",
    "multiuser_efficiency",
    "optimize_alpha",
    "run_ber_experiment",
    "simulate_symbol",
    "sinr",
    "solve_all_branches",
    "solve_fixed_point",
    "solve_flat_fading",
    "solve_linear",
    "solve_pic",
    "spectral_efficiency",
    "__version__",
]
