"""chic: a conserved phase-field system with thermal memory.

Spectral solver, steady-state machinery, phase splitting, convergence
diagnostics, and a deterministic CLI around them.  The public surface is
re-exported here; see the README for the command-line interface.
"""

from .spectral import (
    Grid,
    apply_operator,
    divergence,
    flux_to_nodal,
    flux_to_spectral,
    gradient,
    mean_and_deflate,
    to_nodal,
    to_spectral,
)
from .model import (
    InitialData,
    Parameters,
    Potential,
    State,
    shift_potential,
    strong_residual,
    verify_assumptions,
)
from .functionals import (
    CSV_COLUMNS,
    DiagnosticsCollector,
    DiagnosticsRecord,
    FunctionalCoefficients,
    conserved,
    energy_E,
    hsigma_norm,
    lyapunov_L,
    proof_functionals,
    psi_sigma,
)
from .dynamics import (
    BlowupError,
    ImexStepper,
    SchemeConfig,
    StabilityError,
    Trajectory,
    integrate,
    integrate_oracle,
    linear_trajectory,
    step_imex,
)
from .equilibrium import (
    ConvergenceError,
    EquilibriumSolution,
    LojaFit,
    gradient_flow,
    hessian_spectrum,
    loja_fit,
    solve_steady,
)
from .decomposition import (
    SplitRun,
    choose_ell,
    decay_check,
    flux_curl_norm,
    split_certificate,
    split_integrate,
)
from .fitting import DecayFitResult, fit_decay
from .config import ConfigError, RunConfig, load_config
from .verification import VerificationReport, run_verification

__version__ = "0.1.0"

__all__ = [
    "Grid", "apply_operator", "divergence", "flux_to_nodal",
    "flux_to_spectral", "gradient", "mean_and_deflate", "to_nodal",
    "to_spectral",
    "InitialData", "Parameters", "Potential", "State", "shift_potential",
    "strong_residual", "verify_assumptions",
    "CSV_COLUMNS", "DiagnosticsCollector", "DiagnosticsRecord",
    "FunctionalCoefficients", "conserved", "energy_E", "hsigma_norm",
    "lyapunov_L", "proof_functionals", "psi_sigma",
    "BlowupError", "ImexStepper", "SchemeConfig", "StabilityError",
    "Trajectory", "integrate", "integrate_oracle", "linear_trajectory",
    "step_imex",
    "ConvergenceError", "EquilibriumSolution", "LojaFit", "gradient_flow",
    "hessian_spectrum", "loja_fit", "solve_steady",
    "SplitRun", "choose_ell", "decay_check", "flux_curl_norm",
    "split_certificate", "split_integrate",
    "DecayFitResult", "fit_decay",
    "ConfigError", "RunConfig", "load_config",
    "VerificationReport", "run_verification",
    "__version__",
]
