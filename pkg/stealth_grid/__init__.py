"""
Generalized stealth data injection attacks on power-grid state estimation.

Modules:

- matpower_ingest: MATPOWER case parsing and topology validation
- grid_jacobian: DC and lossless AC measurement matrices
- gaussian_model: state/noise model, Gaussian MI and KL
- attack_engine: closed-form attack construction and optimality checks
- weighted_chisq: tails of weighted chi-squared sums (Imhof, Monte Carlo, bounds)
- detector: LRT detection probability, empirical rates and the lambda bound
- experiment_cli: deterministic sweeps and the `stealth-grid` command line
- attack_server: JSON-RPC tool server over stdio
"""

__version__ = "1.0.0"

from .attack_engine import AttackSpec, mi_corollary, optimal_attack
from .detector import bound_exponent, build_spectrum, lambda_star, prob_detection
from .experiment_cli import (
    DEFAULT_GRIDS,
    ExperimentConfig,
    load_config,
    run_ac_sensitivity,
    run_lambda_sweep,
    run_rho_sweep,
)
from .gaussian_model import StateModel
from .grid_jacobian import MeasurementMatrix, ac_jacobian_at, dc_jacobian
from .matpower_ingest import GridCase, bundled_case, parse_case

__all__ = [
    "AttackSpec",
    "ExperimentConfig",
    "GridCase",
    "MeasurementMatrix",
    "StateModel",
    "ac_jacobian_at",
    "bound_exponent",
    "build_spectrum",
    "bundled_case",
    "dc_jacobian",
    "lambda_star",
    "mi_corollary",
    "optimal_attack",
    "parse_case",
    "prob_detection",
]

# Available experiment families
AVAILABLE_EXPERIMENTS = {
    "rho-sweep": {
        "runner": run_rho_sweep,
        "description": "Mutual information and detection probability against state correlation",
        "defaults": DEFAULT_GRIDS["rho-sweep"],
    },
    "lambda-sweep": {
        "runner": run_lambda_sweep,
        "description": "Mutual information, detection probability and its bound against lambda",
        "defaults": DEFAULT_GRIDS["lambda-sweep"],
    },
    "ac-sensitivity": {
        "runner": run_ac_sensitivity,
        "description": "DC-designed attacks evaluated under perturbed AC measurement models",
        "defaults": DEFAULT_GRIDS["ac-sensitivity"],
    },
}


def get_experiment_info(name: str) -> dict:
    """Get information about a specific experiment family."""
    return AVAILABLE_EXPERIMENTS.get(name, {})


def list_available_experiments() -> list:
    """List all available experiment families."""
    return list(AVAILABLE_EXPERIMENTS.keys())


def create_experiment(name: str, **overrides) -> ExperimentConfig:
    """Create a validated configuration for an experiment family."""
    if name not in AVAILABLE_EXPERIMENTS:
        raise ValueError(f"Unknown experiment: {name}")
    return load_config(experiment=name, **overrides)
