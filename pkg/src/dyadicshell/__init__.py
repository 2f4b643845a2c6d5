"""Pathwise simulation and certification toolkit for the inviscid dyadic
cascade with scalar noise on the first shell."""

from importlib.metadata import PackageNotFoundError, version

from .analysis import (
    BoundReport,
    ContinuityPoint,
    CouplingResult,
    SlopeFit,
    bound_constant,
    check_energy_bound,
    check_u0_bound,
    continuity_modulus,
    couple,
    energy_bound_constants,
    fit_decay_slope,
    regularity_profile,
)
from .core import (
    CONTRACTION,
    ENERGY,
    ModelParams,
    ShellState,
    SobolevIndex,
    Trajectory,
    drift,
    flux,
    sobolev_norm_sq,
)
from .integrator import (
    IntegrationError,
    PositivityError,
    SchemeConfig,
    integrate,
    reference_solve,
    stable_dt,
    step,
    trajectory_to_csv,
    trajectory_to_jsonl,
)
from .noise import NoisePath, path_from_csv, path_to_csv, refine, sample_brownian, sup_norm
from .stationary import (
    EmpiricalMeasure,
    UniquenessResult,
    bootstrap_noise_floor,
    load_measure,
    long_run,
    mixing_time_proxy,
    save_measure,
    stationarity_gap,
    uniqueness_experiment,
    wasserstein2,
)

try:
    __version__ = version("dyadicshell")
except PackageNotFoundError:
    __version__ = "0.0.0+local"

__all__ = [
    "ModelParams", "ShellState", "SobolevIndex", "Trajectory",
    "ENERGY", "CONTRACTION", "drift", "flux", "sobolev_norm_sq",
    "NoisePath", "sample_brownian", "refine", "sup_norm",
    "path_to_csv", "path_from_csv",
    "SchemeConfig", "IntegrationError", "PositivityError",
    "step", "stable_dt", "integrate", "reference_solve",
    "trajectory_to_csv", "trajectory_to_jsonl",
    "BoundReport", "CouplingResult", "SlopeFit", "ContinuityPoint",
    "bound_constant", "energy_bound_constants",
    "check_u0_bound", "check_energy_bound",
    "regularity_profile", "fit_decay_slope", "couple", "continuity_modulus",
    "EmpiricalMeasure", "UniquenessResult",
    "long_run", "wasserstein2", "stationarity_gap", "bootstrap_noise_floor",
    "uniqueness_experiment", "mixing_time_proxy",
    "save_measure", "load_measure",
]
