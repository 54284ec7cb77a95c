"""Calibration of matched absorbing layers for time-domain wave problems."""
from .attenuation import AttenuationProfile, eval_af, eval_cml, rasterize, sigma_jacobian
from .model import (
    AcousticMaterial,
    ConfigError,
    ElasticMaterial,
    ElectromagneticMaterial,
    GridSpec,
    LayoutError,
    PhysicsKind,
    build_layout,
    validate_layout,
)
from .solver import (
    BoundarySpec,
    DivergenceError,
    Simulation,
    SimulationConfig,
    SourceSpec,
    TimeGrid,
    run_forward,
)
from .energy import reduction_db, total_energy
from .adjoint import Objective, gradient_check, reverse_sweep, seed_terminal

__all__ = [
    "AcousticMaterial", "AttenuationProfile", "BoundarySpec", "ConfigError", "DivergenceError",
    "ElasticMaterial", "ElectromagneticMaterial", "GridSpec", "LayoutError", "Objective",
    "PhysicsKind", "Simulation", "SimulationConfig", "SourceSpec", "TimeGrid", "build_layout",
    "eval_af", "eval_cml", "gradient_check", "rasterize", "reduction_db", "reverse_sweep",
    "run_forward", "seed_terminal", "sigma_jacobian", "total_energy", "validate_layout",
]
