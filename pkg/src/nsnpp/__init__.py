"""Legendre spectral-Galerkin SAV schemes for the Navier-Stokes-Nernst-Planck-Poisson system."""
from .config import ConfigError, RunConfig, load_config, parse_config
from .elliptic import OperatorCache, build_operator, solve_elliptic
from .model import NsnppState, PhysicsParams, PositivityError, SpeciesParams, init_state
from .schemes import BDF1, Forcing, SchemeVariant, StepFailure, Stepper
from .spectral import QuadratureRule, lgl_rule

__all__ = [
    "BDF1", "ConfigError", "Forcing", "NsnppState", "OperatorCache", "PhysicsParams",
    "PositivityError", "QuadratureRule", "RunConfig", "SchemeVariant", "SpeciesParams",
    "StepFailure", "Stepper", "build_operator", "init_state", "lgl_rule", "load_config",
    "parse_config", "solve_elliptic",
]
