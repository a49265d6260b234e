"""Adaptive state observer for linear plants with overparametrized models.

The plant matrices depend polynomially on a few physical parameters
``theta``.  The observer writes the unmeasured state as filter outputs plus a
linear function of unknown constants ``eta``, estimates ``eta`` by
determinant-based mixing, recovers ``theta`` and the similarity transform
``T_I`` through heterogeneous mappings, and reconstructs ``x_hat``
algebraically.
"""

from . import ices2022  # noqa: F401  (registers the bundled plant)
from .errors import (
    ConfigParseError,
    ConfigurationError,
    ObserverError,
    SimulationError,
    UnobservablePlantError,
)
from .filters import FilterConfig, FilterState, drem_outputs, filter_derivatives, regressor
from .harness import RunArtifacts, detect_te, excitation_level, metrics_from_csv, run, verify_mappings
from .mappings import (
    HeterogeneousMappingSpec,
    Hypothesis1Maps,
    Hypothesis2Maps,
    MappingSet,
    check_heterogeneity,
    get_mapping_set,
    jacobian_condition,
    regress,
    register_mapping_set,
    select_ab,
    theta_regression,
    ti_regression,
)
from .observer import GainSchedule, eta_law, gain_schedule, reconstruct_state, ti_law
from .plant import (
    CanonicalForm,
    PlantDefinition,
    build_canonical,
    canonical_for,
    get_plant,
    register_plant,
    similarity_residuals,
)
from .scenario import ScenarioConfig, load_scenario
from .simulation import IntegratorConfig, SignalSpec, Trajectory, rk4_step, simulate

__version__ = "0.1.0"

__all__ = [
    "CanonicalForm",
    "ConfigParseError",
    "ConfigurationError",
    "FilterConfig",
    "FilterState",
    "GainSchedule",
    "HeterogeneousMappingSpec",
    "Hypothesis1Maps",
    "Hypothesis2Maps",
    "IntegratorConfig",
    "MappingSet",
    "ObserverError",
    "PlantDefinition",
    "RunArtifacts",
    "ScenarioConfig",
    "SignalSpec",
    "SimulationError",
    "Trajectory",
    "UnobservablePlantError",
    "build_canonical",
    "canonical_for",
    "check_heterogeneity",
    "detect_te",
    "drem_outputs",
    "eta_law",
    "excitation_level",
    "filter_derivatives",
    "gain_schedule",
    "get_mapping_set",
    "get_plant",
    "jacobian_condition",
    "load_scenario",
    "metrics_from_csv",
    "reconstruct_state",
    "register_mapping_set",
    "register_plant",
    "regress",
    "regressor",
    "rk4_step",
    "run",
    "select_ab",
    "similarity_residuals",
    "simulate",
    "theta_regression",
    "ti_law",
    "ti_regression",
    "verify_mappings",
]
