"""Bayesian updating of spatially fluctuating material properties in
coupled heat and moisture transport: nonlinear finite-element forward
model, truncated eigenexpansion of lognormal random fields, and
Metropolis posterior sampling against noisy sensor data.
"""

from .config import ExperimentConfig, PRESETS, load_config
from .errors import (
    ConfigError,
    DataError,
    DegenerateParametersError,
    DivergedStepError,
    HygroError,
    NumericalError,
    SingularStateError,
)
from .experiment import run_experiment
from .fem import SimState, SolverConfig, Trajectory
from .inference import Chain, ObservationSet, chain_diagnostics, metropolis_hastings
from .material import LocalState, MaterialParams
from .mesh import Mesh, build_mesh
from .randfield import (
    CovarianceSpec,
    KLEBasis,
    LatentVector,
    LognormalMoments,
    ParameterFields,
)

__version__ = "0.1.0"

__all__ = [
    "Chain",
    "ConfigError",
    "CovarianceSpec",
    "DataError",
    "DegenerateParametersError",
    "DivergedStepError",
    "ExperimentConfig",
    "HygroError",
    "KLEBasis",
    "LatentVector",
    "LocalState",
    "LognormalMoments",
    "MaterialParams",
    "Mesh",
    "NumericalError",
    "ObservationSet",
    "PRESETS",
    "ParameterFields",
    "SimState",
    "SingularStateError",
    "SolverConfig",
    "Trajectory",
    "build_mesh",
    "chain_diagnostics",
    "load_config",
    "metropolis_hastings",
    "run_experiment",
    "__version__",
]
