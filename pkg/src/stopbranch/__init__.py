"""Transition laws of multitype branching processes stopped on entry into a set.

The configuration-level chain lives on a truncated space; transition
probabilities come from a jump-count series (:mod:`.feller`) and from an
independent uniformization oracle (:mod:`.oracle`), Monte Carlo from
:mod:`.simulator`, and identity checks from :mod:`.verifier`.
"""

from .config_space import (
    EMPTY,
    NO_STOP,
    Configuration,
    StoppingSet,
    TestFunction,
    TruncatedSpace,
    TypeSpace,
    enumerate_truncated,
    pairing,
)
from .errors import (
    CapacityError,
    ContractViolation,
    DomainError,
    ModelError,
    NonConvergenceError,
    StopBranchError,
)
from .feller import SeriesControl, solve, solve_matrix, solve_stopped
from .generator import GeneratorMatrix, Modulation, ParticleLaw, birth_death_law, build_generator

__version__ = "0.1.0"

__all__ = [
    "EMPTY",
    "NO_STOP",
    "Configuration",
    "StoppingSet",
    "TestFunction",
    "TruncatedSpace",
    "TypeSpace",
    "enumerate_truncated",
    "pairing",
    "CapacityError",
    "ContractViolation",
    "DomainError",
    "ModelError",
    "NonConvergenceError",
    "StopBranchError",
    "SeriesControl",
    "solve",
    "solve_matrix",
    "solve_stopped",
    "GeneratorMatrix",
    "Modulation",
    "ParticleLaw",
    "birth_death_law",
    "build_generator",
    "__version__",
]
