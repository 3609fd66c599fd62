"""Multi-objective guided discrete flow matching over token sequences."""

__version__ = "0.1.0"

from .core import (
    RunConfig,
    ScoreFunction,
    Vocabulary,
    as_sequence,
    evaluate_all,
    hamming_distance,
    shannon_entropy,
)
from .dfm import PolynomialScheduler, TabularPosterior, UniformPosterior
from .errors import (
    CapacityError,
    ConfigError,
    IntegrityError,
    InvalidArgumentError,
    InvariantError,
)
from .sampler import Trajectory, batch_generate, mog_dfm_run
from .weights import WeightLattice, das_dennis, sample_weight

__all__ = [
    "CapacityError",
    "ConfigError",
    "IntegrityError",
    "InvalidArgumentError",
    "InvariantError",
    "PolynomialScheduler",
    "RunConfig",
    "ScoreFunction",
    "TabularPosterior",
    "Trajectory",
    "UniformPosterior",
    "Vocabulary",
    "WeightLattice",
    "__version__",
    "as_sequence",
    "batch_generate",
    "das_dennis",
    "evaluate_all",
    "hamming_distance",
    "mog_dfm_run",
    "sample_weight",
    "shannon_entropy",
]
