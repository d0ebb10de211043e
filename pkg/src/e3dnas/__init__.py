"""Training-free, entropy-guided architecture search for efficient 3D CNNs.

The package scores 3D CNN architectures analytically (no training, no
data): the spatio-temporal entropy score ranks candidate networks by the
log variance a Gaussian-initialized network propagates to its final
feature map, refined per layer by how well the kernel shape matches the
feature-map shape.  An evolutionary search maximizes the score under a
MAC budget, and a Monte-Carlo forward simulator independently validates
the variance propagation the scores rely on.
"""

from .arch import (
    ArchitectureError,
    Block,
    Classifier,
    ConvLayer,
    Kernel3d,
    LayerKind,
    NetworkSpec,
    SchemaError,
    Shape3d,
    Stage,
    flatten,
    from_json,
    propagate_shapes,
    to_json,
)
from .backends import BACKEND_ENV, BACKENDS, active_backend
from .cost import CostReport, cost
from .entropy import (
    LogBase,
    Metric,
    ScoreBreakdown,
    ScoreConfig,
    homo_score,
    refinement,
    st_score,
)
from .oracle import MomentReport, SimConfig, SimReport, SimulationCapError, moment_check, simulate
from .presets import PRESET_NAMES, get_preset
from .search import (
    Candidate,
    ConfigError,
    MutationSpaces,
    SearchConfig,
    SearchResult,
    evolve,
    mutate,
)

__version__ = "0.1.0"

__all__ = [
    "ArchitectureError",
    "BACKEND_ENV",
    "BACKENDS",
    "Block",
    "Candidate",
    "Classifier",
    "ConfigError",
    "ConvLayer",
    "CostReport",
    "Kernel3d",
    "LayerKind",
    "LogBase",
    "Metric",
    "MomentReport",
    "MutationSpaces",
    "NetworkSpec",
    "PRESET_NAMES",
    "SchemaError",
    "ScoreBreakdown",
    "ScoreConfig",
    "SearchConfig",
    "SearchResult",
    "Shape3d",
    "SimConfig",
    "SimReport",
    "SimulationCapError",
    "Stage",
    "active_backend",
    "cost",
    "evolve",
    "flatten",
    "from_json",
    "get_preset",
    "homo_score",
    "moment_check",
    "mutate",
    "propagate_shapes",
    "refinement",
    "simulate",
    "st_score",
    "to_json",
    "__version__",
]
