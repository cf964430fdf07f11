"""Noise-averaged dynamics of a driven two-state system under dichotomous
CTRW noise, with trace-distance and entropic non-Markovianity measures.

The exact ensemble-averaged propagator is assembled in the Laplace domain
from the residence-time distribution and inverted numerically (`ilt`);
`evolve_monte_carlo` samples the same stationary process directly and serves
as an independent cross-check.  `non_markovianity` integrates the positive
variation of a distinguishability curve and `maximize_over_pairs` searches
antipodal initial pairs.  `sweep` and `cli` drive deterministic parameter
grids over all of it.
"""

from .bloch import BlochVector, TssParams
from .dynamics import (
    McConfig,
    evolve_alpha0_closed,
    evolve_laplace,
    evolve_markovian_closed,
    evolve_monte_carlo,
)
from .laplace import IltConfig, IltConvergenceError, ilt
from .measures import (
    Bounded,
    DivergentLinear,
    GridResolutionError,
    MeasureKind,
    NonMarkovResult,
    direct_jsd,
    jsd_from_td,
    maximize_over_pairs,
    nm_closed_markovian,
    non_markovianity,
    trace_distance_antipodal,
)
from .noise import (
    Biexponential,
    Exponential,
    LaplaceDomainError,
    ManifestNM,
    NoiseModel,
    NoiseStats,
    noise_stats,
)
from .propagators import propagator_fn
from .series import TimeSeries
from .sweep import ConfigError, load_config, run_sweep

__version__ = "0.1.0"

__all__ = [
    "TssParams",
    "BlochVector",
    "TimeSeries",
    "NoiseModel",
    "Exponential",
    "Biexponential",
    "ManifestNM",
    "NoiseStats",
    "noise_stats",
    "LaplaceDomainError",
    "IltConfig",
    "IltConvergenceError",
    "ilt",
    "propagator_fn",
    "McConfig",
    "evolve_laplace",
    "evolve_monte_carlo",
    "evolve_markovian_closed",
    "evolve_alpha0_closed",
    "MeasureKind",
    "NonMarkovResult",
    "Bounded",
    "DivergentLinear",
    "GridResolutionError",
    "trace_distance_antipodal",
    "jsd_from_td",
    "direct_jsd",
    "nm_closed_markovian",
    "non_markovianity",
    "maximize_over_pairs",
    "ConfigError",
    "load_config",
    "run_sweep",
    "__version__",
]
