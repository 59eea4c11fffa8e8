"""Cooperative base-station downlink simulation on a wraparound line network."""
from .covariance import Cluster, CovarianceSet, ValidationError
from .cvxcore import SolverError
from .harness import SweepConfig, SweepResult, emit_csv, paired_compare, run_sweep
from .netmodel import (
    ChannelMatrix,
    NetworkGeometry,
    derive_seed,
    exact_rates,
    pair_distance,
    rate_no_coop,
    rate_no_interference,
    sample_channel,
    wrap_distance,
)
from .precoders import (
    SingularChannelError,
    Utility,
    closest_base_clusters,
    covariance_to_precoder,
    dpc_sum_rate,
    sin_mimo_precode,
    sin_precode,
    zf_rates,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelMatrix",
    "Cluster",
    "CovarianceSet",
    "NetworkGeometry",
    "SingularChannelError",
    "SolverError",
    "SweepConfig",
    "SweepResult",
    "Utility",
    "ValidationError",
    "closest_base_clusters",
    "covariance_to_precoder",
    "derive_seed",
    "dpc_sum_rate",
    "emit_csv",
    "exact_rates",
    "pair_distance",
    "paired_compare",
    "rate_no_coop",
    "rate_no_interference",
    "run_sweep",
    "sample_channel",
    "sin_mimo_precode",
    "sin_precode",
    "wrap_distance",
    "zf_rates",
]
