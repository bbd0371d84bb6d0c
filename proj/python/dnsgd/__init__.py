"""Decentralized normalized SGD simulator."""

from ._dnsgd import (
    METRICS_HEADER,
    ConfigError,
    MixingMatrix,
    NonFiniteState,
    Problem,
    acc_gossip,
    chebyshev_momentum,
    contraction_rho,
    make_problem,
    mixing_matrix,
    normalize_config,
    run_experiment,
    smoothness_demo,
    sweep_speedup,
    theoretical_params,
)

__version__ = "0.1.0"

__all__ = [
    "METRICS_HEADER",
    "ConfigError",
    "MixingMatrix",
    "NonFiniteState",
    "Problem",
    "acc_gossip",
    "chebyshev_momentum",
    "contraction_rho",
    "make_problem",
    "mixing_matrix",
    "normalize_config",
    "run_experiment",
    "smoothness_demo",
    "sweep_speedup",
    "theoretical_params",
]
