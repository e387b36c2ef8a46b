"""
Distributed forward-backward Bregman splitting (D-FBBS) for consensus
optimization over fixed and randomly failing networks, with the baselines
it is usually compared against and a seeded, CSV-emitting experiment harness.
"""

from .costs import (AbsoluteAgentCost, CostModel, LinearAgentCost, QuadraticAgentCost,
                    SensorFusionProblem, generate_sensor_fusion)
from .metrics import IterationRecord, fixed_point_residual, lyapunov_v0
from .oracle import SaddlePoint, centralized_solve
from .solvers import (ALGORITHMS, ConfigurationError, MultiAgentState, SolverConfig,
                      StochasticNetwork, Trace, run, stepsize_bound)
from .topology import (Graph, LinkFailureModel, SpectralReport, metropolis_weights,
                       random_geometric_graph, sample_network, validate_weights)

__version__ = "0.1.0"

__all__ = [
    "ALGORITHMS", "AbsoluteAgentCost", "ConfigurationError", "CostModel", "Graph",
    "IterationRecord", "LinearAgentCost", "LinkFailureModel", "MultiAgentState",
    "QuadraticAgentCost", "SaddlePoint", "SensorFusionProblem", "SolverConfig",
    "SpectralReport", "StochasticNetwork", "Trace", "centralized_solve",
    "fixed_point_residual", "generate_sensor_fusion", "lyapunov_v0", "metropolis_weights",
    "random_geometric_graph", "run", "sample_network", "stepsize_bound", "validate_weights",
]
