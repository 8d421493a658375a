"""Selfish routing under bounded free-flow deviation.

Congestion games with polynomial latencies, an equilibrium/optimum solver,
tight Price-of-Anarchy bounds parametrized by the free-flow ratio θ,
worst-case instance generators and a trace-based θ estimator.
"""

from .game import (
    CongestionGame,
    FlowProfile,
    compute_theta,
    edge_loads,
    free_flow_cost,
    is_theta_free_flow,
    strategy_cost,
    total_latency,
)
from .latency import LatencyFunction, eval_latency, homogenize, monomial, parse_latency
from .network import Commodity, NetworkCongestionGame

__all__ = [
    "Commodity",
    "CongestionGame",
    "FlowProfile",
    "LatencyFunction",
    "NetworkCongestionGame",
    "compute_theta",
    "edge_loads",
    "eval_latency",
    "free_flow_cost",
    "homogenize",
    "is_theta_free_flow",
    "monomial",
    "parse_latency",
    "strategy_cost",
    "total_latency",
]
