"""Per-trip θ estimation from road graphs and location traces."""

from .matching import (
    DEFAULT_SMALL_GAP_M,
    DEFAULT_SNAP_RADIUS_M,
    Gap,
    GapReport,
    MatchedEdge,
    MatchError,
    MatchResult,
    Trace,
    data_free_flow_time,
    match_trace,
)
from .pipeline import (
    DeviationSummary,
    EstimatorConfig,
    TripEstimate,
    deviation_distribution,
    estimate_all,
    estimate_trip,
    load_traces_csv,
    write_estimates_csv,
    write_traces_csv,
)
from .roadgraph import (
    DEFAULT_ROAD_SPEEDS,
    RoadEdge,
    RoadGraph,
    UnreachableError,
    best_free_flow_time,
    equirectangular_m,
    load_road_graph,
    write_road_graph,
)
from .synth import grid_detour_route, grid_node, grid_road_graph, route_free_flow_time, synth_fleet, synth_trace

__all__ = [
    "DEFAULT_ROAD_SPEEDS",
    "DEFAULT_SMALL_GAP_M",
    "DEFAULT_SNAP_RADIUS_M",
    "DeviationSummary",
    "EstimatorConfig",
    "Gap",
    "GapReport",
    "MatchError",
    "MatchResult",
    "MatchedEdge",
    "RoadEdge",
    "RoadGraph",
    "Trace",
    "TripEstimate",
    "UnreachableError",
    "best_free_flow_time",
    "data_free_flow_time",
    "deviation_distribution",
    "equirectangular_m",
    "estimate_all",
    "estimate_trip",
    "grid_detour_route",
    "grid_node",
    "grid_road_graph",
    "load_road_graph",
    "load_traces_csv",
    "match_trace",
    "route_free_flow_time",
    "synth_fleet",
    "synth_trace",
    "write_estimates_csv",
    "write_road_graph",
    "write_traces_csv",
]
