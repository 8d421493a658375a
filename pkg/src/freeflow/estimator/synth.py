"""Synthetic road grids, traces and fleets with known ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .matching import Trace
from .roadgraph import EARTH_RADIUS_M, RoadEdge, RoadGraph

_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


def grid_node(r: int, c: int) -> str:
    return f"{r:03d}_{c:03d}"


def grid_road_graph(
    rows: int,
    cols: int,
    spacing_m: float = 200.0,
    speed_mps: float = 13.9,
    road_type: str = "local",
    lat0: float = 1.30,
    lon0: float = 103.80,
) -> RoadGraph:
    """Uniform ``rows x cols`` street grid; node ``(r, c)`` sits ``r`` blocks north and ``c`` east."""
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise ValueError("grid needs at least two nodes")
    dlat = spacing_m / _M_PER_DEG
    dlon = spacing_m / (_M_PER_DEG * math.cos(math.radians(lat0)))
    nodes = {grid_node(r, c): (lat0 + r * dlat, lon0 + c * dlon) for r in range(rows) for c in range(cols)}
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append(RoadEdge(f"h{r}_{c}", grid_node(r, c), grid_node(r, c + 1), spacing_m, speed_mps, road_type))
            if r + 1 < rows:
                edges.append(RoadEdge(f"v{r}_{c}", grid_node(r, c), grid_node(r + 1, c), spacing_m, speed_mps, road_type))
    return RoadGraph(nodes, tuple(edges))


def route_edges(graph: RoadGraph, route: Sequence[str]) -> list[int]:
    if len(route) < 2:
        raise ValueError("route needs at least two nodes")
    if len(set(route)) != len(route):
        raise ValueError("route revisits a node")
    return [graph.edge_between(a, b) for a, b in zip(route, route[1:])]


def route_free_flow_time(graph: RoadGraph, route: Sequence[str]) -> float:
    return float(sum(graph.edges[j].free_flow_s for j in route_edges(graph, route)))


def synth_trace(
    graph: RoadGraph,
    route: Sequence[str],
    sample_interval: float = 13.0,
    noise_std: float = 0.0,
    drop_prob: float = 0.0,
    rng: np.random.Generator | int | None = None,
    trip_id: str = "",
) -> Trace:
    """Drive ``route`` (a node sequence) at each edge's free-flow speed and sample it.

    Samples are taken every ``sample_interval`` seconds from departure, plus one
    at arrival. Each sample gets isotropic Gaussian noise of ``noise_std``
    meters; interior samples are dropped independently with ``drop_prob``.
    """
    if not sample_interval > 0:
        raise ValueError("sample_interval must be > 0")
    if not 0.0 <= drop_prob < 1.0:
        raise ValueError("drop_prob must be in [0, 1)")
    rng = np.random.default_rng(rng)
    ejs = route_edges(graph, route)
    durations = np.array([graph.edges[j].free_flow_s for j in ejs])
    arrive = np.concatenate([[0.0], np.cumsum(durations)])
    total = arrive[-1]
    times = np.arange(0.0, total, sample_interval)
    if total - times[-1] > 1e-9:
        times = np.append(times, total)
    seg = np.clip(np.searchsorted(arrive, times, side="right") - 1, 0, len(ejs) - 1)
    frac = np.clip((times - arrive[seg]) / durations[seg], 0.0, 1.0)
    coords = np.array([graph.nodes[n] for n in route])
    lat = coords[seg, 0] + frac * (coords[seg + 1, 0] - coords[seg, 0])
    lon = coords[seg, 1] + frac * (coords[seg + 1, 1] - coords[seg, 1])
    if noise_std > 0.0:
        lat = lat + rng.normal(0.0, noise_std, len(lat)) / _M_PER_DEG
        lon = lon + rng.normal(0.0, noise_std, len(lon)) / (_M_PER_DEG * np.cos(np.radians(lat)))
    keep = np.ones(len(times), dtype=bool)
    if drop_prob > 0.0 and len(times) > 2:
        keep[1:-1] = rng.random(len(times) - 2) >= drop_prob
    return Trace(times[keep], lat[keep], lon[keep], route[0], route[-1], trip_id)


def grid_detour_route(r: int, c0: int, c1: int, h: int, vertical: bool = False) -> list[str]:
    """Go ``h`` blocks sideways, along, and back; free-flow ratio ``1 + 2h/|c1 - c0|`` on a uniform grid.

    ``h`` may be negative (detour to the other side). ``vertical`` swaps the
    roles of rows and columns.
    """
    if c0 == c1:
        raise ValueError("detour needs distinct endpoints")
    step = 1 if c1 > c0 else -1
    side = 1 if h >= 0 else -1
    cells = [(r + side * i, c0) for i in range(abs(h) + 1)]
    cells += [(r + h, c) for c in range(c0 + step, c1 + step, step)]
    cells += [(r + side * i, c1) for i in range(abs(h) - 1, -1, -1)]
    if vertical:
        cells = [(c, rr) for rr, c in cells]
    return [grid_node(a, b) for a, b in cells]


@dataclass(frozen=True)
class SyntheticFleet:
    graph: RoadGraph
    traces: tuple[Trace, ...]
    planted_theta: tuple[float, ...]


def _detour_shapes(theta: float, rows: int, cols: int) -> list[tuple[int, int]]:
    """All ``(span, h)`` with ``2h = theta * span`` that fit in the grid."""
    out = []
    for span in range(1, max(rows, cols)):
        h2 = theta * span
        h = round(h2 / 2.0)
        if h >= 1 and abs(2 * h - h2) < 1e-9 and h < min(rows, cols) and span < min(rows, cols):
            out.append((span, h))
    return out


def synth_fleet(
    rows: int = 20,
    cols: int = 20,
    n_trips: int = 100,
    mixture: Sequence[tuple[float, float]] = ((0.0, 1.0),),
    sample_interval: float = 4.0,
    noise_std: float = 0.0,
    drop_prob: float = 0.0,
    seed: int = 0,
    spacing_m: float = 200.0,
    speed_mps: float = 13.9,
) -> SyntheticFleet:
    """Trips on a uniform grid with planted θ values drawn from ``mixture`` (``(theta, weight)`` pairs).

    θ = 0 trips follow a fastest route between random nodes; other trips are
    rectangular detours whose exact θ is ``2h / span``.
    """
    rng = np.random.default_rng(seed)
    graph = grid_road_graph(rows, cols, spacing_m, speed_mps)
    thetas = np.array([m[0] for m in mixture], dtype=float)
    weights = np.array([m[1] for m in mixture], dtype=float)
    if np.any(thetas < 0) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("mixture needs nonnegative thetas and positive total weight")
    shapes = {float(t): _detour_shapes(float(t), rows, cols) for t in thetas if t > 0}
    for t, sh in shapes.items():
        if not sh:
            raise ValueError(f"theta {t} cannot be planted exactly on a {rows}x{cols} grid")
    picks = rng.choice(len(thetas), size=n_trips, p=weights / weights.sum())
    traces, planted = [], []
    for k, pi in enumerate(picks):
        theta = float(thetas[pi])
        if theta == 0.0:
            while True:
                a = grid_node(int(rng.integers(rows)), int(rng.integers(cols)))
                b = grid_node(int(rng.integers(rows)), int(rng.integers(cols)))
                if a != b:
                    break
            route = graph.shortest_route(a, b)[1]
        else:
            span, h = shapes[theta][int(rng.integers(len(shapes[theta])))]
            vertical = bool(rng.integers(2))
            n_along, n_across = (rows, cols) if vertical else (cols, rows)
            c0 = int(rng.integers(n_along - span))
            c1 = c0 + span
            if rng.integers(2):
                c0, c1 = c1, c0
            sign = 1 if rng.integers(2) else -1
            lo = max(0, -sign * h)
            hi = n_across - max(0, sign * h)
            r = int(rng.integers(lo, hi))
            route = grid_detour_route(r, c0, c1, sign * h, vertical)
        traces.append(synth_trace(graph, route, sample_interval, noise_std, drop_prob, rng, f"trip{k:05d}"))
        planted.append(theta)
    return SyntheticFleet(graph, tuple(traces), tuple(planted))
