"""Snap location traces to road edges, orient them, and price the matched route."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .roadgraph import RoadGraph, UnreachableError, best_free_flow_time, equirectangular_m

DEFAULT_SNAP_RADIUS_M = 30.0
DEFAULT_SMALL_GAP_M = 300.0

# Orientation penalty (meters) that breaks exact ties in favour of the
# direction the points actually progress along the edge.
_TIE_PENALTY_M = 1e-6


class MatchError(ValueError):
    pass


@dataclass(frozen=True)
class Trace:
    """Time-ordered samples ``(t, lat, lon)``; origin/destination default to the nearest nodes."""

    times: np.ndarray
    lats: np.ndarray
    lons: np.ndarray
    origin: str | None = None
    destination: str | None = None
    trip_id: str = ""

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float).ravel()
        la = np.asarray(self.lats, dtype=float).ravel()
        lo = np.asarray(self.lons, dtype=float).ravel()
        if not (len(t) == len(la) == len(lo)):
            raise ValueError("trace columns differ in length")
        if len(t) == 0:
            raise ValueError("trace has no points")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError(f"trace {self.trip_id!r}: timestamps must be strictly increasing")
        if not (np.all(np.isfinite(la)) and np.all(np.isfinite(lo))):
            raise ValueError(f"trace {self.trip_id!r}: non-finite coordinates")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "lats", la)
        object.__setattr__(self, "lons", lo)

    def __len__(self) -> int:
        return len(self.times)

    def with_endpoints(self, graph: RoadGraph) -> Trace:
        o = self.origin if self.origin is not None else graph.nearest_node(self.lats[0], self.lons[0])
        d = self.destination if self.destination is not None else graph.nearest_node(self.lats[-1], self.lons[-1])
        return Trace(self.times, self.lats, self.lons, o, d, self.trip_id)


@dataclass(frozen=True)
class MatchedEdge:
    edge: int
    source: str
    target: str
    first_point: int
    last_point: int


@dataclass(frozen=True)
class Gap:
    """Break in the matched route between ``from_node`` and ``to_node``."""

    from_node: str
    to_node: str
    length_m: float
    elapsed_s: float
    speed_mps: float


@dataclass(frozen=True)
class MatchResult:
    origin: str
    destination: str
    items: tuple  # MatchedEdge | Gap, in travel order

    @property
    def edges(self) -> list[MatchedEdge]:
        return [it for it in self.items if isinstance(it, MatchedEdge)]

    @property
    def gaps(self) -> list[Gap]:
        return [it for it in self.items if isinstance(it, Gap)]

    def directed_edges(self) -> list[tuple[int, str, str]]:
        return [(m.edge, m.source, m.target) for m in self.edges]


@dataclass(frozen=True)
class GapReport:
    small_lengths_m: tuple[float, ...] = ()
    large_lengths_m: tuple[float, ...] = ()
    small_time_s: float = 0.0
    large_time_s: float = 0.0

    @property
    def n_small(self) -> int:
        return len(self.small_lengths_m)

    @property
    def n_large(self) -> int:
        return len(self.large_lengths_m)

    def to_json(self) -> dict:
        return {
            "n_small": self.n_small,
            "n_large": self.n_large,
            "small_lengths_m": list(self.small_lengths_m),
            "large_lengths_m": list(self.large_lengths_m),
            "small_time_s": self.small_time_s,
            "large_time_s": self.large_time_s,
        }


@dataclass
class _Run:
    edge: int
    first: int
    last: int
    positions: list = field(default_factory=list)


def _runs(edge_of: np.ndarray, pos: np.ndarray, matched: np.ndarray) -> list[_Run]:
    runs: list[_Run] = []
    for i in np.flatnonzero(matched):
        e = int(edge_of[i])
        if runs and runs[-1].edge == e:
            runs[-1].last = int(i)
            runs[-1].positions.append(float(pos[i]))
        else:
            runs.append(_Run(e, int(i), int(i), [float(pos[i])]))
    return runs


def _merge(a: _Run, b: _Run) -> _Run:
    return _Run(a.edge, a.first, b.last, a.positions + b.positions)


def _junction_node(run: _Run, graph: RoadGraph, snap_radius: float) -> str | None:
    """The end node every point of ``run`` lies within ``snap_radius`` of, if any."""
    e = graph.edges[run.edge]
    length = float(np.hypot(*(graph.xy[graph.node_index[e.target]] - graph.xy[graph.node_index[e.source]])))
    if length <= 0.0:
        return None
    if max(run.positions) * length <= snap_radius:
        return e.source
    if (1.0 - min(run.positions)) * length <= snap_radius:
        return e.target
    return None


def _clean(runs: list[_Run], graph: RoadGraph, origin: str, destination: str, snap_radius: float) -> list[_Run]:
    """Drop junction jitter.

    ``A X A`` becomes ``A``. A stub ``X`` is removed when its neighbours share a
    node that ``X`` also touches, or when all of its points sit at one end node
    that a neighbour already reaches. Before the first and after the last run the
    trip's origin and destination stand in for the missing neighbour.
    """
    ends = [frozenset((e.source, e.target)) for e in graph.edges]
    changed = True
    while changed and runs:
        changed = False
        out: list[_Run] = []
        i = 0
        while i < len(runs):
            if i + 2 < len(runs) and runs[i].edge == runs[i + 2].edge:
                out.append(_merge(runs[i], runs[i + 2]))
                i += 3
                changed = True
                continue
            prev = ends[out[-1].edge] if out else frozenset((origin,))
            last = i + 1 == len(runs)
            nxt = frozenset((destination,)) if last else ends[runs[i + 1].edge]
            here = ends[runs[i].edge]
            if here not in (prev, nxt):
                node = _junction_node(runs[i], graph, snap_radius)
                if prev & nxt & here or (node is not None and node in prev | nxt):
                    i += 1
                    changed = True
                    continue
            out.append(runs[i])
            i += 1
        # re-collapse neighbours that became equal
        merged: list[_Run] = []
        for r in out:
            if merged and merged[-1].edge == r.edge:
                merged[-1] = _merge(merged[-1], r)
            else:
                merged.append(r)
        runs = merged
    return runs


def _orient(runs: list[_Run], graph: RoadGraph, origin: str, destination: str) -> list[tuple[str, str]]:
    """Choose each edge's direction to minimise total endpoint mismatch along the sequence.

    The score of consecutive oriented edges is the distance from the first one's
    target to the next one's source (the origin and destination act as fixed
    anchors); the sequence minimum is found by dynamic programming.
    """
    xy = graph.xy
    ni = graph.node_index
    options = []
    for r in runs:
        e = graph.edges[r.edge]
        fwd, bwd = (e.source, e.target), (e.target, e.source)
        trend = r.positions[-1] - r.positions[0] if len(r.positions) > 1 else 0.0
        pen_fwd = _TIE_PENALTY_M if trend < 0 else 0.0
        pen_bwd = _TIE_PENALTY_M if trend > 0 else 0.0
        options.append(((fwd, pen_fwd), (bwd, pen_bwd)))

    def dist(a: str, b: str) -> float:
        return float(np.hypot(*(xy[ni[a]] - xy[ni[b]])))

    cost = [dist(origin, o[0][0]) + o[1] for o in options[0]]
    back: list[list[int]] = []
    for j in range(1, len(runs)):
        new, arg = [], []
        for cur, pen in options[j]:
            cands = [cost[k] + dist(options[j - 1][k][0][1], cur[0]) for k in range(2)]
            k = int(np.argmin(cands))
            new.append(cands[k] + pen)
            arg.append(k)
        cost = new
        back.append(arg)
    final = [cost[k] + dist(options[-1][k][0][1], destination) for k in range(2)]
    k = int(np.argmin(final))
    chosen = [k]
    for arg in reversed(back):
        k = arg[k]
        chosen.append(k)
    chosen.reverse()
    return [options[j][k][0] for j, k in enumerate(chosen)]


def _measured_speed(trace: Trace, i0: int, i1: int, fallback: float) -> float:
    if i1 <= i0:
        return fallback
    d = equirect_path_length(trace.lats[i0 : i1 + 1], trace.lons[i0 : i1 + 1])
    dt = trace.times[i1] - trace.times[i0]
    if d <= 0.0 or dt <= 0.0:
        return fallback
    return d / dt


def equirect_path_length(lats: np.ndarray, lons: np.ndarray) -> float:
    if len(lats) < 2:
        return 0.0
    return float(np.sum(equirectangular_m(lats[:-1], lons[:-1], lats[1:], lons[1:])))


def match_trace(graph: RoadGraph, trace: Trace, snap_radius: float = DEFAULT_SNAP_RADIUS_M) -> MatchResult:
    """Map a trace onto an ordered list of directed edges with gap markers.

    Points farther than ``snap_radius`` from every edge are left unmatched. Any
    break in continuity between consecutive matched edges (including before the
    first and after the last edge, relative to the trip's endpoints) becomes a
    :class:`Gap`.
    """
    if not snap_radius > 0.0:
        raise ValueError("snap_radius must be > 0")
    if not graph.edges:
        raise MatchError("graph has no edges")
    trace = trace.with_endpoints(graph)
    xy = graph.project(trace.lats, trace.lons)
    edge_of, dist, pos = graph.nearest_edges(xy)
    matched = dist <= snap_radius
    if not matched.any():
        raise MatchError(f"trace {trace.trip_id!r}: no point within {snap_radius} m of an edge")
    raw = _runs(edge_of, pos, matched)
    runs = _clean(raw, graph, trace.origin, trace.destination, snap_radius)

    n = len(trace)
    items: list = []

    def add_gap(a: str, b: str, i0: int, i1: int, edges_near: list[int]) -> None:
        fallback = float(np.mean([graph.edges[j].speed_mps for j in edges_near]))
        i0c, i1c = max(0, i0), min(n - 1, i1)
        items.append(
            Gap(
                a,
                b,
                graph.node_distance(a, b),
                float(trace.times[i1c] - trace.times[i0c]),
                _measured_speed(trace, i0c, i1c, fallback),
            )
        )

    if not runs:
        # Every sample sat on a junction the trip endpoints already account for.
        add_gap(trace.origin, trace.destination, 0, n - 1, [r.edge for r in raw])
        return MatchResult(trace.origin, trace.destination, tuple(items))
    oriented = _orient(runs, graph, trace.origin, trace.destination)
    if oriented[0][0] != trace.origin:
        add_gap(trace.origin, oriented[0][0], 0, runs[0].last, [runs[0].edge])
    for j, (r, (s, t)) in enumerate(zip(runs, oriented)):
        if j > 0:
            prev_r, (_, prev_t) = runs[j - 1], oriented[j - 1]
            if prev_t != s:
                add_gap(prev_t, s, prev_r.first, r.last, [prev_r.edge, r.edge])
        items.append(MatchedEdge(r.edge, s, t, r.first, r.last))
    if oriented[-1][1] != trace.destination:
        add_gap(oriented[-1][1], trace.destination, runs[-1].first, n - 1, [runs[-1].edge])
    return MatchResult(trace.origin, trace.destination, tuple(items))


def data_free_flow_time(
    graph: RoadGraph, matched: MatchResult, small_gap_threshold: float = DEFAULT_SMALL_GAP_M
) -> tuple[float, GapReport]:
    """Free-flow time of the route actually driven, filling gaps.

    Small gaps are crossed at the measured speed around them; gaps of at least
    ``small_gap_threshold`` meters are crossed along the free-flow shortest path.
    """
    if not matched.items:
        raise ValueError("matched route is empty")
    total = 0.0
    small, large = [], []
    small_t = large_t = 0.0
    for it in matched.items:
        if isinstance(it, MatchedEdge):
            total += graph.edges[it.edge].free_flow_s
        elif it.length_m < small_gap_threshold:
            dt = it.length_m / it.speed_mps
            small.append(it.length_m)
            small_t += dt
        else:
            try:
                dt = best_free_flow_time(graph, it.from_node, it.to_node)
            except UnreachableError as exc:
                raise UnreachableError(f"gap endpoints are disconnected: {exc}") from None
            large.append(it.length_m)
            large_t += dt
    total += small_t + large_t
    return total, GapReport(tuple(small), tuple(large), small_t, large_t)

