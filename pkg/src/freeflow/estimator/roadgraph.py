"""Road networks with free-flow edge times, CSV ingestion and routing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as cs_dijkstra

from .. import paths

EARTH_RADIUS_M = 6_371_008.8

DEFAULT_ROAD_SPEEDS = {"expressway": 25.0, "arterial": 16.7, "local": 13.9}


class UnreachableError(ValueError):
    pass


def equirectangular_m(lat1, lon1, lat2, lon2):
    """Equirectangular distance in meters (scalars or arrays, degrees in)."""
    phi1, phi2 = np.radians(lat1), np.radians(lat2)
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    x = dlam * np.cos((phi1 + phi2) / 2.0)
    y = phi2 - phi1
    out = EARTH_RADIUS_M * np.hypot(x, y)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class RoadEdge:
    id: str
    source: str
    target: str
    length_m: float
    speed_mps: float
    road_type: str = ""

    @property
    def free_flow_s(self) -> float:
        return self.length_m / self.speed_mps


@dataclass(frozen=True)
class RoadGraph:
    """Immutable road graph; every edge can be driven in both directions.

    ``nodes`` maps node id to ``(lat, lon)`` in degrees.
    """

    nodes: Mapping[str, tuple[float, float]]
    edges: tuple[RoadEdge, ...]
    node_ids: tuple[str, ...] = field(init=False, repr=False)
    node_index: dict = field(init=False, repr=False)
    xy: np.ndarray = field(init=False, repr=False)
    _adj: dict = field(init=False, repr=False)
    _matrix: csr_matrix = field(init=False, repr=False)

    def __post_init__(self) -> None:
        nodes = {str(k): (float(v[0]), float(v[1])) for k, v in dict(self.nodes).items()}
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = tuple(sorted(nodes))
        index = {n: i for i, n in enumerate(ids)}
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "node_index", index)
        lat = np.array([nodes[n][0] for n in ids])
        lon = np.array([nodes[n][1] for n in ids])
        self_lat0 = float(lat.mean()) if len(lat) else 0.0
        object.__setattr__(self, "lat0", self_lat0)
        xy = np.column_stack(
            [
                EARTH_RADIUS_M * np.radians(lon) * math.cos(math.radians(self_lat0)),
                EARTH_RADIUS_M * np.radians(lat),
            ]
        ) if len(ids) else np.zeros((0, 2))
        object.__setattr__(self, "xy", xy)

        seen = set()
        adj: dict = {n: [] for n in ids}
        best: dict = {}
        for j, e in enumerate(self.edges):
            if e.id in seen:
                raise ValueError(f"duplicate edge id {e.id!r}")
            seen.add(e.id)
            if e.source not in index or e.target not in index:
                raise ValueError(f"edge {e.id!r} references an unknown node")
            if not (e.length_m > 0.0 and math.isfinite(e.length_m)):
                raise ValueError(f"edge {e.id!r}: length must be > 0")
            if not (e.speed_mps > 0.0 and math.isfinite(e.speed_mps)):
                raise ValueError(f"edge {e.id!r}: speed must be > 0")
            t = e.free_flow_s
            adj[e.source].append((e.target, t, j))
            adj[e.target].append((e.source, t, j))
            for a, b in ((e.source, e.target), (e.target, e.source)):
                key = (index[a], index[b])
                if key not in best or t < best[key]:
                    best[key] = t
        object.__setattr__(self, "_adj", adj)
        if best:
            rows, cols = zip(*best)
            mat = csr_matrix((list(best.values()), (rows, cols)), shape=(len(ids), len(ids)))
        else:
            mat = csr_matrix((len(ids), len(ids)))
        object.__setattr__(self, "_matrix", mat)
        ex = np.array([self.xy[index[e.source]] for e in self.edges]).reshape(-1, 2)
        ey = np.array([self.xy[index[e.target]] for e in self.edges]).reshape(-1, 2)
        object.__setattr__(self, "_seg_a", ex)
        object.__setattr__(self, "_seg_b", ey)
        object.__setattr__(self, "free_flow", np.array([e.free_flow_s for e in self.edges]))

    # -- geometry -----------------------------------------------------------

    def project(self, lat, lon) -> np.ndarray:
        """Local planar coordinates in meters (equirectangular about the graph's mean latitude)."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        return np.stack(
            [
                EARTH_RADIUS_M * np.radians(lon) * math.cos(math.radians(self.lat0)),
                EARTH_RADIUS_M * np.radians(lat),
            ],
            axis=-1,
        )

    def node_distance(self, a: str, b: str) -> float:
        (la, lo), (lb, lob) = self.nodes[a], self.nodes[b]
        return equirectangular_m(la, lo, lb, lob)

    def nearest_node(self, lat: float, lon: float) -> str:
        p = self.project(lat, lon)
        d = np.hypot(*(self.xy - p).T)
        return self.node_ids[int(np.argmin(d))]

    def nearest_edges(self, points_xy: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nearest edge per point: ``(edge index, distance m, position along edge in [0, 1])``.

        Ties go to the lowest edge index.
        """
        pts = np.asarray(points_xy, dtype=float).reshape(-1, 2)
        a, b = self._seg_a, self._seg_b
        ab = b - a
        denom = np.einsum("ij,ij->i", ab, ab)
        denom = np.where(denom > 0.0, denom, 1.0)
        idx = np.empty(len(pts), dtype=np.int64)
        dist = np.empty(len(pts))
        pos = np.empty(len(pts))
        step = max(1, 200_000 // max(len(a), 1))
        for s in range(0, len(pts), step):
            p = pts[s : s + step]
            ap = p[:, None, :] - a[None, :, :]
            t = np.clip(np.einsum("pej,ej->pe", ap, ab) / denom, 0.0, 1.0)
            diff = ap - t[..., None] * ab[None, :, :]
            d2 = np.einsum("pej,pej->pe", diff, diff)
            j = np.argmin(d2, axis=1)
            rows = np.arange(len(p))
            idx[s : s + step] = j
            dist[s : s + step] = np.sqrt(d2[rows, j])
            pos[s : s + step] = t[rows, j]
        return idx, dist, pos

    # -- routing ------------------------------------------------------------------

    def _check_node(self, n: str) -> int:
        if n not in self.node_index:
            raise KeyError(f"unknown node {n!r}")
        return self.node_index[n]

    def free_flow_times_from(self, origin: str) -> np.ndarray:
        oi = self._check_node(origin)
        return cs_dijkstra(self._matrix, directed=True, indices=oi)

    def shortest_route(self, origin: str, destination: str) -> tuple[float, list[str], list[int]]:
        """Fastest free-flow route; ties go to the lexicographically smallest node sequence."""
        self._check_node(origin)
        self._check_node(destination)
        try:
            return paths.shortest_path(self._adj, origin, destination)
        except paths.NoPathError as exc:
            raise UnreachableError(str(exc)) from None

    def edge_between(self, a: str, b: str) -> int:
        cands = [(t, j) for v, t, j in self._adj.get(a, ()) if v == b]
        if not cands:
            raise KeyError(f"no edge between {a!r} and {b!r}")
        return min(cands)[1]


def best_free_flow_time(graph: RoadGraph, origin: str, destination: str) -> float:
    """Free-flow travel time of the fastest route, in seconds."""
    graph._check_node(destination)
    t = float(graph.free_flow_times_from(origin)[graph.node_index[destination]])
    if math.isinf(t):
        raise UnreachableError(f"{destination!r} is unreachable from {origin!r}")
    return t


# -- CSV ingestion --------------------------------------------------------------------


def _read_csv(path: str | Path, required: Iterable[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(required) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return list(reader)


def load_road_graph(
    nodes_csv: str | Path, edges_csv: str | Path, road_speeds: Mapping[str, float] | None = None
) -> RoadGraph:
    """Read ``id,lat,lon`` nodes and ``id,from,to,length_m,speed_mps,road_type`` edges.

    A blank ``speed_mps`` falls back to the road-type speed table.
    """
    speeds = dict(DEFAULT_ROAD_SPEEDS if road_speeds is None else road_speeds)
    nodes = {}
    for row in _read_csv(nodes_csv, ("id", "lat", "lon")):
        try:
            nodes[row["id"]] = (float(row["lat"]), float(row["lon"]))
        except ValueError as exc:
            raise ValueError(f"{nodes_csv}: bad node row {row}: {exc}") from None
    edges = []
    for row in _read_csv(edges_csv, ("id", "from", "to", "length_m")):
        rtype = (row.get("road_type") or "").strip()
        raw = (row.get("speed_mps") or "").strip()
        try:
            if raw:
                speed = float(raw)
            elif rtype in speeds:
                speed = speeds[rtype]
            else:
                raise ValueError(f"no speed and unknown road type {rtype!r}")
            edges.append(RoadEdge(row["id"], row["from"], row["to"], float(row["length_m"]), speed, rtype))
        except ValueError as exc:
            raise ValueError(f"{edges_csv}: bad edge row {row}: {exc}") from None
    return RoadGraph(nodes, tuple(edges))


def write_road_graph(graph: RoadGraph, nodes_csv: str | Path, edges_csv: str | Path) -> None:
    with open(nodes_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "lat", "lon"])
        for n in graph.node_ids:
            lat, lon = graph.nodes[n]
            w.writerow([n, repr(lat), repr(lon)])
    with open(edges_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "from", "to", "length_m", "speed_mps", "road_type"])
        for e in graph.edges:
            w.writerow([e.id, e.source, e.target, repr(e.length_m), repr(e.speed_mps), e.road_type])
