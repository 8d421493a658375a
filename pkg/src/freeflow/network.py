"""Network congestion games: strategies are source-sink paths of a digraph."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Hashable, Iterable, Sequence

import numpy as np

from . import paths
from .latency import LatencyFunction

PATH_LIMIT = 10_000


@dataclass(frozen=True)
class Commodity:
    source: Hashable
    sink: Hashable
    demand: float


@dataclass(frozen=True)
class NetworkCongestionGame:
    """Directed multigraph with a latency per edge and a list of commodities.

    Paths are never enumerated during solving; the solver calls
    :meth:`best_response`, a shortest-path oracle. Enumeration is only used
    by the small-instance flags (:meth:`free_flow_range`,
    :attr:`is_path_disjoint`) and is capped at ``PATH_LIMIT`` paths.
    """

    nodes: tuple
    edges: tuple[tuple[str, Hashable, Hashable], ...]
    latencies: tuple[LatencyFunction, ...]
    commodities: tuple[Commodity, ...]
    index: dict = field(init=False, repr=False, compare=False)
    _out: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple((str(e), u, v) for e, u, v in self.edges))
        object.__setattr__(self, "latencies", tuple(self.latencies))
        object.__setattr__(
            self, "commodities", tuple(c if isinstance(c, Commodity) else Commodity(*c) for c in self.commodities)
        )
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise ValueError("node ids must be unique")
        if len(self.latencies) != len(self.edges):
            raise ValueError("one latency function per edge is required")
        ids = [e for e, _, _ in self.edges]
        if len(set(ids)) != len(ids):
            raise ValueError("edge ids must be unique")
        out: dict = {u: [] for u in self.nodes}
        for j, (eid, u, v) in enumerate(self.edges):
            if u not in node_set or v not in node_set:
                raise ValueError(f"edge {eid!r} references an unknown node")
            if u == v:
                raise ValueError(f"edge {eid!r} is a self-loop")
            out[u].append((v, j))
        object.__setattr__(self, "index", {e: j for j, e in enumerate(ids)})
        object.__setattr__(self, "_out", out)
        unit = self._adjacency(np.ones(len(self.edges)))
        for c in self.commodities:
            if not (c.demand >= 0.0 and math.isfinite(c.demand)):
                raise ValueError(f"demand must be finite and >= 0, got {c.demand}")
            if c.source not in node_set or c.sink not in node_set:
                raise ValueError(f"commodity {c.source!r}->{c.sink!r} references an unknown node")
            if c.source == c.sink:
                raise ValueError("commodity source and sink must differ")
            dist, _ = paths.dijkstra(unit, c.source, c.sink)
            if c.sink not in dist:
                raise ValueError(f"no path from {c.source!r} to {c.sink!r}")

    @property
    def resource_ids(self) -> tuple[str, ...]:
        return tuple(e for e, _, _ in self.edges)

    @property
    def demands(self) -> tuple[float, ...]:
        return tuple(c.demand for c in self.commodities)

    @property
    def n_types(self) -> int:
        return len(self.commodities)

    @property
    def n_resources(self) -> int:
        return len(self.edges)

    def _adjacency(self, weights: Sequence[float]) -> dict:
        return {u: [(v, float(weights[j]), j) for v, j in nbrs] for u, nbrs in self._out.items()}

    def strategy_resources(self, i: int, key) -> tuple[int, ...]:
        """Validate that ``key`` is a source-sink path of commodity ``i``."""
        c = self.commodities[i]
        key = tuple(int(j) for j in key)
        at = c.source
        seen = {at}
        for j in key:
            if not 0 <= j < len(self.edges):
                raise KeyError(f"unknown edge index {j}")
            _, u, v = self.edges[j]
            if u != at or v in seen:
                raise KeyError(f"{key!r} is not a simple path of commodity {i}")
            seen.add(v)
            at = v
        if at != c.sink or not key:
            raise KeyError(f"{key!r} does not connect {c.source!r} to {c.sink!r}")
        return key

    def best_response(self, i: int, costs: np.ndarray, adj: dict | None = None) -> tuple[tuple[int, ...], float]:
        c = self.commodities[i]
        if adj is None:
            adj = self._adjacency(costs)
        _, _, edges = paths.shortest_path(adj, c.source, c.sink)
        return tuple(edges), math.fsum(costs[j] for j in edges)

    def best_responses(self, costs: np.ndarray) -> list[tuple[tuple[int, ...], float]]:
        """Best responses of all commodities, sharing one reversed graph per sink."""
        adj = self._adjacency(costs)
        radj = paths.reverse(adj)
        out = []
        for c in self.commodities:
            _, _, edges = paths.shortest_path(adj, c.source, c.sink, radj=radj)
            out.append((tuple(edges), math.fsum(costs[j] for j in edges)))
        return out

    def enumerate_paths(self, i: int, limit: int = PATH_LIMIT) -> list[tuple[int, ...]]:
        c = self.commodities[i]
        adj = self._adjacency(np.zeros(len(self.edges)))
        return [tuple(p) for p in paths.simple_paths(adj, c.source, c.sink, limit=limit)]

    def free_flow_range(self, i: int) -> tuple[float, float]:
        betas = [f.beta for f in self.latencies]
        ff = [math.fsum(betas[j] for j in p) for p in self.enumerate_paths(i)]
        return min(ff), max(ff)

    @property
    def is_single_source(self) -> bool:
        return len({c.source for c in self.commodities}) <= 1

    @property
    def is_path_disjoint(self) -> bool:
        """All source-sink paths pairwise share no node other than their endpoints."""
        interiors = []
        for i, c in enumerate(self.commodities):
            for p in self.enumerate_paths(i):
                interiors.append(frozenset(self.edges[j][2] for j in p[:-1]))
        return all(not (a & b) for a, b in combinations(interiors, 2))

    @classmethod
    def build(
        cls,
        nodes: Iterable,
        edges: Iterable[tuple[str, Hashable, Hashable, LatencyFunction]],
        commodities: Iterable[tuple[Hashable, Hashable, float]],
    ) -> NetworkCongestionGame:
        edges = list(edges)
        return cls(
            tuple(nodes),
            tuple((e, u, v) for e, u, v, _ in edges),
            tuple(f for *_, f in edges),
            tuple(Commodity(s, t, float(r)) for s, t, r in commodities),
        )
