"""Label-setting shortest paths with deterministic tie-breaking.

Graphs are plain adjacency mappings ``node -> [(neighbour, weight, edge_key), ...]``
with nonnegative weights. Both network congestion games and road graphs
build these on demand.
"""

from __future__ import annotations

import heapq
import math
from itertools import count
from typing import Hashable, Mapping, Sequence

Adjacency = Mapping[Hashable, Sequence[tuple[Hashable, float, Hashable]]]


class NoPathError(ValueError):
    pass


def dijkstra(adj: Adjacency, source: Hashable, target: Hashable | None = None):
    """Distances and hop counts from ``source``.

    Returns ``(dist, hops)``. Equal-cost labels are ordered by hop count so
    that zero-weight edges never produce cyclic predecessor chains. With a
    ``target`` the search stops as soon as it is settled.
    """
    dist = {source: 0.0}
    hops = {source: 0}
    done = set()
    tie = count()
    heap = [(0.0, 0, next(tie), source)]
    while heap:
        d, h, _, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        if u == target:
            break
        for v, w, _ in adj.get(u, ()):
            if w < 0:
                raise ValueError("negative edge weight")
            nd = d + w
            old = dist.get(v)
            if old is None or nd < old or (nd == old and h + 1 < hops[v]):
                dist[v] = nd
                hops[v] = h + 1
                heapq.heappush(heap, (nd, h + 1, next(tie), v))
    return {u: dist[u] for u in done}, {u: hops[u] for u in done}


def reverse(adj: Adjacency) -> dict:
    radj: dict = {}
    for u, nbrs in adj.items():
        for v, w, key in nbrs:
            radj.setdefault(v, []).append((u, w, key))
    return radj


def shortest_path(adj: Adjacency, source: Hashable, target: Hashable, radj: Adjacency | None = None):
    """Shortest ``source -> target`` path.

    Among equal-cost paths the one with the fewest edges wins, and among
    those the lexicographically smallest node sequence (parallel edges are
    split by edge key). Returns ``(cost, nodes, edge_keys)``.
    """
    if radj is None:
        radj = reverse(adj)
    to_target, hops = dijkstra(radj, target)
    if source not in to_target:
        raise NoPathError(f"no path from {source!r} to {target!r}")
    nodes = [source]
    edges = []
    u = source
    while u != target:
        du = to_target[u]
        tol = 1e-12 * max(1.0, du)
        best = None
        for v, w, key in adj.get(u, ()):
            if v not in to_target or hops[v] != hops[u] - 1:
                continue
            if abs(w + to_target[v] - du) > tol:
                continue
            cand = (v, key, w)
            if best is None or (v, key) < (best[0], best[1]):
                best = cand
        if best is None:  # pragma: no cover - guarded by the hop labels
            raise NoPathError("inconsistent shortest-path labels")
        u = best[0]
        nodes.append(u)
        edges.append(best[1])
    return to_target[source], nodes, edges


def shortest_distance(adj: Adjacency, source: Hashable, target: Hashable) -> float:
    dist, _ = dijkstra(adj, source, target)
    if target not in dist:
        raise NoPathError(f"no path from {source!r} to {target!r}")
    return dist[target]


def simple_paths(adj: Adjacency, source: Hashable, target: Hashable, limit: int = 10_000):
    """Enumerate simple paths as edge-key lists (depth first, bounded)."""
    out = []
    stack = [(source, [source], [])]
    while stack:
        u, nodes, edges = stack.pop()
        if u == target:
            out.append(edges)
            if len(out) > limit:
                raise ValueError(f"more than {limit} simple paths")
            continue
        for v, _, key in reversed(list(adj.get(u, ()))):
            if v not in nodes:
                stack.append((v, nodes + [v], edges + [key]))
    return out


def path_cost(weights: Mapping[Hashable, float], edges: Sequence[Hashable]) -> float:
    return math.fsum(weights[e] for e in edges)
