"""Non-atomic congestion games, flow profiles and the θ-free-flow property.

Two game representations share one small protocol used by the solver:

* ``latencies`` / ``resource_ids``: per-resource data, indexed ``0..m-1``;
* ``demands``: per-type demand;
* ``strategy_resources(i, key)``: resource indices used by strategy ``key``;
* ``best_response(i, costs)``: cheapest strategy of type ``i`` under
  per-resource costs, as ``(key, cost)``.

For :class:`CongestionGame` a strategy key is an index into the type's
explicit strategy list. For :class:`~freeflow.network.NetworkCongestionGame`
it is a tuple of edge indices forming a source-sink path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .latency import LatencyFunction

ABS_TOL = 1e-9
RATIO_RTOL = 1e-12


@dataclass(frozen=True)
class CongestionGame:
    """A congestion game with explicit strategy sets.

    ``strategies[i]`` is a tuple of strategies for type ``i`` and every
    strategy is a tuple of resource indices.
    """

    resource_ids: tuple[str, ...]
    latencies: tuple[LatencyFunction, ...]
    demands: tuple[float, ...]
    strategies: tuple[tuple[tuple[int, ...], ...], ...]
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "resource_ids", tuple(str(r) for r in self.resource_ids))
        object.__setattr__(self, "latencies", tuple(self.latencies))
        object.__setattr__(self, "demands", tuple(float(r) for r in self.demands))
        strategies = tuple(tuple(tuple(int(e) for e in s) for s in strats) for strats in self.strategies)
        object.__setattr__(self, "strategies", strategies)
        m = len(self.resource_ids)
        if len(self.latencies) != m:
            raise ValueError("one latency function per resource is required")
        if len(set(self.resource_ids)) != m:
            raise ValueError("resource ids must be unique")
        if len(self.demands) != len(strategies):
            raise ValueError("one demand per type is required")
        for i, (r, strats) in enumerate(zip(self.demands, strategies)):
            if not (r >= 0.0 and math.isfinite(r)):
                raise ValueError(f"type {i}: demand must be finite and >= 0, got {r}")
            if not strats:
                raise ValueError(f"type {i}: empty strategy set")
            for s in strats:
                if not s:
                    raise ValueError(f"type {i}: empty strategy")
                if len(set(s)) != len(s):
                    raise ValueError(f"type {i}: strategy {s} repeats a resource")
                for e in s:
                    if not 0 <= e < m:
                        raise ValueError(f"type {i}: unknown resource index {e}")
        object.__setattr__(self, "index", {r: j for j, r in enumerate(self.resource_ids)})

    @classmethod
    def build(
        cls,
        latencies: Mapping[str, LatencyFunction],
        types: Iterable[tuple[float, Sequence[Sequence[str]]]],
    ) -> CongestionGame:
        """Build from named resources and ``(demand, [[resource-id, ...], ...])`` types."""
        ids = list(latencies)
        pos = {r: j for j, r in enumerate(ids)}
        demands, strategies = [], []
        for demand, strats in types:
            try:
                strategies.append(tuple(tuple(pos[r] for r in s) for s in strats))
            except KeyError as exc:
                raise ValueError(f"strategy references unknown resource {exc.args[0]!r}") from None
            demands.append(demand)
        return cls(tuple(ids), tuple(latencies[r] for r in ids), tuple(demands), tuple(strategies))

    @property
    def n_types(self) -> int:
        return len(self.demands)

    @property
    def n_resources(self) -> int:
        return len(self.resource_ids)

    def strategy_keys(self, i: int) -> range:
        return range(len(self.strategies[i]))

    def strategy_resources(self, i: int, key: int) -> tuple[int, ...]:
        strats = self.strategies[i]
        if not isinstance(key, (int, np.integer)) or not 0 <= key < len(strats):
            raise KeyError(f"type {i} has no strategy {key!r}")
        return strats[key]

    def best_response(self, i: int, costs: np.ndarray) -> tuple[int, float]:
        vals = [math.fsum(costs[e] for e in s) for s in self.strategies[i]]
        j = int(np.argmin(vals))
        return j, vals[j]

    def free_flow_range(self, i: int) -> tuple[float, float]:
        """Smallest and largest free-flow cost among the strategies of type ``i``."""
        ff = [free_flow_cost(self, s) for s in self.strategies[i]]
        return min(ff), max(ff)

    @property
    def is_load_balancing(self) -> bool:
        return all(len(s) == 1 for strats in self.strategies for s in strats)

    @property
    def is_parallel_link(self) -> bool:
        if not self.is_load_balancing:
            return False
        sets = {frozenset(s[0] for s in strats) for strats in self.strategies}
        return len(sets) == 1


@dataclass(frozen=True)
class FlowProfile:
    """Flow ``sigma[(type, strategy_key)] >= 0``.

    Missing keys carry zero flow. Profiles are compared and hashed by value.
    """

    flow: Mapping[tuple[int, Hashable], float]

    def __post_init__(self) -> None:
        clean = {}
        for (i, key), v in dict(self.flow).items():
            v = float(v)
            if not v >= -ABS_TOL:
                raise ValueError(f"negative flow {v} on ({i}, {key!r})")
            if isinstance(key, list):
                key = tuple(key)
            clean[(int(i), key)] = max(v, 0.0)
        object.__setattr__(self, "flow", clean)

    def items(self):
        return self.flow.items()

    def type_total(self, i: int) -> float:
        return math.fsum(v for (t, _), v in self.flow.items() if t == i)

    def check_conservation(self, game, tol: float = ABS_TOL) -> None:
        """Raise ``ValueError`` unless every type routes exactly its demand."""
        totals = [0.0] * game.n_types
        for (i, key), v in self.flow.items():
            if not 0 <= i < game.n_types:
                raise ValueError(f"unknown type {i}")
            game.strategy_resources(i, key)
            totals[i] += v
        for i, (tot, r) in enumerate(zip(totals, game.demands)):
            if abs(tot - r) > tol:
                raise ValueError(f"type {i}: flow {tot} does not match demand {r}")

    def combine(self, a: float, other: FlowProfile, b: float) -> FlowProfile:
        keys = set(self.flow) | set(other.flow)
        return FlowProfile({k: a * self.flow.get(k, 0.0) + b * other.flow.get(k, 0.0) for k in keys})

    def to_json(self) -> list:
        return [
            {"type": i, "strategy": list(key) if isinstance(key, tuple) else key, "flow": v}
            for (i, key), v in sorted(self.flow.items(), key=lambda kv: (kv[0][0], str(kv[0][1])))
        ]


def load_vector(game, profile: FlowProfile) -> np.ndarray:
    loads = np.zeros(game.n_resources)
    for (i, key), v in profile.items():
        if v:
            for e in game.strategy_resources(i, key):
                loads[e] += v
    return loads


def edge_loads(game, profile: FlowProfile) -> dict[str, float]:
    """Per-resource congestion ``k_e``, keyed by resource id."""
    return dict(zip(game.resource_ids, load_vector(game, profile).tolist()))


def latency_vector(game, loads: np.ndarray) -> np.ndarray:
    return np.array([f(x) for f, x in zip(game.latencies, loads)], dtype=float)


def strategy_cost(game, profile: FlowProfile, i: int, key) -> float:
    """Cost ``c_S`` of strategy ``key`` of type ``i`` under ``profile``."""
    if not 0 <= i < game.n_types:
        raise KeyError(f"unknown type {i}")
    resources = game.strategy_resources(i, key)
    loads = load_vector(game, profile)
    return math.fsum(game.latencies[e](loads[e]) for e in resources)


def total_latency(game, profile: FlowProfile) -> float:
    """Social cost ``SUM = sum_e k_e l_e(k_e)``."""
    loads = load_vector(game, profile)
    return math.fsum(float(x) * game.latencies[e](x) for e, x in enumerate(loads) if x > 0.0)


def _resource_indices(game, strategy) -> list[int]:
    out = []
    for e in strategy:
        if isinstance(e, str):
            if e not in game.index:
                raise KeyError(f"unknown resource {e!r}")
            out.append(game.index[e])
        else:
            if not 0 <= int(e) < game.n_resources:
                raise KeyError(f"unknown resource index {e}")
            out.append(int(e))
    return out


def free_flow_cost(game, strategy: Iterable) -> float:
    """Zero-load cost of a strategy given as resource ids or indices."""
    return math.fsum(game.latencies[e].beta for e in _resource_indices(game, strategy))


def free_flow_ratio(lo: float, hi: float) -> float:
    """``hi / lo`` with 0/0 -> 1 and positive/0 -> inf."""
    if lo <= 0.0:
        return 1.0 if hi <= 0.0 else math.inf
    return hi / lo


def compute_theta(game) -> float:
    """Least θ for which ``game`` is θ-free-flow (``math.inf`` if none)."""
    worst = 1.0
    for i in range(game.n_types):
        lo, hi = game.free_flow_range(i)
        worst = max(worst, free_flow_ratio(lo, hi))
        if math.isinf(worst):
            return math.inf
    return worst - 1.0


def is_theta_free_flow(game, theta: float) -> bool:
    theta = float(theta)
    if not theta >= 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if math.isinf(theta):
        return True
    for i in range(game.n_types):
        lo, hi = game.free_flow_range(i)
        ratio = free_flow_ratio(lo, hi)
        if math.isinf(ratio):
            return False
        if ratio > (1.0 + theta) * (1.0 + RATIO_RTOL):
            return False
    return True
