"""Equilibria, social optima and the Price of Anarchy of congestion games.

Both problems are convex programs over the product of per-type simplices:

* equilibrium: minimize the potential ``Phi = sum_e int_0^{k_e} l_e``,
  whose gradient is the latency vector;
* optimum: minimize ``SUM = sum_e k_e l_e(k_e)``, whose gradient is the
  marginal cost ``l_e + k_e l_e'``.

The solver is a block conditional-gradient method. Each sweep computes the
linear-minimization oracle (cheapest strategy per type, a shortest path for
network games) and the normalized duality gap; it then visits the types in
order and moves flow from the costliest used strategy to the cheapest one,
choosing the amount by exact line search. Moving flow pairwise keeps the
iterate sparse and converges linearly on these polytopes, which is what
makes tight tolerances reachable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy.optimize import brentq
from scipy.sparse import csr_matrix

from .game import CongestionGame, FlowProfile, load_vector, total_latency
from .network import NetworkCongestionGame

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 200_000
GUARD = 1e-15


class ConvergenceError(RuntimeError):
    """Raised when a solve does not reach the requested tolerance."""

    def __init__(self, message: str, report: SolveReport | None = None) -> None:
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class SolveReport:
    """Outcome of an equilibrium or optimum solve.

    ``objective`` is the potential for equilibrium solves and ``SUM`` for
    optimum solves. ``wardrop_gap`` is the normalized duality gap of the
    respective objective (latencies for equilibria, marginal costs for optima).
    """

    profile: FlowProfile
    objective: float
    wardrop_gap: float
    iterations: int
    converged: bool
    total_latency: float = math.nan
    loads: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "objective": self.objective,
            "total_latency": self.total_latency,
            "wardrop_gap": self.wardrop_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "loads": self.loads,
            "profile": self.profile.to_json(),
        }


@dataclass(frozen=True)
class PoAReport:
    eq_cost: float
    opt_cost: float
    ratio: float
    eq: SolveReport
    opt: SolveReport

    def to_json(self) -> dict:
        return {
            "eq_cost": self.eq_cost,
            "opt_cost": self.opt_cost,
            "ratio": self.ratio,
            "eq": self.eq.to_json(),
            "opt": self.opt.to_json(),
        }


# -- per-resource scalar cost models ----------------------------------------


class _CostModel:
    """Scalar and vector evaluation of per-resource costs for one objective."""

    def __init__(self, game, social: bool) -> None:
        self.social = social
        self.terms = []
        deg = max([f.max_degree or 0 for f in game.latencies] + [0])
        self.coef = np.zeros((game.n_resources, deg + 1))
        for e, f in enumerate(game.latencies):
            if social:
                terms = [(d, (d + 1) * a) for d, a in f.coeffs.items()]
            else:
                terms = list(f.coeffs.items())
            self.terms.append((f.beta, terms))
            self.coef[e, 0] = f.beta
            for d, a in terms:
                self.coef[e, d] = a
        self.latencies = game.latencies

    def cost(self, e: int, x: float) -> float:
        beta, terms = self.terms[e]
        x = x if x > 0.0 else 0.0
        out = beta
        for d, a in terms:
            out += a * x**d
        return out

    def vector(self, loads: np.ndarray) -> np.ndarray:
        x = np.maximum(loads, 0.0)
        out = np.zeros_like(x)
        for d in range(self.coef.shape[1] - 1, -1, -1):
            out = out * x + self.coef[:, d]
        return out

    def objective(self, loads: np.ndarray) -> float:
        if self.social:
            return math.fsum(float(x) * f(float(x)) for f, x in zip(self.latencies, loads))
        return math.fsum(f.integral(float(x)) for f, x in zip(self.latencies, loads))


# -- incidence helpers for explicit games -------------------------------------


def _incidence(game: CongestionGame):
    """Sparse incidence of every explicit strategy, cached on the game."""
    cached = game.__dict__.get("_incidence_cache")
    if cached is not None:
        return cached
    rows, cols, offsets = [], [], [0]
    r = 0
    for strats in game.strategies:
        for s in strats:
            rows.extend([r] * len(s))
            cols.extend(s)
            r += 1
        offsets.append(r)
    a = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(r, game.n_resources))
    cached = (a, np.array(offsets))
    object.__setattr__(game, "_incidence_cache", cached)
    return cached


def _min_costs(game, resource_costs: np.ndarray) -> np.ndarray:
    """Cheapest strategy cost of every type under fixed per-resource costs."""
    if isinstance(game, NetworkCongestionGame):
        return np.array([c for _, c in game.best_responses(resource_costs)]) if game.n_types else np.zeros(0)
    a, offsets = _incidence(game)
    sc = a @ resource_costs
    out = np.zeros(game.n_types)
    for i in range(game.n_types):
        out[i] = sc[offsets[i] : offsets[i + 1]].min()
    return out


def _gap(game, profile: FlowProfile, resource_costs: np.ndarray) -> float:
    mins = _min_costs(game, resource_costs)
    num = 0.0
    den = 0.0
    for (i, key), v in profile.items():
        if v <= 0.0:
            continue
        c = math.fsum(resource_costs[e] for e in game.strategy_resources(i, key))
        num += v * max(c - mins[i], 0.0)
        den += v * c
    return num / max(den, GUARD)


def wardrop_gap(game, profile: FlowProfile) -> float:
    """Normalized equilibrium gap ``sum sigma (c_S - min c) / sum sigma c_S``.

    Zero exactly at Wardrop equilibria; the denominator is guarded at 1e-15.
    """
    model = _CostModel(game, social=False)
    return _gap(game, profile, model.vector(load_vector(game, profile)))


def optimality_gap(game, profile: FlowProfile) -> float:
    """Same as :func:`wardrop_gap` with marginal costs; zero at social optima."""
    model = _CostModel(game, social=True)
    return _gap(game, profile, model.vector(load_vector(game, profile)))


# -- the block conditional-gradient solver ------------------------------------


class _TypeState:
    __slots__ = ("keys", "res", "flow")

    def __init__(self) -> None:
        self.keys: list = []
        self.res: list[tuple[int, ...]] = []
        self.flow: list[float] = []

    def add(self, key, res, flow: float = 0.0) -> int:
        try:
            j = self.keys.index(key)
        except ValueError:
            self.keys.append(key)
            self.res.append(tuple(res))
            self.flow.append(0.0)
            j = len(self.keys) - 1
        self.flow[j] += flow
        return j


def _initial_state(game, demand_types: list[int], model: _CostModel, seed, init: FlowProfile | None):
    states = {i: _TypeState() for i in demand_types}
    network = isinstance(game, NetworkCongestionGame)
    if init is not None:
        init.check_conservation(game)
        for (i, key), v in init.items():
            if i in states and v > 0.0:
                states[i].add(key, game.strategy_resources(i, key), v)
        return states
    zero_costs = model.vector(np.zeros(game.n_resources))
    if seed is None:
        for i in demand_types:
            key, _ = game.best_response(i, zero_costs)
            states[i].add(key, game.strategy_resources(i, key), game.demands[i])
        return states
    rng = np.random.default_rng(seed)
    if network:
        draws = 3
        picks = []
        for _ in range(draws):
            noisy = zero_costs * rng.uniform(0.5, 1.5, game.n_resources) + rng.uniform(0.0, 1.0, game.n_resources)
            picks.append(game.best_responses(noisy))
        for i in demand_types:
            w = rng.dirichlet(np.ones(draws))
            for d in range(draws):
                key = picks[d][i][0]
                states[i].add(key, game.strategy_resources(i, key), game.demands[i] * w[d])
    else:
        for i in demand_types:
            n = len(game.strategies[i])
            w = rng.dirichlet(np.ones(n))
            for key in range(n):
                states[i].add(key, game.strategies[i][key], game.demands[i] * w[key])
    return states


def _line_step(model: _CostModel, loads: np.ndarray, plus, minus, cap: float) -> float:
    """Exact minimizer ``t in [0, cap]`` of the objective along ``+plus -minus``."""

    def slope(t: float) -> float:
        up = 0.0
        for e in plus:
            up += model.cost(e, loads[e] + t)
        down = 0.0
        for e in minus:
            down += model.cost(e, loads[e] - t)
        return up - down

    if slope(0.0) >= 0.0:
        return 0.0
    if slope(cap) <= 0.0:
        return cap
    return brentq(slope, 0.0, cap, xtol=max(cap * 1e-15, 1e-300), rtol=1e-15, maxiter=200)


def _solve(game, social: bool, tol: float, max_iters: int, seed, init) -> SolveReport:
    if not tol > 0.0:
        raise ValueError(f"tol must be > 0, got {tol}")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if game.n_types == 0 or game.n_resources == 0:
        raise ValueError("game has no types or no resources")
    model = _CostModel(game, social)
    network = isinstance(game, NetworkCongestionGame)
    demand_types = [i for i, r in enumerate(game.demands) if r > 0.0]
    states = _initial_state(game, demand_types, model, seed, init)

    loads = np.zeros(game.n_resources)
    for st in states.values():
        for res, v in zip(st.res, st.flow):
            for e in res:
                loads[e] += v

    gap = math.inf
    iterations = 0
    converged = False
    while True:
        costs = model.vector(loads)
        if network:
            oracle = game.best_responses(costs)
        num = 0.0
        den = 0.0
        for i, st in states.items():
            if network:
                key, best = oracle[i]
                st.add(key, game.strategy_resources(i, key))
            else:
                sc = [math.fsum(costs[e] for e in s) for s in game.strategies[i]]
                best = min(sc)
                for key in range(len(sc)):
                    st.add(key, game.strategies[i][key])
            for res, v in zip(st.res, st.flow):
                if v > 0.0:
                    c = math.fsum(costs[e] for e in res)
                    num += v * max(c - best, 0.0)
                    den += v * c
        gap = num / max(den, GUARD)
        if gap <= tol:
            converged = True
            break
        if iterations >= max_iters:
            break
        iterations += 1
        for i, st in states.items():
            _equilibrate_type(model, loads, st)

    flows = {}
    for i, st in states.items():
        for key, v in zip(st.keys, st.flow):
            if v > 0.0:
                flows[(i, key)] = v
    profile = FlowProfile(flows)
    loads = load_vector(game, profile)
    return SolveReport(
        profile=profile,
        objective=model.objective(loads),
        wardrop_gap=gap,
        iterations=iterations,
        converged=converged,
        total_latency=total_latency(game, profile),
        loads=dict(zip(game.resource_ids, loads.tolist())),
    )


def _equilibrate_type(model: _CostModel, loads: np.ndarray, st: _TypeState) -> None:
    """Pairwise steps inside one type until its used strategies balance."""
    for _ in range(4 * len(st.keys) + 4):
        sc = [sum(model.cost(e, loads[e]) for e in res) for res in st.res]
        b = min(range(len(sc)), key=sc.__getitem__)
        used = [j for j, v in enumerate(st.flow) if v > 0.0 and j != b]
        if not used:
            return
        a = max(used, key=sc.__getitem__)
        if sc[a] - sc[b] <= 1e-15 * max(abs(sc[a]), 1e-300):
            return
        ra, rb = set(st.res[a]), set(st.res[b])
        plus = [e for e in st.res[b] if e not in ra]
        minus = [e for e in st.res[a] if e not in rb]
        cap = st.flow[a]
        t = _line_step(model, loads, plus, minus, cap)
        if t <= 0.0:
            return
        for e in plus:
            loads[e] += t
        for e in minus:
            loads[e] = max(loads[e] - t, 0.0)
        if t >= cap:
            st.flow[a] = 0.0
        else:
            st.flow[a] -= t
        st.flow[b] += t


def solve_equilibrium(
    game,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | None = None,
    init: FlowProfile | None = None,
) -> SolveReport:
    """Wardrop equilibrium by minimizing the potential.

    ``seed`` selects a random initial profile; ``init`` starts from a given
    profile. The default start is all-or-nothing at zero load. A solve that
    hits ``max_iters`` returns ``converged=False``.
    """
    return _solve(game, False, tol, max_iters, seed, init)


def solve_optimum(
    game,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
    seed: int | None = None,
    init: FlowProfile | None = None,
) -> SolveReport:
    """Social optimum by minimizing ``SUM`` with marginal costs."""
    return _solve(game, True, tol, max_iters, seed, init)


def _ratio(eq_cost: float, opt_cost: float) -> float:
    if opt_cost <= 0.0:
        return 1.0 if eq_cost <= 0.0 else math.inf
    return eq_cost / opt_cost


def price_of_anarchy(
    game, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS, seed: int | None = None
) -> PoAReport:
    """``SUM(eq) / SUM(opt)``; raises :class:`ConvergenceError` if either solve stalls."""
    eq = solve_equilibrium(game, tol, max_iters, seed=seed)
    if not eq.converged:
        raise ConvergenceError(f"equilibrium solve stopped at gap {eq.wardrop_gap:.3g}", eq)
    opt = solve_optimum(game, tol, max_iters, seed=seed)
    if not opt.converged:
        raise ConvergenceError(f"optimum solve stopped at gap {opt.wardrop_gap:.3g}", opt)
    return PoAReport(eq.total_latency, opt.total_latency, _ratio(eq.total_latency, opt.total_latency), eq, opt)


# -- brute-force grid oracle ---------------------------------------------------

MAX_STRATEGIES = 6
MAX_GRID_POINTS = 2 * 10**8
_BATCH = 1 << 19


def compositions(n: int, s: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``s`` summing to ``n``."""
    if s == 1:
        return np.array([[n]], dtype=np.int64)
    blocks = []
    for first in range(n + 1):
        rest = compositions(n - first, s - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.concatenate(blocks)


def _composition_chunks(n: int, s: int, target: int):
    """Yield compositions of ``n`` into ``s`` parts in blocks of about ``target`` rows."""
    if s <= 2:
        yield compositions(n, s)
        return
    buf, size = [], 0
    prefixes = (pre for j in range(n + 1) for pre in compositions(j, s - 2))
    for prefix in prefixes:
        rem = n - int(prefix.sum())
        a = np.arange(rem + 1, dtype=np.int64)
        block = np.empty((rem + 1, s), dtype=np.int64)
        block[:, : s - 2] = prefix
        block[:, s - 2] = a
        block[:, s - 1] = rem - a
        buf.append(block)
        size += rem + 1
        if size >= target:
            yield np.concatenate(buf)
            buf, size = [], 0
    if buf:
        yield np.concatenate(buf)


def brute_force_poa(game: CongestionGame, grid_resolution: int = 10_000) -> PoAReport:
    """Exhaustive grid search over flow splits (independent oracle).

    Every type's demand is split into ``grid_resolution`` equal units. The
    equilibrium candidate is the grid point with the smallest normalized
    Wardrop gap, the optimum the one with the smallest ``SUM``.
    """
    if not isinstance(game, CongestionGame):
        raise TypeError("brute force needs an explicit-strategy game")
    if grid_resolution < 1:
        raise ValueError("grid_resolution must be >= 1")
    active = [i for i, r in enumerate(game.demands) if r > 0.0]
    n_strats = sum(len(game.strategies[i]) for i in active)
    if n_strats > MAX_STRATEGIES:
        raise ValueError(f"instance too large: {n_strats} strategies (limit {MAX_STRATEGIES})")
    if not active:
        empty = SolveReport(FlowProfile({}), 0.0, 0.0, 1, True, 0.0, dict.fromkeys(game.resource_ids, 0.0))
        return PoAReport(0.0, 0.0, 1.0, empty, empty)
    n = grid_resolution
    sizes = [comb(n + len(game.strategies[i]) - 1, len(game.strategies[i]) - 1) for i in active]
    total = math.prod(sizes)
    if total > MAX_GRID_POINTS:
        raise ValueError(f"instance too large: {total} grid points (limit {MAX_GRID_POINTS})")

    # Column layout: strategies of active types, concatenated.
    cols = [(i, j) for i in active for j in range(len(game.strategies[i]))]
    inc = np.zeros((len(cols), game.n_resources))
    for c, (i, j) in enumerate(cols):
        inc[c, list(game.strategies[i][j])] = 1.0
    spans, start = [], 0
    for i in active:
        spans.append((start, start + len(game.strategies[i])))
        start += len(game.strategies[i])
    unit = np.array([game.demands[i] / n for i, _ in cols])
    span_demand = [game.demands[i] for i in active]
    lat = _CostModel(game, social=False)

    big = int(np.argmax(sizes))
    others = [k for k in range(len(active)) if k != big]
    other_rows = [compositions(n, len(game.strategies[active[k]])) for k in others]
    if others:
        grids = np.meshgrid(*[np.arange(len(r)) for r in other_rows], indexing="ij")
        outer_idx = [g.ravel() for g in grids]
        n_outer = len(outer_idx[0])
    else:
        outer_idx, n_outer = [], 1
    chunk_target = max(1, _BATCH // n_outer)

    best_gap = (math.inf, math.inf, None)
    best_sum = (math.inf, None)
    evaluated = 0
    big_span = spans[big]
    inc_t = np.ascontiguousarray(inc.T)
    unit_col = unit[:, None]
    for chunk in _composition_chunks(n, big_span[1] - big_span[0], chunk_target):
        # Column-major batch: one row per strategy, one column per grid point.
        chunk = chunk.T
        width = chunk.shape[1] * n_outer
        units = np.empty((len(cols), width))
        units[big_span[0] : big_span[1]] = np.repeat(chunk, n_outer, axis=1) if n_outer > 1 else chunk
        for k, idx, comp in zip(others, outer_idx, other_rows):
            lo, hi = spans[k]
            units[lo:hi] = np.tile(comp[idx].T, (1, chunk.shape[1]))
        flows = units
        flows *= unit_col
        loads = inc_t @ flows
        costs = _vector_cols(lat, loads)
        sums = np.einsum("ij,ij->j", loads, costs)
        sc = inc @ costs
        # Each type routes exactly its demand on the grid, so the gap
        # numerator is the total cost minus sum_i r_i * min-cost_i.
        den = np.einsum("ij,ij->j", flows, sc)
        floor = np.zeros(width)
        for (lo, hi), r in zip(spans, span_demand):
            floor += r * np.minimum.reduce(sc[lo:hi], axis=0)
        gaps = np.maximum(den - floor, 0.0) / np.maximum(den, GUARD)
        g = int(np.argmin(gaps))
        if (gaps[g], sums[g]) < best_gap[:2]:
            best_gap = (float(gaps[g]), float(sums[g]), flows[:, g].copy())
        j = int(np.argmin(sums))
        if sums[j] < best_sum[0]:
            best_sum = (float(sums[j]), flows[:, j].copy())
        evaluated += width

    def report(flow_row: np.ndarray, social: bool) -> SolveReport:
        profile = FlowProfile({cols[c]: v for c, v in enumerate(flow_row) if v > 0.0})
        loads = load_vector(game, profile)
        model = _CostModel(game, social)
        gap = _gap(game, profile, model.vector(loads))
        return SolveReport(
            profile,
            model.objective(loads),
            gap,
            evaluated,
            True,
            total_latency(game, profile),
            dict(zip(game.resource_ids, loads.tolist())),
        )

    eq = report(best_gap[2], social=False)
    opt = report(best_sum[1], social=True)
    return PoAReport(eq.total_latency, opt.total_latency, _ratio(eq.total_latency, opt.total_latency), eq, opt)


def _vector_cols(model: _CostModel, loads: np.ndarray) -> np.ndarray:
    """Per-resource costs for a batch of nonnegative loads (shape ``(m, B)``)."""
    coef = model.coef
    out = np.empty_like(loads)
    out[...] = coef[:, -1:]
    for d in range(coef.shape[1] - 2, -1, -1):
        out *= loads
        if coef[:, d].any():
            out += coef[:, d : d + 1]
    return out


def poa_batch(games, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS) -> list[PoAReport]:
    """Sequential batch of :func:`price_of_anarchy` calls."""
    return [price_of_anarchy(g, tol, max_iters) for g in games]


__all__ = [
    "ConvergenceError",
    "PoAReport",
    "SolveReport",
    "brute_force_poa",
    "compositions",
    "optimality_gap",
    "poa_batch",
    "price_of_anarchy",
    "solve_equilibrium",
    "solve_optimum",
    "wardrop_gap",
]
