"""Worst-case instance constructions with their canonical profiles.

Every constructor returns a :class:`GeneratedInstance` carrying the game,
an exact equilibrium ``canonical_eq``, a candidate optimum ``canonical_opt``
and ``predicted_poa = SUM(canonical_eq) / SUM(canonical_opt)`` from closed
forms. Because the optimum is only a candidate, ``predicted_poa`` is a
certified lower bound on the instance's Price of Anarchy.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

from scipy.optimize import brentq

from .bounds import eta_theta_point, gamma_point, gamma_poly_crossing
from .game import CongestionGame, FlowProfile, total_latency
from .latency import LatencyFunction
from .network import Commodity, NetworkCongestionGame

INT_TOL = 1e-9


class Construction(str, enum.Enum):
    PIGOU_LIKE = "pigou-like"
    MULTILEVEL_LB = "multilevel"
    PARALLEL_GAMMA = "parallel-gamma"
    TWOLINK_ETA = "twolink-eta"
    NETWORK_EXPANSION = "network"


@dataclass(frozen=True)
class GeneratorSpec:
    kind: Construction
    parameters: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GeneratedInstance:
    game: CongestionGame | NetworkCongestionGame
    canonical_eq: FlowProfile
    canonical_opt: FlowProfile
    predicted_poa: float
    theta: float
    construction: Construction
    parameters: dict = field(default_factory=dict)

    def sidecar(self) -> dict:
        return {
            "predicted_poa": self.predicted_poa,
            "theta": "inf" if math.isinf(self.theta) else self.theta,
            "construction": self.construction.value,
            "parameters": _jsonable(self.parameters),
        }


def _jsonable(value: Any):
    if isinstance(value, LatencyFunction):
        return str(value)
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def _as_int(x: float, what: str) -> int:
    r = round(x)
    if r < 1 or abs(x - r) > INT_TOL * max(1.0, abs(x)):
        raise ValueError(f"{what} must be a positive integer, got {x}")
    return int(r)


def _homogeneous(f: LatencyFunction, name: str = "f") -> LatencyFunction:
    if not f.is_homogeneous:
        raise ValueError(f"{name} must be homogeneous (zero constant term)")
    return f


def _affine(f: LatencyFunction, scale: float, beta: float) -> LatencyFunction:
    """``scale * f(x) + beta`` for homogeneous ``f``."""
    return LatencyFunction({d: scale * a for d, a in f.coeffs.items()}, beta)


# -- two-link Pigou-like family ------------------------------------------------


def gen_pigou_like(c: float) -> GeneratedInstance:
    """Links ``l1 = 1`` and ``l2 = x + c`` with unit demand."""
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"c must lie in [0, 1], got {c}")
    game = CongestionGame.build(
        {"e1": LatencyFunction({}, 1.0), "e2": LatencyFunction({1: 1.0}, c)},
        [(1.0, [["e1"], ["e2"]])],
    )
    # Wardrop flow: e2 fills until x + c = 1, i.e. (c, 1 - c).
    eq = FlowProfile({(0, 0): c, (0, 1): 1.0 - c})
    opt = FlowProfile({(0, 0): (1.0 + c) / 2.0, (0, 1): (1.0 - c) / 2.0})
    theta = math.inf if c == 0.0 else 1.0 / c - 1.0
    return GeneratedInstance(
        game, eq, opt, 4.0 / ((c + 1.0) * (3.0 - c)), theta, Construction.PIGOU_LIKE, {"c": c}
    )


# -- multi-level load-balancing graph ---------------------------------------------


def multilevel_level_sizes(k: float, l: float, n: int, m: int) -> list[int]:
    ratio = _as_int(l * n / k, "l*n/k")
    return [n ** (s - 1) * ratio ** (m - s) for s in range(1, m + 1)]


def multilevel_predicted_poa(k: float, l: float, f: LatencyFunction, theta: float, n: int, m: int) -> float:
    """Closed-form ``SUM(eq) / SUM(opt)`` of the multi-level construction."""
    sizes = multilevel_level_sizes(k, l, n, m)
    fk, fl = f(k), f(l)
    eq = math.fsum(sizes[s - 1] * k * fk for s in range(1, m))
    opt = math.fsum(
        sizes[s - 1] * l * ((1.0 - (1.0 + theta) ** (s - m)) * fl + (1.0 + theta) ** (s - m) * fk)
        for s in range(2, m + 1)
    )
    return eq / opt


def gen_multilevel_lb(k: float, l: float, f: LatencyFunction, theta: float, n: int, m: int) -> GeneratedInstance:
    """Load-balancing game on an ``m``-level graph.

    Level ``s`` holds ``n^(s-1) (l n / k)^(m-s)`` resources with latency
    ``alpha_s f(x) + beta_s`` where ``alpha_s = 1 - (1+θ)^(s-m)`` and
    ``beta_s = (1+θ)^(s-m) f(k)``. Every resource at level ``s < m`` has ``n``
    outgoing player populations of weight ``k / n``; each population may use
    its tail (first) or head (second) resource.
    """
    if not (k > l > 0.0):
        raise ValueError(f"need k > l > 0, got k={k}, l={l}")
    _homogeneous(f)
    theta = float(theta)
    if not (theta > 0.0 and math.isfinite(theta)):
        raise ValueError(f"theta must be finite and > 0, got {theta}")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if isinstance(m, bool) or int(m) != m or m < 2:
        raise ValueError(f"m must be an integer >= 2, got {m}")
    n, m = int(n), int(m)
    sizes = multilevel_level_sizes(k, l, n, m)
    fk = f(k)
    alphas = [1.0 - (1.0 + theta) ** (s - m) for s in range(1, m + 1)]
    betas = [(1.0 + theta) ** (s - m) * fk for s in range(1, m + 1)]

    offsets = [0]
    for size in sizes:
        offsets.append(offsets[-1] + size)
    ids, lats, levels = [], [], []
    for s in range(m):
        lat = _affine(f, alphas[s], betas[s])
        for u in range(sizes[s]):
            ids.append(f"L{s + 1}_{u}")
            lats.append(lat)
            levels.append(s + 1)

    w = k / n
    demands, strategies = [], []
    for s in range(m - 1):
        for j in range(sizes[s] * n):
            u = offsets[s] + j // n
            v = offsets[s + 1] + j % sizes[s + 1]
            demands.append(w)
            strategies.append(((u,), (v,)))
    game = CongestionGame(tuple(ids), tuple(lats), tuple(demands), tuple(strategies))
    eq = FlowProfile({(i, 0): w for i in range(len(demands))})
    opt = FlowProfile({(i, 1): w for i in range(len(demands))})
    params = {
        "k": k,
        "l": l,
        "f": f,
        "theta": theta,
        "n": n,
        "m": m,
        "level_sizes": sizes,
        "alphas": alphas,
        "betas": betas,
        "resource_levels": levels,
    }
    return GeneratedInstance(
        game, eq, opt, multilevel_predicted_poa(k, l, f, theta, n, m), theta, Construction.MULTILEVEL_LB, params
    )


# -- two-family parallel links -------------------------------------------------------


def gen_parallel_gamma(
    k1: float, l1: float, f1: LatencyFunction, k2: float, l2: float, f2: LatencyFunction, n: int
) -> GeneratedInstance:
    """Parallel links: ``n`` with ``f2(k2) f1(x)`` and ``n (k1-l1)/(l2-k2)`` with ``f1(k1) f2(x)``.

    At the canonical equilibrium the first family carries ``k1`` per link and
    the second ``k2``; the candidate optimum carries ``l1`` and ``l2``.
    """
    if not (k1 > l1 > 0.0):
        raise ValueError(f"need k1 > l1 > 0, got k1={k1}, l1={l1}")
    if not (0.0 < k2 < l2):
        raise ValueError(f"need 0 < k2 < l2, got k2={k2}, l2={l2}")
    _homogeneous(f1, "f1")
    _homogeneous(f2, "f2")
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    n = int(n)
    n_minus = _as_int((k1 - l1) / (l2 - k2) * n, "n*(k1-l1)/(l2-k2)")
    plus = _affine(f1, f2(k2), 0.0)
    minus = _affine(f2, f1(k1), 0.0)
    lat = {f"P{j}": plus for j in range(n)}
    lat.update({f"M{j}": minus for j in range(n_minus)})
    total = k1 * n + k2 * n_minus
    game = CongestionGame.build(lat, [(total, [[r] for r in lat])])
    eq = FlowProfile({(0, j): (k1 if j < n else k2) for j in range(n + n_minus)})
    opt = FlowProfile({(0, j): (l1 if j < n else l2) for j in range(n + n_minus)})
    params = {"k1": k1, "l1": l1, "f1": f1, "k2": k2, "l2": l2, "f2": f2, "n": n, "n_minus": n_minus, "demand": total}
    return GeneratedInstance(
        game, eq, opt, gamma_point(k1, l1, f1, k2, l2, f2), 0.0, Construction.PARALLEL_GAMMA, params
    )


def gamma_poly_witness(p: int, q: int) -> tuple[float, float, float, float]:
    """Loads ``(k1, l1, k2, l2)`` at which :func:`gamma_point` with ``x^p`` and
    ``x^q`` attains the polynomial-class value (requires ``q < p``)."""
    if not 1 <= q < p:
        raise ValueError("need 1 <= q < p")
    x = gamma_poly_crossing(p, q)
    t1 = p * x / ((p + 1) * (x - 1.0))
    t2 = q * x / ((q + 1) * (x - 1.0))
    return t1, 1.0, t2, 1.0


# -- two links, path-disjoint bound -----------------------------------------------------


def twolink_eta_optimal_l(k: float, f: LatencyFunction) -> float:
    """Load on link ``u`` at the social optimum of :func:`gen_twolink_eta`.

    It solves ``f(l) + l f'(l) = f(k)`` (independent of θ); only for this ``l``
    is the candidate optimum ``(l, k - l)`` the true optimum. For ``x^p`` it is
    ``k / (p+1)^{1/p}``.
    """
    _homogeneous(f)
    if not k > 0.0:
        raise ValueError(f"need k > 0, got {k}")
    fk = f(k)
    return float(brentq(lambda x: f.marginal(x) - fk, 0.0, k, xtol=1e-15, rtol=1e-15))


def gen_twolink_eta(k: float, l: float, f: LatencyFunction, theta: float) -> GeneratedInstance:
    """Links ``u: θ f(x) + f(k)`` and ``v: (1+θ) f(k)`` with demand ``k``."""
    if not (k > l > 0.0):
        raise ValueError(f"need k > l > 0, got k={k}, l={l}")
    _homogeneous(f)
    theta = float(theta)
    if not (theta > 0.0 and math.isfinite(theta)):
        raise ValueError(f"theta must be finite and > 0, got {theta}")
    fk = f(k)
    game = CongestionGame.build(
        {"u": _affine(f, theta, fk), "v": LatencyFunction({}, (1.0 + theta) * fk)},
        [(k, [["u"], ["v"]])],
    )
    eq = FlowProfile({(0, 0): k})
    opt = FlowProfile({(0, 0): l, (0, 1): k - l})
    params = {"k": k, "l": l, "f": f, "theta": theta}
    return GeneratedInstance(
        game, eq, opt, eta_theta_point(k, l, f, theta), theta, Construction.TWOLINK_ETA, params
    )


# -- single-source network expansion ------------------------------------------------------


def _edge_counts(inst: GeneratedInstance, h: int, beta: float) -> tuple[list[int], list[int]]:
    a_counts, b_counts = [], []
    for s, (alpha, b) in enumerate(zip(inst.parameters["alphas"], inst.parameters["betas"]), start=1):
        a = alpha * h
        ra = round(a)
        if abs(a - ra) > INT_TOL * max(1.0, a):
            raise ValueError(
                f"alpha_{s} * h = {a} is not an integer; theta must be rational with h a multiple of its "
                "denominators (perturb theta downward to a nearby rational)"
            )
        bb = b * h / beta
        rb = round(bb)
        if rb < 1 or abs(bb - rb) > INT_TOL * max(1.0, bb):
            raise ValueError(
                f"beta_{s} * h / beta = {bb} is not a positive integer; f(k)/beta and theta must be rational"
            )
        a_counts.append(int(ra))
        b_counts.append(int(rb))
    return a_counts, b_counts


def minimal_h(inst: GeneratedInstance, beta: float, max_denominator: int = 10**6) -> int:
    """Smallest ``h`` making every path length integral (floats read as nearby rationals)."""
    if inst.construction is not Construction.MULTILEVEL_LB:
        raise ValueError("minimal_h applies to multi-level instances")
    h = 1
    for alpha, b in zip(inst.parameters["alphas"], inst.parameters["betas"]):
        for v in (alpha, b / beta):
            fr = Fraction(v).limit_denominator(max_denominator)
            if abs(float(fr) - v) > INT_TOL * max(1.0, abs(v)):
                raise ValueError(f"{v} is not close to a rational with denominator <= {max_denominator}")
            h = h * fr.denominator // math.gcd(h, fr.denominator)
    return h


def gen_network_expansion(inst: GeneratedInstance, h: int, beta: float) -> GeneratedInstance:
    """Single-source network simulating a multi-level load-balancing instance.

    Resource ``e`` at level ``s`` becomes a path of ``alpha_s h`` edges with
    latency ``f`` followed by ``beta_s h / beta`` edges of constant latency
    ``beta``; each player population gets its own sink reached by one more
    ``beta`` edge from either of its two resource paths. Path costs equal
    ``h`` times the original costs plus ``beta``.
    """
    if inst.construction is not Construction.MULTILEVEL_LB:
        raise ValueError("network expansion applies to multi-level instances")
    if isinstance(h, bool) or int(h) != h or h < 1:
        raise ValueError(f"h must be a positive integer, got {h}")
    beta = float(beta)
    if not (beta > 0.0 and math.isfinite(beta)):
        raise ValueError(f"beta must be finite and > 0, got {beta}")
    h = int(h)
    a_counts, b_counts = _edge_counts(inst, h, beta)
    f = inst.parameters["f"]
    const = LatencyFunction({}, beta)
    lb = inst.game
    levels = inst.parameters["resource_levels"]

    source = "src"
    nodes = [source]
    edges: list[tuple[str, Any, Any, LatencyFunction]] = []
    resource_path: list[list[int]] = []
    resource_end: list[str] = []
    for e, rid in enumerate(lb.resource_ids):
        s = levels[e]
        at = source
        path = []
        for j in range(a_counts[s - 1]):
            nxt = f"{rid}/p{j + 1}"
            nodes.append(nxt)
            path.append(len(edges))
            edges.append((f"{rid}/f{j}", at, nxt, f))
            at = nxt
        for j in range(b_counts[s - 1]):
            nxt = f"{rid}/q{j + 1}"
            nodes.append(nxt)
            path.append(len(edges))
            edges.append((f"{rid}/c{j}", at, nxt, const))
            at = nxt
        resource_path.append(path)
        resource_end.append(at)

    commodities = []
    eq_flow, opt_flow = {}, {}
    for i, ((u,), (v,)) in enumerate(lb.strategies):
        sink = f"t{i}"
        nodes.append(sink)
        keys = []
        for r in (u, v):
            keys.append(tuple(resource_path[r]) + (len(edges),))
            edges.append((f"t{i}/{lb.resource_ids[r]}", resource_end[r], sink, const))
        commodities.append(Commodity(source, sink, lb.demands[i]))
        eq_flow[(i, keys[0])] = inst.canonical_eq.flow.get((i, 0), 0.0)
        opt_flow[(i, keys[1])] = inst.canonical_opt.flow.get((i, 1), 0.0)

    game = NetworkCongestionGame.build(nodes, edges, [(c.source, c.sink, c.demand) for c in commodities])
    eq = FlowProfile({k: v for k, v in eq_flow.items() if v > 0.0})
    opt = FlowProfile({k: v for k, v in opt_flow.items() if v > 0.0})

    w = math.fsum(lb.demands)
    sum_eq = total_latency(lb, inst.canonical_eq)
    sum_opt = total_latency(lb, inst.canonical_opt)
    predicted = (sum_eq * h + w * beta) / (sum_opt * h + w * beta)

    # The extra constant sink edge shrinks every free-flow ratio a little, so
    # the expanded game is free-flow for a slightly smaller θ than the target.
    betas = inst.parameters["betas"]
    ratio = max((h * betas[s + 1] + beta) / (h * betas[s] + beta) for s in range(len(betas) - 1))
    params = dict(inst.parameters)
    params.update({"h": h, "beta": beta, "a": a_counts, "b": b_counts, "theta_target": inst.theta})
    params.pop("resource_levels", None)
    return GeneratedInstance(game, eq, opt, predicted, ratio - 1.0, Construction.NETWORK_EXPANSION, params)


expand_to_network = gen_network_expansion


def generate(spec: GeneratorSpec) -> GeneratedInstance:
    p = dict(spec.parameters)
    kind = Construction(spec.kind)
    if kind is Construction.PIGOU_LIKE:
        return gen_pigou_like(**p)
    if kind is Construction.MULTILEVEL_LB:
        return gen_multilevel_lb(**p)
    if kind is Construction.PARALLEL_GAMMA:
        return gen_parallel_gamma(**p)
    if kind is Construction.TWOLINK_ETA:
        return gen_twolink_eta(**p)
    base = gen_multilevel_lb(**{k: p[k] for k in ("k", "l", "f", "theta", "n", "m")})
    return gen_network_expansion(base, p["h"], p["beta"])
