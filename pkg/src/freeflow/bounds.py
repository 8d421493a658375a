"""Price-of-Anarchy bounds for θ-free-flow games.

Pointwise quantities take a homogeneous latency ``f`` (``f(0) = 0``) and
loads ``k > l > 0``. The class-level evaluators specialize to homogenized
polynomials of maximum degree ``p`` and minimum degree ``q``:

* ``gamma_poly(p, q)``: the θ-independent variational term (closed form);
* ``gamma_theta_poly(p, θ)``: general networks, a sup over ``t > 1``
  evaluated numerically;
* ``eta_theta_poly(p, θ)``: path-disjoint networks, closed form at the
  maximizer ``t* = (p+1)^(1/p)``;
* ``gamma_infinity_poly(p)``: the classical unrestricted bound.

θ is a float in ``[0, inf]``; ``math.inf`` means no free-flow restriction.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .latency import LatencyFunction

T_MAX = 1e4
GRID_POINTS = 100_000
REFINE_XATOL = 1e-12


class Topology(str, enum.Enum):
    GENERAL = "general"
    PATH_DISJOINT = "path-disjoint"

    @classmethod
    def parse(cls, value: str | Topology) -> Topology:
        if isinstance(value, Topology):
            return value
        key = str(value).strip().lower().replace("_", "-")
        for t in cls:
            if t.value == key:
                return t
        raise ValueError(f"unknown topology {value!r} (expected 'general' or 'path-disjoint')")


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    NUMERIC = "numeric"


def _check_pq(p: int, q: int | None = None) -> None:
    if isinstance(p, bool) or int(p) != p or p < 1:
        raise ValueError(f"p must be an integer >= 1, got {p!r}")
    if q is not None and (isinstance(q, bool) or int(q) != q or not 1 <= q <= p):
        raise ValueError(f"q must be an integer in [1, p={p}], got {q!r}")


def _check_theta(theta: float, allow_inf: bool) -> float:
    theta = float(theta)
    if math.isnan(theta) or theta < 0.0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    if math.isinf(theta) and not allow_inf:
        raise ValueError("theta = inf is not accepted here; use gamma_infinity_poly")
    return theta


@dataclass(frozen=True)
class BoundQuery:
    p: int
    q: int
    theta: float
    topology: Topology = Topology.GENERAL

    def __post_init__(self) -> None:
        _check_pq(self.p, self.q)
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "q", int(self.q))
        object.__setattr__(self, "theta", _check_theta(self.theta, allow_inf=True))
        object.__setattr__(self, "topology", Topology.parse(self.topology))


@dataclass(frozen=True)
class BoundResult:
    """Bound value with the components it is the maximum of."""

    value: float
    components: dict = field(default_factory=dict)
    method: Method = Method.CLOSED_FORM

    def to_json(self) -> dict:
        return {"value": self.value, "components": dict(self.components), "method": self.method.value}


# -- pointwise quantities ----------------------------------------------------


def _homogeneous(f: LatencyFunction) -> LatencyFunction:
    if not f.is_homogeneous:
        raise ValueError("f must be homogeneous (zero constant term)")
    return f


def _check_kl(k: float, l: float) -> None:
    if not (k > l > 0.0):
        raise ValueError(f"need k > l > 0, got k={k}, l={l}")


def gamma_theta_point(k: float, l: float, f: LatencyFunction, theta: float) -> float:
    """``((k-l)f(k) + k f(k) θ) / ((k-l)f(k) + [(k-l)f(k) + l f(l)] θ)``."""
    _check_kl(k, l)
    _homogeneous(f)
    theta = _check_theta(theta, allow_inf=False)
    fk, fl = f(k), f(l)
    num = (k - l) * fk + k * fk * theta
    den = (k - l) * fk + ((k - l) * fk + l * fl) * theta
    return num / den


def eta_theta_point(k: float, l: float, f: LatencyFunction, theta: float) -> float:
    """``k f(k)(1+θ) / (k f(k) + [(k-l)f(k) + l f(l)] θ)``."""
    _check_kl(k, l)
    _homogeneous(f)
    theta = _check_theta(theta, allow_inf=False)
    fk, fl = f(k), f(l)
    return k * fk * (1.0 + theta) / (k * fk + ((k - l) * fk + l * fl) * theta)


def gamma_infinity_point(k: float, l: float, f: LatencyFunction) -> float:
    """θ → ∞ limit of :func:`gamma_theta_point`: ``k f(k) / ((k-l) f(k) + l f(l))``."""
    _check_kl(k, l)
    _homogeneous(f)
    fk, fl = f(k), f(l)
    return k * fk / ((k - l) * fk + l * fl)


def gamma_point(
    k1: float, l1: float, f1: LatencyFunction, k2: float, l2: float, f2: LatencyFunction
) -> float:
    """Two-family variational ratio (one overloaded family, one underloaded).

    Needs ``k1 > l1 > 0`` and ``0 < k2 <= l2``.
    """
    _check_kl(k1, l1)
    if not (0.0 < k2 <= l2):
        raise ValueError(f"need 0 < k2 <= l2, got k2={k2}, l2={l2}")
    _homogeneous(f1)
    _homogeneous(f2)
    a = (l2 - k2) * f2(k2)
    b = (k1 - l1) * f1(k1)
    den = a * l1 * f1(l1) + b * l2 * f2(l2)
    if den <= 0.0:
        raise ValueError("degenerate denominator")
    return (a * k1 * f1(k1) + b * k2 * f2(k2)) / den


# -- one-dimensional sup over t > 1 ------------------------------------------


def sup_over_t(func: Callable[[np.ndarray], np.ndarray], t_max: float = T_MAX, points: int = GRID_POINTS):
    """Maximize ``func`` on ``(1, t_max]``: log-spaced grid, then bounded Brent.

    The refinement runs on the bracket formed by the grid neighbours of the
    best grid point, so no unimodality is assumed globally. Returns
    ``(t, value)``.
    """
    t = np.geomspace(1.0 + 1e-9, t_max, points)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        vals = func(t)
    vals = np.where(np.isfinite(vals), vals, -np.inf)
    j = int(np.argmax(vals))
    lo, hi = t[max(j - 1, 0)], t[min(j + 1, points - 1)]
    best_t, best_v = float(t[j]), float(vals[j])
    if hi > lo:
        res = minimize_scalar(
            lambda x: -float(func(np.asarray(x))), bounds=(lo, hi), method="bounded", options={"xatol": REFINE_XATOL}
        )
        if -res.fun > best_v:
            best_t, best_v = float(res.x), float(-res.fun)
    return best_t, best_v


def _gamma_theta_objective(p: int, theta: float):
    # (t^{p+1}(1+θ) - t^p) / (t^{p+1}(1+θ) - t^p(1+θ) + θ), divided through by t^p
    def g(t):
        return (t * (1.0 + theta) - 1.0) / ((t - 1.0) * (1.0 + theta) + theta * t ** (-p))

    return g


def _eta_theta_objective(p: int, theta: float):
    # t^{p+1}(1+θ) / (t^{p+1}(1+θ) - t^p θ + θ), divided through by t^p
    def g(t):
        return t * (1.0 + theta) / (t * (1.0 + theta) - theta + theta * t ** (-p))

    return g


# -- polynomial classes --------------------------------------------------------


def _gamma_poly_root(p: int, q: int) -> float:
    return ((p + 1) ** (p + 1) * q**q / ((q + 1) ** (q + 1) * p**p)) ** (1.0 / (p - q))


@lru_cache(maxsize=None)
def gamma_poly(p: int, q: int) -> float:
    """θ-independent term for degrees ``q..p``; exactly 1 when ``q == p``."""
    _check_pq(p, q)
    if q == p:
        return 1.0
    r = _gamma_poly_root(p, q)
    return p**p * r ** (p + 1) / ((p + 1) ** (p + 1) * (r - 1.0))


def envelope_low(q: int, x: float) -> float:
    """Underloaded-family envelope ``q^q x^{q+1} / ((q+1)^{q+1} (x-1)^q)``."""
    return q**q * x ** (q + 1) / ((q + 1) ** (q + 1) * (x - 1.0) ** q)


def envelope_high(p: int, x: float) -> float:
    """Overloaded-family envelope ``p^p x^{p+1} / ((p+1)^{p+1} (x-1)^p)``."""
    return p**p * x ** (p + 1) / ((p + 1) ** (p + 1) * (x - 1.0) ** p)


def gamma_poly_crossing(p: int, q: int) -> float:
    """Closed-form crossing point ``x_hat = r / (r - 1)`` of the two envelopes."""
    _check_pq(p, q)
    if q == p:
        return p + 1.0
    r = _gamma_poly_root(p, q)
    return r / (r - 1.0)


def gamma_poly_numeric(p: int, q: int) -> tuple[float, float]:
    """Locate the envelope crossing by root finding; returns ``(x, value)``.

    Independent of the closed form: the log-difference of the envelopes is
    bracketed on ``(1, inf)`` and solved with Brent's method.
    """
    _check_pq(p, q)
    if q == p:
        return p + 1.0, 1.0

    def diff(x: float) -> float:
        return math.log(envelope_low(q, x)) - math.log(envelope_high(p, x))

    lo, hi = 1.0 + 1e-9, 2.0
    while diff(hi) < 0.0:
        hi *= 2.0
    x = brentq(diff, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=500)
    return x, envelope_low(q, x)


@lru_cache(maxsize=None)
def gamma_theta_poly(p: int, theta: float) -> float:
    """General-network θ term for degree ``p`` (independent of ``q``), numeric sup."""
    _check_pq(p)
    theta = _check_theta(theta, allow_inf=False)
    if theta == 0.0:
        return 1.0
    return sup_over_t(_gamma_theta_objective(int(p), theta))[1]


@lru_cache(maxsize=None)
def eta_theta_poly(p: int, theta: float) -> float:
    """Path-disjoint θ term: ``c / (c - θ p)`` with ``c = (1+θ)(p+1)^{(p+1)/p}``."""
    _check_pq(p)
    theta = _check_theta(theta, allow_inf=False)
    c = (1.0 + theta) * (p + 1.0) ** ((p + 1.0) / p)
    return c / (c - theta * p)


def eta_theta_poly_numeric(p: int, theta: float) -> float:
    """Numeric sup of the path-disjoint objective, for cross-checking."""
    _check_pq(p)
    theta = _check_theta(theta, allow_inf=False)
    if theta == 0.0:
        return 1.0
    return sup_over_t(_eta_theta_objective(int(p), theta))[1]


def eta_theta_maximizer(p: int) -> float:
    return (p + 1.0) ** (1.0 / p)


@lru_cache(maxsize=None)
def gamma_infinity_poly(p: int) -> float:
    """Unrestricted bound ``a / (a - p)`` with ``a = (p+1)^{(p+1)/p}``."""
    _check_pq(p)
    a = (p + 1.0) * (p + 1.0) ** (1.0 / p)
    return a / (a - p)


# -- combinators -----------------------------------------------------------------


def poa_bound(query: BoundQuery) -> BoundResult:
    """Tight bound for the query's polynomial class and topology."""
    p, q, theta = query.p, query.q, query.theta
    if math.isinf(theta):
        v = gamma_infinity_poly(p)
        return BoundResult(v, {"gamma_infinity": v}, Method.CLOSED_FORM)
    g = gamma_poly(p, q)
    if query.topology is Topology.GENERAL:
        t = gamma_theta_poly(p, theta)
        method = Method.NUMERIC if theta > 0.0 else Method.CLOSED_FORM
        return BoundResult(max(g, t), {"gamma": g, "gamma_theta": t}, method)
    e = eta_theta_poly(p, theta)
    return BoundResult(max(g, e), {"gamma": g, "eta_theta": e}, Method.CLOSED_FORM)


def bound(p: int, q: int, theta: float, topology: str | Topology = Topology.GENERAL) -> BoundResult:
    return poa_bound(BoundQuery(p, q, theta, Topology.parse(topology)))


def simple_upper_bound(p: int, q: int, theta: float) -> float:
    """``max(1 + θ, gamma_poly(p, q))``, a looser path-disjoint bound."""
    _check_pq(p, q)
    theta = _check_theta(theta, allow_inf=False)
    return max(1.0 + theta, gamma_poly(p, q))


def bound_curve(
    p: int, q: int, thetas: Sequence[float], topology: str | Topology = Topology.GENERAL
) -> list[tuple[float, float]]:
    thetas = [float(t) for t in thetas]
    if any(b < a for a, b in zip(thetas, thetas[1:])):
        raise ValueError("theta grid must be sorted")
    topo = Topology.parse(topology)
    return [(t, poa_bound(BoundQuery(p, q, t, topo)).value) for t in thetas]


TABLE1_THETAS = (0.0, 0.5, 1.0, math.inf)


def table1(max_p: int = 4, thetas: Iterable[float] = TABLE1_THETAS) -> list[dict]:
    """One row per ``(p, q, θ)`` with both topologies."""
    rows = []
    thetas = tuple(thetas)
    for p in range(1, max_p + 1):
        for q in range(1, p + 1):
            for theta in thetas:
                gen = poa_bound(BoundQuery(p, q, theta, Topology.GENERAL))
                pd = poa_bound(BoundQuery(p, q, theta, Topology.PATH_DISJOINT))
                method = Method.NUMERIC if Method.NUMERIC in (gen.method, pd.method) else Method.CLOSED_FORM
                rows.append(
                    {
                        "p": p,
                        "q": q,
                        "theta": theta,
                        "general": gen.value,
                        "path_disjoint": pd.value,
                        "method": method.value,
                    }
                )
    return rows


def format_theta(theta: float) -> str:
    return "inf" if math.isinf(theta) else f"{theta:g}"


def table1_csv(rows: list[dict] | None = None, digits: int = 4) -> str:
    rows = table1() if rows is None else rows
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "q", "theta", "general", "path_disjoint", "method"])
    for r in rows:
        w.writerow(
            [
                r["p"],
                r["q"],
                format_theta(r["theta"]),
                f"{r['general']:.{digits}f}",
                f"{r['path_disjoint']:.{digits}f}",
                r["method"],
            ]
        )
    return buf.getvalue()


def curves(p: int, q: int, theta_max: float, steps: int) -> list[dict]:
    """Evenly spaced θ grid on ``[0, theta_max]`` with both curves and the θ = ∞ level."""
    if steps < 2:
        raise ValueError("steps must be >= 2")
    theta_max = _check_theta(theta_max, allow_inf=False)
    grid = np.linspace(0.0, theta_max, steps).tolist()
    gen = bound_curve(p, q, grid, Topology.GENERAL)
    pd = bound_curve(p, q, grid, Topology.PATH_DISJOINT)
    ginf = gamma_infinity_poly(p)
    return [
        {"theta": t, "general": g, "path_disjoint": d, "gamma_inf": ginf} for (t, g), (_, d) in zip(gen, pd)
    ]


def curves_csv(rows: list[dict], digits: int = 6) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["theta", "general", "path_disjoint", "gamma_inf"])
    for r in rows:
        w.writerow([f"{r['theta']:.{digits}g}"] + [f"{r[c]:.{digits}f}" for c in ("general", "path_disjoint", "gamma_inf")])
    return buf.getvalue()
