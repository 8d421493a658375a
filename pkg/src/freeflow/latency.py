"""Polynomial latency functions with nonnegative coefficients."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class LatencyFunction:
    """``l(x) = sum_d alpha_d x^d + beta`` with every coefficient >= 0.

    ``coeffs`` maps an integer degree ``d >= 1`` to ``alpha_d``. Zero
    coefficients are dropped on construction so that ``min_degree`` and
    ``max_degree`` always refer to terms that are actually present.
    """

    coeffs: Mapping[int, float] = field(default_factory=dict)
    beta: float = 0.0

    def __post_init__(self) -> None:
        clean: dict[int, float] = {}
        for d, a in dict(self.coeffs).items():
            d = int(d)
            a = float(a)
            if d < 1:
                raise ValueError(f"degree must be >= 1, got {d}")
            if not a >= 0.0:
                raise ValueError(f"coefficient of x^{d} must be >= 0, got {a}")
            if a > 0.0:
                clean[d] = clean.get(d, 0.0) + a
        beta = float(self.beta)
        if not beta >= 0.0:
            raise ValueError(f"constant term must be >= 0, got {beta}")
        if not clean and beta == 0.0:
            raise ValueError("latency function is identically zero")
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))
        object.__setattr__(self, "beta", beta)

    @property
    def min_degree(self) -> int | None:
        return min(self.coeffs) if self.coeffs else None

    @property
    def max_degree(self) -> int | None:
        return max(self.coeffs) if self.coeffs else None

    @property
    def is_homogeneous(self) -> bool:
        return self.beta == 0.0

    def __call__(self, x):
        return eval_latency(self, x)

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for d, a in self.coeffs.items():
            out = out + d * a * x ** (d - 1)
        return out if out.ndim else float(out)

    def marginal(self, x):
        """Marginal social cost ``l(x) + x l'(x)``."""
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.beta)
        for d, a in self.coeffs.items():
            out = out + (d + 1) * a * x**d
        return out if out.ndim else float(out)

    def integral(self, x):
        """``int_0^x l(t) dt``, the per-resource term of the potential."""
        x = np.asarray(x, dtype=float)
        out = self.beta * x
        for d, a in self.coeffs.items():
            out = out + a * x ** (d + 1) / (d + 1)
        return out if out.ndim else float(out)

    def scaled(self, factor: float) -> LatencyFunction:
        return LatencyFunction({d: factor * a for d, a in self.coeffs.items()}, factor * self.beta)

    def to_json(self) -> dict:
        return {"coeffs": {str(d): a for d, a in self.coeffs.items()}, "beta": self.beta}

    @classmethod
    def from_json(cls, data: Mapping) -> LatencyFunction:
        return cls({int(d): float(a) for d, a in data.get("coeffs", {}).items()}, float(data.get("beta", 0.0)))

    def __str__(self) -> str:
        terms = [f"{a:g}*x^{d}" if d > 1 else f"{a:g}*x" for d, a in self.coeffs.items()]
        if self.beta or not terms:
            terms.append(f"{self.beta:g}")
        return " + ".join(terms)


def eval_latency(f: LatencyFunction, x):
    """Evaluate ``f`` at ``x >= 0`` (scalar or array)."""
    arr = np.asarray(x, dtype=float)
    out = np.full_like(arr, f.beta)
    for d, a in f.coeffs.items():
        out = out + a * arr**d
    return out if out.ndim else float(out)


def homogenize(f: LatencyFunction) -> LatencyFunction:
    """Drop the constant term, giving ``f(x) - f(0)``."""
    if not f.coeffs:
        raise ValueError("a constant latency function homogenizes to zero")
    return LatencyFunction(f.coeffs, 0.0)


def monomial(degree: int, alpha: float = 1.0) -> LatencyFunction:
    return LatencyFunction({degree: alpha})


_TERM = re.compile(
    r"""^(?:(?P<coef>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)\s*\*?\s*)?
        (?P<x>x(?:\s*(?:\^|\*\*)\s*(?P<deg>\d+))?)?$""",
    re.VERBOSE,
)


def parse_latency(text: str) -> LatencyFunction:
    """Parse the small latency language used on the command line.

    Accepted terms are ``x``, ``x^p``, ``a*x^p``, ``a*x`` and plain
    constants, joined by ``+``. ``**`` is accepted in place of ``^``.

    >>> parse_latency("2*x^4 + x + 0.5")
    LatencyFunction(coeffs={1: 1.0, 4: 2.0}, beta=0.5)
    """
    coeffs: dict[int, float] = {}
    beta = 0.0
    parts = [p.strip() for p in text.split("+")]
    if not parts or any(not p for p in parts):
        raise ValueError(f"cannot parse latency {text!r}")
    for part in parts:
        m = _TERM.match(part)
        if m is None or (m.group("coef") is None and m.group("x") is None):
            raise ValueError(f"cannot parse latency term {part!r}")
        coef = float(m.group("coef")) if m.group("coef") is not None else 1.0
        if m.group("x") is None:
            beta += coef
        else:
            deg = int(m.group("deg")) if m.group("deg") is not None else 1
            coeffs[deg] = coeffs.get(deg, 0.0) + coef
    return LatencyFunction(coeffs, beta)
