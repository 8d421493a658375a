from __future__ import annotations

import csv
import io
import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeflow import LatencyFunction, monomial
from freeflow.bounds import (
    BoundQuery,
    Method,
    Topology,
    bound,
    bound_curve,
    curves,
    curves_csv,
    envelope_high,
    envelope_low,
    eta_theta_maximizer,
    eta_theta_point,
    eta_theta_poly,
    eta_theta_poly_numeric,
    gamma_infinity_point,
    gamma_infinity_poly,
    gamma_point,
    gamma_poly,
    gamma_poly_crossing,
    gamma_poly_numeric,
    gamma_theta_point,
    gamma_theta_poly,
    poa_bound,
    simple_upper_bound,
    sup_over_t,
    table1,
    table1_csv,
)
from freeflow.generators import gamma_poly_witness
from reference_values import TABLE, THETAS

T_GRID = np.geomspace(1.0 + 1e-7, 1e4, 400_001)


def grid_sup(point, p: int, *args) -> float:
    """Dense-grid sup of a pointwise ratio over k/l for ``f = x^p`` (independent oracle)."""
    t = T_GRID
    fk, fl = t**p, 1.0
    if point is gamma_theta_point:
        (theta,) = args
        vals = ((t - 1) * fk + t * fk * theta) / ((t - 1) * fk + ((t - 1) * fk + fl) * theta)
    elif point is eta_theta_point:
        (theta,) = args
        vals = t * fk * (1 + theta) / (t * fk + ((t - 1) * fk + fl) * theta)
    else:
        vals = t * fk / ((t - 1) * fk + fl)
    return float(vals.max())


class TestPointwise:
    def test_pointwise_formulas_agree_with_vectorized_oracle(self):
        f = monomial(3)
        for theta in (0.5, 2.0):
            assert gamma_theta_point(2.0, 1.0, f, theta) == pytest.approx(
                ((1) * 8 + 2 * 8 * theta) / (8 + (8 + 1) * theta)
            )
            assert eta_theta_point(2.0, 1.0, f, theta) == pytest.approx(16 * (1 + theta) / (16 + 9 * theta))
        assert gamma_infinity_point(2.0, 1.0, f) == pytest.approx(16 / 9)

    @pytest.mark.parametrize("fn", [gamma_theta_point, eta_theta_point])
    def test_rejects_bad_inputs(self, fn):
        with pytest.raises(ValueError):
            fn(1.0, 2.0, monomial(1), 1.0)
        with pytest.raises(ValueError):
            fn(2.0, 1.0, LatencyFunction({1: 1.0}, 1.0), 1.0)
        with pytest.raises(ValueError):
            fn(2.0, 1.0, monomial(1), math.inf)
        with pytest.raises(ValueError):
            fn(2.0, 1.0, monomial(1), -0.1)

    @settings(max_examples=50, deadline=None)
    @given(
        k=st.floats(1.01, 10.0),
        frac=st.floats(0.01, 0.99),
        theta=st.floats(0.0, 20.0),
        p=st.integers(1, 5),
    )
    def test_eta_never_exceeds_gamma_theta(self, k, frac, theta, p):
        f = monomial(p)
        l = k * frac
        assert eta_theta_point(k, l, f, theta) <= gamma_theta_point(k, l, f, theta) + 1e-12
        assert gamma_theta_point(k, l, f, theta) <= gamma_infinity_point(k, l, f) + 1e-12

    def test_gamma_point_at_witness(self):
        k1, l1, k2, l2 = gamma_poly_witness(2, 1)
        assert gamma_point(k1, l1, monomial(2), k2, l2, monomial(1)) == pytest.approx(gamma_poly(2, 1), rel=1e-12)


class TestPolynomialClass:
    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    @pytest.mark.parametrize("theta", [0.5, 1.0, 3.0])
    def test_gamma_theta_matches_grid(self, p, theta):
        assert gamma_theta_poly(p, theta) == pytest.approx(grid_sup(gamma_theta_point, p, theta), rel=1e-7)

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5, 6])
    @pytest.mark.parametrize("theta", [0.1, 0.5, 1.0, 2.5, 5.0])
    def test_eta_closed_form_vs_numeric(self, p, theta):
        assert eta_theta_poly(p, theta) == pytest.approx(eta_theta_poly_numeric(p, theta), abs=1e-10)
        assert eta_theta_poly(p, theta) == pytest.approx(grid_sup(eta_theta_point, p, theta), rel=1e-8)

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_eta_maximizer(self, p):
        t = eta_theta_maximizer(p)
        f = monomial(p)
        assert eta_theta_point(t, 1.0, f, 1.0) == pytest.approx(eta_theta_poly(p, 1.0), rel=1e-12)

    @pytest.mark.parametrize("p, expected", [(1, 4 / 3), (2, None), (4, 2.1505)])
    def test_gamma_infinity(self, p, expected):
        v = gamma_infinity_poly(p)
        assert v == pytest.approx(grid_sup(gamma_infinity_point, p), rel=1e-8)
        if expected is not None:
            assert v == pytest.approx(expected, abs=1e-4)

    @pytest.mark.parametrize("p, q", [(2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3), (6, 1)])
    def test_gamma_poly_envelopes_cross(self, p, q):
        x = gamma_poly_crossing(p, q)
        assert envelope_low(q, x) == pytest.approx(envelope_high(p, x), abs=1e-10)
        assert envelope_low(q, x) == pytest.approx(gamma_poly(p, q), abs=1e-10)
        xn, vn = gamma_poly_numeric(p, q)
        assert xn == pytest.approx(x, rel=1e-10) and vn == pytest.approx(gamma_poly(p, q), abs=1e-10)

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_gamma_poly_same_degree_is_one(self, p):
        assert gamma_poly(p, p) == 1.0

    def test_sup_over_t_on_known_peak(self):
        t_star, v = sup_over_t(lambda t: -((np.log(t) - 1.0) ** 2))
        assert t_star == pytest.approx(math.e, rel=1e-6) and v == pytest.approx(0.0, abs=1e-12)


class TestCombinators:
    @pytest.mark.parametrize("pq", sorted(TABLE))
    @pytest.mark.parametrize("theta", THETAS)
    def test_table_cell(self, pq, theta):
        p, q = pq
        general, disjoint = TABLE[pq][theta]
        assert bound(p, q, theta, "general").value == pytest.approx(general, abs=5e-4)
        assert bound(p, q, theta, "path-disjoint").value == pytest.approx(disjoint, abs=5e-4)

    def test_table_shape_and_runtime(self):
        start = time.perf_counter()
        rows = table1()
        assert time.perf_counter() - start < 5.0
        assert len(rows) == 40
        parsed = list(csv.DictReader(io.StringIO(table1_csv(rows))))
        assert len(parsed) == 40
        assert all(len(r["general"].split(".")[1]) == 4 for r in parsed)
        cell = next(r for r in parsed if (r["p"], r["q"], r["theta"]) == ("3", "3", "1"))
        assert cell["path_disjoint"] == "1.3093"

    @pytest.mark.parametrize(
        "p, q, theta",
        [(2, 3, 1.0), (0, 0, 1.0), (2, 1, -1.0), (2, 1, math.nan), (1.5, 1, 1.0)],
    )
    def test_invalid_queries(self, p, q, theta):
        with pytest.raises(ValueError):
            BoundQuery(p, q, theta)

    def test_topology_parse(self):
        assert Topology.parse("path_disjoint") is Topology.PATH_DISJOINT
        with pytest.raises(ValueError):
            Topology.parse("ring")

    def test_infinity_routes_to_gamma_infinity(self):
        for topo in Topology:
            res = poa_bound(BoundQuery(4, 1, math.inf, topo))
            assert res.value == gamma_infinity_poly(4)
            assert res.method is Method.CLOSED_FORM

    @pytest.mark.parametrize("p", [1, 2, 3, 4])
    def test_monotone_and_below_infinity_level(self, p):
        grid = [0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0]
        for topo in Topology:
            vals = [v for _, v in bound_curve(p, 1, grid, topo)]
            assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
            assert vals[-1] <= gamma_infinity_poly(p) + 1e-12

    @pytest.mark.parametrize("p", [1, 2, 4])
    def test_large_theta_limit(self, p):
        assert gamma_theta_poly(p, 1e6) == pytest.approx(gamma_infinity_poly(p), abs=1e-3)
        assert eta_theta_poly(p, 1e6) == pytest.approx(gamma_infinity_poly(p), abs=1e-3)

    @settings(max_examples=40, deadline=None)
    @given(p=st.integers(1, 4), data=st.data(), theta=st.floats(0.0, 50.0))
    def test_path_disjoint_below_simple_bound(self, p, data, theta):
        q = data.draw(st.integers(1, p))
        assert bound(p, q, theta, "path-disjoint").value <= simple_upper_bound(p, q, theta) + 1e-12

    def test_curve_grid_must_be_sorted(self):
        with pytest.raises(ValueError):
            bound_curve(2, 1, [1.0, 0.5])

    def test_curves_csv(self):
        rows = curves(4, 4, 1.0, 11)
        text = curves_csv(rows)
        assert text.splitlines()[0] == "theta,general,path_disjoint,gamma_inf"
        assert rows[-1]["general"] == pytest.approx(1.6994, abs=5e-5)
        assert rows[-1]["path_disjoint"] == pytest.approx(1.3652, abs=5e-5)
        assert all(r["gamma_inf"] == pytest.approx(2.1505, abs=5e-5) for r in rows)
        with pytest.raises(ValueError):
            curves(4, 4, 1.0, 1)
