from __future__ import annotations

import io
import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeflow.estimator import (
    DEFAULT_ROAD_SPEEDS,
    EstimatorConfig,
    MatchError,
    RoadEdge,
    RoadGraph,
    Trace,
    UnreachableError,
    best_free_flow_time,
    data_free_flow_time,
    deviation_distribution,
    equirectangular_m,
    estimate_all,
    estimate_trip,
    grid_detour_route,
    grid_node,
    grid_road_graph,
    load_road_graph,
    load_traces_csv,
    match_trace,
    route_free_flow_time,
    synth_fleet,
    synth_trace,
    write_estimates_csv,
    write_road_graph,
    write_traces_csv,
)
from freeflow.estimator.synth import route_edges

M_PER_DEG = 6_371_008.8 * math.pi / 180.0


def local_graph(points: dict[str, tuple[float, float]], edges, speed: float = 10.0) -> RoadGraph:
    """Graph from planar meter coordinates near the equator; lengths are the projected distances."""
    nodes = {n: (y / M_PER_DEG, x / M_PER_DEG) for n, (x, y) in points.items()}
    out = []
    for eid, a, b in edges:
        (la1, lo1), (la2, lo2) = nodes[a], nodes[b]
        out.append(RoadEdge(eid, a, b, float(equirectangular_m(la1, lo1, la2, lo2)), speed))
    return RoadGraph(nodes, tuple(out))


def drive(graph: RoadGraph, route: list[str], dt: float, skip=lambda s: False) -> Trace:
    """Noise-free samples every ``dt`` seconds, dropping those whose arc length satisfies ``skip``."""
    speed = graph.edges[0].speed_mps
    coords = np.array([graph.nodes[n] for n in route])
    seg = np.array([graph.edges[j].length_m for j in route_edges(graph, route)])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    s = np.append(np.arange(0.0, cum[-1], speed * dt), cum[-1])
    s = np.array([v for k, v in enumerate(s) if k in (0, len(s) - 1) or not skip(v)])
    i = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
    f = (s - cum[i]) / seg[i]
    lat = coords[i, 0] + f * (coords[i + 1, 0] - coords[i, 0])
    lon = coords[i, 1] + f * (coords[i + 1, 1] - coords[i, 1])
    return Trace(s / speed, lat, lon, route[0], route[-1])


class TestBestFreeFlow:
    def test_single_edge(self):
        g = RoadGraph({"a": (0.0, 0.0), "b": (0.0, 0.01)}, (RoadEdge("e", "a", "b", 1000.0, 10.0),))
        assert best_free_flow_time(g, "a", "b") == pytest.approx(100.0)
        assert best_free_flow_time(g, "b", "a") == pytest.approx(100.0)

    @pytest.mark.parametrize("shortcut_speed, expected", [(10.0, 150.0), (5.0, 200.0)])
    def test_triangle_with_shortcut(self, shortcut_speed, expected):
        nodes = {"a": (0.0, 0.0), "b": (0.005, 0.005), "c": (0.0, 0.01)}
        g = RoadGraph(
            nodes,
            (
                RoadEdge("ab", "a", "b", 1000.0, 10.0),
                RoadEdge("bc", "b", "c", 1000.0, 10.0),
                RoadEdge("ac", "a", "c", 1500.0, shortcut_speed),
            ),
        )
        assert best_free_flow_time(g, "a", "c") == pytest.approx(expected)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(3.0, 30.0), min_size=24, max_size=24))
    def test_grid_matches_path_enumeration(self, speeds):
        base = grid_road_graph(4, 4, spacing_m=100.0)
        g = RoadGraph(base.nodes, tuple(RoadEdge(e.id, e.source, e.target, e.length_m, v) for e, v in zip(base.edges, speeds)))
        adj: dict[str, list[tuple[str, float]]] = {n: [] for n in g.nodes}
        for e in g.edges:
            adj[e.source].append((e.target, e.free_flow_s))
            adj[e.target].append((e.source, e.free_flow_s))
        src, dst = grid_node(0, 0), grid_node(3, 3)
        best = math.inf
        stack = [(src, frozenset([src]), 0.0)]
        while stack:
            u, seen, cost = stack.pop()
            if u == dst:
                best = min(best, cost)
                continue
            stack.extend((v, seen | {v}, cost + w) for v, w in adj[u] if v not in seen)
        assert best_free_flow_time(g, src, dst) == pytest.approx(best, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=3, max_size=3), st.integers(0, 10**6))
    def test_triangle_property(self, cells, seed):
        base = grid_road_graph(5, 5, spacing_m=150.0)
        speeds = np.random.default_rng(seed).uniform(2.0, 25.0, len(base.edges))
        g = RoadGraph(base.nodes, tuple(RoadEdge(e.id, e.source, e.target, e.length_m, float(v)) for e, v in zip(base.edges, speeds)))
        a, b, c = (grid_node(*x) for x in cells)
        t = lambda u, v: 0.0 if u == v else best_free_flow_time(g, u, v)
        assert t(a, c) <= t(a, b) + t(b, c) + 1e-9

    def test_unreachable_and_unknown(self):
        g = RoadGraph(
            {"a": (0.0, 0.0), "b": (0.0, 0.01), "c": (0.01, 0.0), "d": (0.01, 0.01)},
            (RoadEdge("ab", "a", "b", 1000.0, 10.0), RoadEdge("cd", "c", "d", 1000.0, 10.0)),
        )
        with pytest.raises(UnreachableError):
            best_free_flow_time(g, "a", "d")
        with pytest.raises(KeyError):
            best_free_flow_time(g, "a", "zz")

    def test_shortest_route_tie_break_is_lexicographic(self):
        g = grid_road_graph(2, 2)
        _, nodes, _ = g.shortest_route(grid_node(0, 0), grid_node(1, 1))
        assert nodes == [grid_node(0, 0), grid_node(0, 1), grid_node(1, 1)]


class TestRoadGraphIO:
    def test_validation(self):
        with pytest.raises(ValueError):
            RoadGraph({"a": (0.0, 0.0), "b": (0.0, 0.01)}, (RoadEdge("e", "a", "b", 0.0, 10.0),))
        with pytest.raises(ValueError):
            RoadGraph({"a": (0.0, 0.0)}, (RoadEdge("e", "a", "b", 10.0, 10.0),))

    def test_roundtrip(self, tmp_path):
        g = grid_road_graph(3, 4)
        write_road_graph(g, tmp_path / "n.csv", tmp_path / "e.csv")
        h = load_road_graph(tmp_path / "n.csv", tmp_path / "e.csv")
        assert h.nodes == g.nodes and h.edges == g.edges

    def test_speed_falls_back_to_road_type(self, tmp_path):
        (tmp_path / "n.csv").write_text("id,lat,lon\na,0,0\nb,0,0.01\nc,0.01,0.01\n")
        (tmp_path / "e.csv").write_text(
            "id,from,to,length_m,speed_mps,road_type\n"
            "ab,a,b,1000,,expressway\n"
            "bc,b,c,1000,,arterial\n"
        )
        g = load_road_graph(tmp_path / "n.csv", tmp_path / "e.csv")
        assert [e.speed_mps for e in g.edges] == [DEFAULT_ROAD_SPEEDS["expressway"], DEFAULT_ROAD_SPEEDS["arterial"]]
        g2 = load_road_graph(tmp_path / "n.csv", tmp_path / "e.csv", {"expressway": 20.0, "arterial": 10.0})
        assert best_free_flow_time(g2, "a", "c") == pytest.approx(150.0)

    def test_unknown_road_type_without_speed(self, tmp_path):
        (tmp_path / "n.csv").write_text("id,lat,lon\na,0,0\nb,0,0.01\n")
        (tmp_path / "e.csv").write_text("id,from,to,length_m,speed_mps,road_type\nab,a,b,1000,,dirt\n")
        with pytest.raises(ValueError, match="road type"):
            load_road_graph(tmp_path / "n.csv", tmp_path / "e.csv")

    def test_equirectangular_small_scale(self):
        # 0.01 degrees of longitude on the equator
        assert equirectangular_m(0.0, 0.0, 0.0, 0.01) == pytest.approx(0.01 * M_PER_DEG)


LINE = {"A": (0.0, 0.0), "B": (500.0, 0.0), "C": (550.0, 0.0), "D": (1050.0, 0.0)}


class TestMatching:
    def test_exact_route_has_no_gaps(self):
        g = grid_road_graph(6, 6)
        route = grid_detour_route(2, 0, 4, 2)
        m = match_trace(g, synth_trace(g, route, 4.0))
        assert [j for j, _, _ in m.directed_edges()] == route_edges(g, route)
        assert [(s, t) for _, s, t in m.directed_edges()] == list(zip(route, route[1:]))
        assert not m.gaps
        total, rep = data_free_flow_time(g, m)
        assert total == pytest.approx(route_free_flow_time(g, route), rel=1e-12)
        assert rep.n_small == rep.n_large == 0

    def test_reversed_route_is_oriented_backwards(self):
        g = grid_road_graph(1, 5)
        route = [grid_node(0, c) for c in range(4, -1, -1)]
        m = match_trace(g, synth_trace(g, route, 3.0))
        assert [(s, t) for _, s, t in m.directed_edges()] == list(zip(route, route[1:]))

    def test_fifty_meter_gap_is_small(self):
        g = local_graph(LINE, [("AB", "A", "B"), ("BC", "B", "C"), ("CD", "C", "D")])
        tr = drive(g, list("ABCD"), 1.0, skip=lambda s: 495.0 < s < 555.0)
        m = match_trace(g, tr)
        assert [g.edges[j].id for j, _, _ in m.directed_edges()] == ["AB", "CD"]
        (gap,) = m.gaps
        assert (gap.from_node, gap.to_node) == ("B", "C")
        assert gap.length_m == pytest.approx(50.0, rel=1e-9)
        assert gap.speed_mps == pytest.approx(10.0, rel=1e-9)
        total, rep = data_free_flow_time(g, m)
        assert rep.n_small == 1 and rep.n_large == 0
        assert total == pytest.approx(100.0 + 5.0, rel=1e-9)

    def test_five_hundred_meter_gap_uses_shortest_path(self):
        # straight-line B-C is 500 m but the road bends through Y (2 x 400 m)
        pts = {"A": (0.0, 0.0), "B": (200.0, 0.0), "Y": (450.0, 312.25), "C": (700.0, 0.0), "D": (900.0, 0.0)}
        g = local_graph(pts, [("AB", "A", "B"), ("BY", "B", "Y"), ("YC", "Y", "C"), ("CD", "C", "D")])
        byc = g.edges[1].length_m + g.edges[2].length_m
        tr = drive(g, list("ABYCD"), 1.0, skip=lambda s: 190.0 < s < 210.0 + byc)
        m = match_trace(g, tr)
        (gap,) = m.gaps
        assert gap.length_m == pytest.approx(500.0, rel=1e-9)
        total, rep = data_free_flow_time(g, m)
        assert rep.n_small == 0 and rep.n_large == 1
        assert rep.large_time_s == pytest.approx(byc / 10.0, rel=1e-12)
        assert total == pytest.approx(40.0 + byc / 10.0, rel=1e-9)

    def test_points_far_from_every_edge(self):
        g = grid_road_graph(3, 3)
        lat, lon = g.nodes[grid_node(0, 0)]
        off = 100.0 / M_PER_DEG  # 100 m south-west of the grid corner
        tr = Trace(np.arange(3.0), np.full(3, lat - off), np.full(3, lon - off))
        with pytest.raises(MatchError):
            match_trace(g, tr)
        with pytest.raises(ValueError):
            match_trace(g, tr, snap_radius=0.0)

    @pytest.mark.parametrize("dt", [2.0, 5.0, 9.0])
    def test_idempotent_under_resampling(self, dt):
        g = grid_road_graph(8, 8)
        route = grid_detour_route(3, 1, 6, -2)
        coarse = match_trace(g, synth_trace(g, route, dt)).directed_edges()
        fine = match_trace(g, synth_trace(g, route, dt / 2)).directed_edges()
        assert coarse == fine

    @pytest.mark.parametrize("seed", range(5))
    def test_noise_below_half_separation_recovers_route(self, seed):
        g = grid_road_graph(8, 8)
        route = g.shortest_route(grid_node(1, 1), grid_node(6, 5))[1]
        tr = synth_trace(g, route, 3.0, noise_std=8.0, rng=seed)
        m = match_trace(g, tr)
        assert [j for j, _, _ in m.directed_edges()] == route_edges(g, route)
        assert not m.gaps

    @pytest.mark.parametrize("seed", [3, 11, 42, 7])
    def test_seeded_drops_give_predicted_gaps(self, seed):
        # 10 m/s and 5 s sampling put samples at 50, 100 and 150 m along each
        # 200 m edge or exactly on a node; a straight row keeps straight-line gap
        # lengths equal to road lengths.
        g = grid_road_graph(1, 16, speed_mps=10.0)
        route = [grid_node(0, c) for c in range(16)]
        tr = synth_trace(g, route, 5.0, drop_prob=0.6, rng=seed)
        # oracle: an edge is covered when it keeps a sample farther than the snap
        # radius from both ends; gaps are maximal blocks of uncovered edges
        s = np.round(tr.times * 10.0, 6)
        covered = {int(v // 200) for v in s if 30.0 < v % 200 < 170.0}
        empty = [c not in covered for c in range(15)]
        blocks = [len(list(grp)) for key, grp in itertools.groupby(empty) if key]
        assert blocks, "fixture should contain at least one gap"
        m = match_trace(g, tr)
        lengths = sorted(gp.length_m for gp in m.gaps)
        assert lengths == pytest.approx(sorted(200.0 * b for b in blocks), rel=1e-9)
        total, rep = data_free_flow_time(g, m)
        assert rep.n_small == sum(1 for b in blocks if 200.0 * b < 300.0)
        assert rep.n_large == sum(1 for b in blocks if 200.0 * b >= 300.0)
        # gaps on a straight noise-free row are priced at the true driving time
        assert total == pytest.approx(route_free_flow_time(g, route), rel=1e-9)


class TestEstimate:
    def test_shortest_path_trace(self):
        g = grid_road_graph(10, 10)
        route = g.shortest_route(grid_node(2, 1), grid_node(7, 8))[1]
        est = estimate_trip(g, synth_trace(g, route, 4.0, trip_id="t"))
        assert est.deviation == pytest.approx(1.0, abs=1e-9)
        assert est.theta_hat >= -1e-9
        assert est.gap_report.n_small == est.gap_report.n_large == 0

    @pytest.mark.parametrize("h, span", [(1, 4), (2, 8), (3, 12)])
    def test_planted_detour(self, h, span):
        g = grid_road_graph(20, 20)
        route = grid_detour_route(5, 2, 2 + span, h)
        assert route_free_flow_time(g, route) == pytest.approx(1.5 * best_free_flow_time(g, route[0], route[-1]))
        est = estimate_trip(g, synth_trace(g, route, 4.0, noise_std=5.0, drop_prob=0.1, rng=h))
        assert est.deviation == pytest.approx(1.5, rel=0.02)

    def test_gap_free_match_is_never_below_shortest(self):
        fleet = synth_fleet(12, 12, 40, ((0.0, 1.0), (0.5, 1.0)), sample_interval=3.0, seed=5)
        ests, failed = estimate_all(fleet.graph, fleet.traces)
        assert not failed
        for e in ests:
            assert e.gap_report.n_small + e.gap_report.n_large == 0
            assert e.theta_hat >= -1e-9

    def test_failures_are_reported_not_raised(self):
        g = grid_road_graph(3, 3)
        lat, lon = g.nodes[grid_node(0, 0)]
        far = Trace(np.arange(2.0), np.full(2, lat - 0.01), np.full(2, lon - 0.01), trip_id="far")
        good = synth_trace(g, [grid_node(0, 0), grid_node(0, 1)], 4.0, trip_id="ok")
        ests, failed = estimate_all(g, [far, good])
        assert [e.trip_id for e in ests] == ["ok"]
        assert [t for t, _ in failed] == ["far"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            EstimatorConfig(snap_radius=-1.0)


class TestDistribution:
    def test_all_zero(self):
        s = deviation_distribution([0.0] * 7)
        assert all(v == 0.0 for v in s.quantiles.values())
        assert all(v == 1.0 for v in s.fraction_below.values())
        assert len(s.quantiles) == 11

    def test_planted_mixture(self):
        s = deviation_distribution([0.2] * 60 + [1.5] * 40)
        assert s.fraction_below[1.0] == pytest.approx(0.6)
        assert s.fraction_below[0.25] == pytest.approx(0.6)
        assert s.quantiles[0.5] == pytest.approx(0.2) and s.quantiles[1.0] == pytest.approx(1.5)

    @given(st.lists(st.floats(0.0, 5.0), min_size=1, max_size=60))
    def test_fractions_monotone(self, vals):
        fr = list(deviation_distribution(vals).fraction_below.values())
        assert all(b >= a for a, b in zip(fr, fr[1:]))

    def test_empty(self):
        with pytest.raises(ValueError):
            deviation_distribution([])

    def test_reproduces_planted_population(self):
        fleet = synth_fleet(20, 20, 200, ((0.0, 2.0), (0.25, 1.0), (0.5, 1.0), (1.5, 1.0)), seed=9)
        ests, failed = estimate_all(fleet.graph, fleet.traces)
        assert not failed
        got = deviation_distribution(ests)
        want = deviation_distribution(list(fleet.planted_theta))
        for t in (0.88, 1.0):
            assert abs(got.fraction_below[t] - want.fraction_below[t]) <= 1 / 200
        for p in got.quantiles:
            assert got.quantiles[p] == pytest.approx(want.quantiles[p], abs=1e-9)


class TestTraceIO:
    def test_trace_validation(self):
        with pytest.raises(ValueError):
            Trace([0.0, 0.0], [0.0, 0.0], [0.0, 0.0])
        with pytest.raises(ValueError):
            Trace([0.0, 1.0], [0.0, math.nan], [0.0, 0.0])

    def test_roundtrip_and_sorting(self, tmp_path):
        fleet = synth_fleet(5, 5, 4, seed=1)
        write_traces_csv(fleet.traces, tmp_path / "t.csv")
        lines = (tmp_path / "t.csv").read_text().splitlines()
        (tmp_path / "shuffled.csv").write_text("\n".join([lines[0]] + lines[:0:-1]) + "\n")
        back = {t.trip_id: t for t in load_traces_csv(tmp_path / "shuffled.csv")}
        for tr in fleet.traces:
            np.testing.assert_array_equal(back[tr.trip_id].times, tr.times)
            np.testing.assert_array_equal(back[tr.trip_id].lats, tr.lats)

    def test_estimates_csv_columns(self):
        g = grid_road_graph(3, 3)
        est = estimate_trip(g, synth_trace(g, [grid_node(0, 0), grid_node(0, 1), grid_node(1, 1)], 4.0, trip_id="x"))
        buf = io.StringIO()
        write_estimates_csv([est], buf)
        header, row = buf.getvalue().splitlines()
        assert header == "trip_id,best_ff_s,data_ff_s,deviation,theta_hat,n_small_gaps,n_large_gaps"
        assert row.startswith("x,")
