from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freeflow import CongestionGame, FlowProfile, LatencyFunction, NetworkCongestionGame, total_latency
from freeflow.solver import (
    ConvergenceError,
    brute_force_poa,
    compositions,
    optimality_gap,
    poa_batch,
    price_of_anarchy,
    solve_equilibrium,
    solve_optimum,
    wardrop_gap,
)


def parallel(lats: list[LatencyFunction], demand: float = 1.0) -> CongestionGame:
    ids = {f"e{j}": f for j, f in enumerate(lats)}
    return CongestionGame.build(ids, [(demand, [[r] for r in ids])])


def pigou(c: float) -> CongestionGame:
    return parallel([LatencyFunction({}, 1.0), LatencyFunction({1: 1.0}, c)])


class TestGap:
    def test_unit_gap_example(self):
        g = parallel([LatencyFunction({1: 1.0}), LatencyFunction({1: 1.0})])
        assert wardrop_gap(g, FlowProfile({(0, 0): 1.0, (0, 1): 0.0})) == pytest.approx(1.0)
        assert wardrop_gap(g, FlowProfile({(0, 0): 0.5, (0, 1): 0.5})) == pytest.approx(0.0)

    def test_gap_is_zero_at_pigou_equilibrium(self):
        g = pigou(0.5)
        assert wardrop_gap(g, FlowProfile({(0, 0): 0.5, (0, 1): 0.5})) == pytest.approx(0.0, abs=1e-15)
        # the optimum of Pigou routes 3/4 on x + 1/2: marginal 2x + 1/2 = 1 at x = 1/4
        assert optimality_gap(g, FlowProfile({(0, 0): 0.75, (0, 1): 0.25})) == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_gap_in_unit_interval(self, share):
        g = pigou(0.3)
        gap = wardrop_gap(g, FlowProfile({(0, 0): share, (0, 1): 1.0 - share}))
        assert 0.0 <= gap <= 1.0


class TestSolve:
    @pytest.mark.parametrize("c", [0.0, 0.25, 0.5, 0.75, 1.0])
    def test_pigou_closed_form(self, c):
        rep = price_of_anarchy(pigou(c))
        assert rep.ratio == pytest.approx(4.0 / ((c + 1.0) * (3.0 - c)), abs=1e-9)
        assert rep.eq_cost == pytest.approx(1.0, abs=1e-9)

    def test_linear_links_split_proportionally(self):
        # x and 2x with demand 3: equal costs at loads (2, 1)
        g = parallel([LatencyFunction({1: 1.0}), LatencyFunction({1: 2.0})], 3.0)
        rep = solve_equilibrium(g)
        assert rep.converged
        assert rep.loads["e0"] == pytest.approx(2.0, abs=1e-7)
        assert rep.total_latency == pytest.approx(6.0, abs=1e-7)
        assert price_of_anarchy(g).ratio == pytest.approx(1.0, abs=1e-9)

    def test_reports_convergence(self):
        g = parallel([LatencyFunction({4: 1.0}, 1.0), LatencyFunction({1: 2.0}), LatencyFunction({}, 2.5)], 2.0)
        rep = solve_equilibrium(g, tol=1e-10)
        assert rep.converged and rep.wardrop_gap <= 1e-10
        opt = solve_optimum(g, tol=1e-10)
        assert opt.converged and opt.total_latency <= rep.total_latency + 1e-12
        assert optimality_gap(g, opt.profile) <= 1e-10
        rep.profile.check_conservation(g)

    def test_max_iters_exhaustion(self):
        g = parallel([LatencyFunction({4: 1.0}), LatencyFunction({1: 3.0}, 0.2), LatencyFunction({2: 1.0}, 0.1)], 5.0)
        rep = solve_equilibrium(g, tol=1e-300, max_iters=1)
        assert not rep.converged
        with pytest.raises(ConvergenceError):
            price_of_anarchy(g, tol=1e-300, max_iters=1)

    def test_zero_demand(self):
        g = parallel([LatencyFunction({1: 1.0}), LatencyFunction({}, 1.0)], 0.0)
        rep = price_of_anarchy(g)
        assert rep.eq_cost == 0.0 and rep.ratio == 1.0

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_random_starts_agree(self, seed):
        g = parallel([LatencyFunction({4: 0.5}, 1.0), LatencyFunction({4: 2.0}, 0.3), LatencyFunction({2: 1.0}, 0.8)], 2.0)
        base = solve_equilibrium(g, tol=1e-10).total_latency
        assert solve_equilibrium(g, tol=1e-10, seed=seed).total_latency == pytest.approx(base, rel=1e-8)

    def test_network_matches_path_enumeration(self):
        x = LatencyFunction({1: 1.0})
        one = LatencyFunction({}, 1.0)
        net = NetworkCongestionGame.build(
            ["s", "a", "b", "t"],
            [("sa", "s", "a", x), ("at", "a", "t", one), ("sb", "s", "b", one), ("bt", "b", "t", x),
             ("ab", "a", "b", LatencyFunction({}, 0.1))],
            [("s", "t", 1.0)],
        )
        explicit = CongestionGame.build(
            dict(zip(net.resource_ids, net.latencies)),
            [(1.0, [[net.resource_ids[e] for e in p] for p in net.enumerate_paths(0)])],
        )
        a = price_of_anarchy(net, tol=1e-10)
        b = price_of_anarchy(explicit, tol=1e-10)
        assert a.eq_cost == pytest.approx(b.eq_cost, rel=1e-8)
        assert a.opt_cost == pytest.approx(b.opt_cost, rel=1e-8)
        # zig-zag share z with the rest split evenly: 1.5 + z/2 = 1.1 + z at z = 0.8
        assert a.eq_cost == pytest.approx(1.9, abs=1e-8)

    def test_batch(self):
        reps = poa_batch([pigou(0.5), pigou(1.0)])
        assert [r.ratio for r in reps] == pytest.approx([16 / 15, 1.0])


class TestBruteForce:
    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 12), st.integers(1, 4))
    def test_composition_count(self, n, s):
        comp = compositions(n, s)
        assert comp.shape == (math.comb(n + s - 1, s - 1), s)
        assert np.all(comp.sum(axis=1) == n) and np.all(comp >= 0)
        assert len({tuple(r) for r in comp}) == len(comp)

    def test_two_link_oracle(self):
        g = parallel([LatencyFunction({4: 1.0}, 1.0), LatencyFunction({}, 2.0)])
        bf = brute_force_poa(g, 200_000)
        cg = price_of_anarchy(g, tol=1e-12)
        assert cg.eq_cost == pytest.approx(bf.eq_cost, rel=1e-6)
        assert cg.opt_cost == pytest.approx(bf.opt_cost, rel=1e-6)
        assert cg.ratio == pytest.approx(1.3651804812302362, rel=1e-6)

    def test_eq_on_grid(self):
        g = pigou(0.5)
        rep = brute_force_poa(g, 1000)
        assert rep.eq_cost == pytest.approx(1.0) and rep.opt_cost == pytest.approx(0.9375)

    def test_rejects_network_games(self):
        net = NetworkCongestionGame.build(["s", "t"], [("e", "s", "t", LatencyFunction({1: 1.0}))], [("s", "t", 1.0)])
        with pytest.raises(TypeError):
            brute_force_poa(net)

    def test_rejects_huge_grids(self):
        g = parallel([LatencyFunction({1: 1.0})] * 7)
        with pytest.raises(ValueError):
            brute_force_poa(g, 10)


def test_profile_cost_consistency():
    g = pigou(0.5)
    rep = solve_equilibrium(g)
    assert rep.total_latency == pytest.approx(total_latency(g, rep.profile))
