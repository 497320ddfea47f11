import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lnpathlab import counterexample
from lnpathlab.engines import (
    ContractError,
    EnumerationBudgetExceeded,
    SideConstraint,
    brute_force_route,
    brute_force_top_k,
    dijkstra_constrained,
    enumerate_paths,
    evaluate_path,
    mod_dijkstra,
    satisfies,
    yen_k_shortest,
)
from lnpathlab.graph import ChannelGraph
from lnpathlab.weights import EdgeCost, channel_fee

from conftest import make_policy, random_instance


def test_counterexample_walkthrough():
    rep = counterexample.run()
    assert rep.ok
    assert rep.engine_path == ("s", "h", "i", "r") and rep.engine_cost == 14.0
    assert rep.optimal_path == ("s", "h", "j", "r") and rep.optimal_cost == 11.0
    assert rep.n_paths == 3
    assert rep.pops[:4] == [("s", 1.0), ("k", 3.0), ("h", 5.0), ("j", 6.0)]
    assert rep.lines()[1] == "engine: s,h,i,r cost 14; optimal: s,h,j,r cost 11"


def test_counterexample_detects_changed_weights(monkeypatch):
    arcs = list(counterexample.ARCS)
    arcs[-1] = ("h", "j", 9.0, 1.0)
    monkeypatch.setattr(counterexample, "ARCS", tuple(arcs))
    rep = counterexample.run()
    assert not rep.ok
    assert rep.lines()[-1].startswith("MISMATCH")


@given(st.integers(0, 2**32))
def test_dijkstra_matches_oracle(seed):
    inst = random_instance(seed)
    n = len(inst.graph.nodes)
    got = dijkstra_constrained(inst.graph, inst.receiver, inst.sender, 1000, inst.cost)
    best = brute_force_route(inst.graph, inst.receiver, inst.sender, 1000, inst.cost, max_len=n - 1)
    assert (got is None) == (best is None)
    if got is not None:
        assert got.engine_cost == best.engine_cost


@given(st.integers(0, 2**32), st.integers(40, 200), st.integers(1, 5))
def test_constrained_results_are_feasible(seed, tl, hops):
    inst = random_instance(seed, with_side=True)
    cons = [SideConstraint.timelock(tl), SideConstraint.max_length(hops), SideConstraint.min_probability(0.5)]
    n = len(inst.graph.nodes)
    got = dijkstra_constrained(inst.graph, inst.receiver, inst.sender, 1000, inst.cost, cons)
    best = brute_force_route(inst.graph, inst.receiver, inst.sender, 1000, inst.cost, constraints=cons, max_len=n - 1)
    if got is not None:
        assert satisfies(got, cons, inst.cost)
        assert best is not None
        assert got.engine_cost >= best.engine_cost


@given(st.integers(0, 2**32), st.integers(1, 4))
def test_yen_matches_brute_force(seed, k):
    inst = random_instance(seed, max_edges=20)
    n = len(inst.graph.nodes)
    got = yen_k_shortest(inst.graph, inst.receiver, inst.sender, 1000, inst.cost, k)
    want = brute_force_top_k(inst.graph, inst.receiver, inst.sender, 1000, inst.cost, k, max_len=n - 1)
    assert [p.edges for p in got] == [p.edges for p in want]


def test_yen_orders_ties_by_nodes_then_channel():
    # three parallel zero-cost routes a->b: ties broken by node sequence, then channel id
    pols = [make_policy("a", "b", cid) for cid in ("z", "m", "b")]
    pols += [make_policy("a", "c", "x"), make_policy("c", "b", "y")]
    g = ChannelGraph(pols)
    got = yen_k_shortest(g, "b", "a", 1000, lambda e, a, f: EdgeCost(0.0), 4)
    assert [p.channel_ids for p in got] == [("b",), ("m",), ("z",), ("x", "y")]


def test_yen_post_validation_drops_paths():
    pols = [make_policy("a", "b", "1", cltv=500), make_policy("a", "c", "2"), make_policy("c", "b", "3")]
    g = ChannelGraph(pols)
    cost = lambda e, a, f: EdgeCost(1.0)
    got = yen_k_shortest(g, "b", "a", 1000, cost, 2, [SideConstraint.timelock(100)])
    assert [p.channel_ids for p in got] == [("2", "3")]


def test_strict_improvement_shadows_feasible_label():
    # the cheap label at m blows the timelock; the costlier feasible one never replaces it
    pols = [
        make_policy("s", "m", "cheap", cltv=90),
        make_policy("s", "m", "dear", cltv=10),
        make_policy("m", "r", "last", cltv=10),
    ]
    g = ChannelGraph(pols)
    w = {"cheap": 1.0, "dear": 5.0, "last": 1.0}
    cost = lambda e, a, f: EdgeCost(w[g.policies[e].channel_id])
    cons = [SideConstraint.timelock(50)]
    got = dijkstra_constrained(g, "r", "s", 1000, cost, cons)
    assert got is not None and got.channel_ids == ("dear", "last")
    # here the cheap label at m is settled first and blocks the only feasible route
    pols = [
        make_policy("m", "r", "c1", cltv=60),
        make_policy("m", "r", "c2", cltv=10),
        make_policy("s", "m", "e", cltv=30),
    ]
    g = ChannelGraph(pols)
    w = {"c1": 1.0, "c2": 5.0, "e": 1.0}
    cost = lambda e, a, f: EdgeCost(w[g.policies[e].channel_id])
    cons = [SideConstraint.timelock(75)]
    best = brute_force_route(g, "r", "s", 1000, cost, constraints=cons)
    assert best.channel_ids == ("e", "c2")
    assert dijkstra_constrained(g, "r", "s", 1000, cost, cons) is None


def test_fee_coherence_on_multi_hop():
    pols = [
        make_policy("s", "a", "1", base=1000, ppm=500),
        make_policy("a", "b", "2", base=10, ppm=2000),
        make_policy("b", "r", "3", base=1, ppm=1, cltv=144),
    ]
    g = ChannelGraph(pols)
    cost = lambda e, a, f: EdgeCost(1.0 + (0 if f else channel_fee(g.policies[e], a)))
    res = dijkstra_constrained(g, "r", "s", 5_000_000, cost)
    # forward replay: each hop forwards what it received minus its own fee
    amt = res.per_hop_amt[0]
    for i, pol in enumerate(res.hops):
        assert amt == res.per_hop_amt[i]
        if i + 1 < len(res.hops):
            amt -= channel_fee(res.hops[i + 1], res.per_hop_amt[i + 1])
    assert res.per_hop_amt[-1] == 5_000_000
    assert res.total_fee == res.per_hop_amt[0] - 5_000_000
    assert res.total_fee == channel_fee(pols[1], res.per_hop_amt[1]) + channel_fee(pols[2], 5_000_000)
    assert res.total_timelock == 40 + 40 + 144


def test_mixed_weights_contract():
    pols = [make_policy("s", "r", "1")]
    g = ChannelGraph(pols)
    with pytest.raises(ContractError):
        mod_dijkstra(g, "r", "s", 1000, lambda e, a, f: EdgeCost(1.0, 0.5), 1.0)
    with pytest.raises(ContractError):
        dijkstra_constrained(g, "r", "s", 1000, lambda e, a, f: EdgeCost(-1.0))
    with pytest.raises(ContractError):
        dijkstra_constrained(g, "r", "s", 1000, lambda e, a, f: EdgeCost(math.nan))


def test_argument_errors():
    g = ChannelGraph([make_policy("s", "r", "1")])
    cost = lambda e, a, f: EdgeCost(1.0)
    with pytest.raises(KeyError):
        dijkstra_constrained(g, "r", "nope", 1000, cost)
    with pytest.raises(ValueError):
        dijkstra_constrained(g, "r", "r", 1000, cost)
    with pytest.raises(ValueError):
        dijkstra_constrained(g, "r", "s", 0, cost)
    with pytest.raises(ValueError):
        yen_k_shortest(g, "r", "s", 1000, cost, 0)
    with pytest.raises(ValueError):
        mod_dijkstra(g, "r", "s", 1000, cost, -1.0)
    with pytest.raises(ValueError):
        SideConstraint("bogus", 1)
    with pytest.raises(ValueError):
        evaluate_path(g, [], 1000, cost)


def test_unreachable_and_unusable():
    g = ChannelGraph([make_policy("s", "r", "1"), make_policy("x", "y", "2")])
    cost = lambda e, a, f: None
    counters = {}
    from collections import Counter

    c = Counter()
    assert dijkstra_constrained(g, "r", "s", 1000, cost, counters=c) is None
    assert c["unusable"] == 1
    assert dijkstra_constrained(g, "y", "s", 1000, lambda e, a, f: EdgeCost(1.0)) is None


def test_enumeration_budget():
    pols = []
    for i in range(6):
        for j in range(6):
            if i != j:
                pols.append(make_policy(f"n{i}", f"n{j}", f"{i}-{j}"))
    g = ChannelGraph(pols)
    assert len(enumerate_paths(g, "n1", "n0", max_len=2)) == 5
    with pytest.raises(EnumerationBudgetExceeded):
        enumerate_paths(g, "n1", "n0", budget=10)
