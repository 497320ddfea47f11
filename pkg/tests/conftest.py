import os
import random
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from lnpathlab.graph import ChannelGraph, ChannelPolicy, load_snapshot, pack_scid
from lnpathlab.weights import EdgeCost

DATA = Path(__file__).parent / "data"

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def make_policy(src, dst, cid, *, cap=10**9, base=0, ppm=0, cltv=40, hmin=1, hmax=None, height=700_000, tx=0):
    return ChannelPolicy(
        channel_id=cid,
        short_channel_id=pack_scid(height, tx, 0),
        source=src,
        target=dst,
        capacity_msat=cap,
        base_fee_msat=base,
        fee_rate_ppm=ppm,
        cltv_delta=cltv,
        htlc_min_msat=hmin,
        htlc_max_msat=cap if hmax is None else hmax,
        funding_height=height,
    )


class Instance:
    """Small directed multigraph with a fixed cost table (no fees)."""

    def __init__(self, graph, table, sender, receiver):
        self.graph = graph
        self.table = table
        self.sender = sender
        self.receiver = receiver

    def cost(self, e, amt, first):
        return self.table[e]


def random_instance(seed, max_nodes=10, max_edges=30, w_max=100, with_side=False):
    r = random.Random(seed)
    n = r.randint(2, max_nodes)
    names = [f"v{i}" for i in range(n)]
    m = r.randint(1, max_edges)
    pols, costs = [], {}
    for j in range(m):
        a, b = r.sample(range(n), 2)
        cid = f"c{j}"
        cltv = r.choice((10, 20, 40, 80)) if with_side else 40
        pols.append(make_policy(names[a], names[b], cid, cltv=cltv, tx=j))
        prob = r.choice((0.5, 0.8, 0.9, 1.0)) if with_side else 1.0
        costs[(names[a], names[b], cid)] = EdgeCost(float(r.randint(0, w_max)), 1.0, prob)
    g = ChannelGraph(pols, nodes=names)
    table = {g.index_of(k): w for k, w in costs.items()}
    s, t = r.sample(names, 2)
    return Instance(g, table, s, t)


@pytest.fixture(scope="session")
def g500():
    from lnpathlab.sim import load_graph

    return load_graph("builtin:synthetic500")


@pytest.fixture
def two_node():
    pols = [
        make_policy("a", "b", "1x1x0", cap=5_000_000, base=1000, ppm=100, cltv=40),
        make_policy("b", "a", "1x1x0", cap=5_000_000, base=0, ppm=10, cltv=18),
    ]
    return ChannelGraph(pols)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
