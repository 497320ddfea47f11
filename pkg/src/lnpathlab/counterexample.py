"""Six-node instance on which the additive+multiplicative search is suboptimal.

The arcs below are listed in search order (the search starts at ``s``).
Payments travel against the search, so each arc a->b becomes the policy
b->a and the "sender" of the payment is ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engines import brute_force_route, enumerate_paths, mod_dijkstra
from .graph import ChannelGraph, ChannelPolicy, pack_scid
from .weights import EdgeCost

# (tail, head, additive, multiplicative) in search direction
ARCS = (
    ("s", "h", 4.0, 1.0),
    ("h", "i", 2.0, 2.0),
    ("i", "r", 4.0, 2.0),
    ("s", "k", 1.0, 2.0),
    ("k", "j", 1.0, 2.0),
    ("j", "r", 0.0, 5.0),
    ("h", "j", 2.0, 1.0),
)
C_ATTEMPT = 1.0
SEARCH_START, SEARCH_END = "s", "r"
EXPECTED_ENGINE = (("s", "h", "i", "r"), 14.0)
EXPECTED_OPTIMUM = (("s", "h", "j", "r"), 11.0)


def build() -> tuple[ChannelGraph, dict]:
    policies = []
    weights = {}
    for n, (a, b, wa, wm) in enumerate(ARCS):
        cap = 10**9
        policies.append(
            ChannelPolicy(
                channel_id=f"{a}{b}",
                short_channel_id=pack_scid(700_000, n, 0),
                source=b,
                target=a,
                capacity_msat=cap,
                base_fee_msat=0,
                fee_rate_ppm=0,
                cltv_delta=40,
                htlc_min_msat=1,
                htlc_max_msat=cap,
                funding_height=700_000,
            )
        )
        weights[(b, a, f"{a}{b}")] = EdgeCost(wa, wm, 1.0 / wm)
    g = ChannelGraph(policies)
    table = {g.index_of(k): w for k, w in weights.items()}
    return g, table


@dataclass
class CounterexampleReport:
    engine_path: tuple
    engine_cost: float
    optimal_path: tuple
    optimal_cost: float
    pops: list
    n_paths: int

    @property
    def ok(self) -> bool:
        return (
            (self.engine_path, self.engine_cost) == EXPECTED_ENGINE
            and (self.optimal_path, self.optimal_cost) == EXPECTED_OPTIMUM
            and self.n_paths == 3
        )

    def lines(self) -> list[str]:
        def fmt(path, cost):
            return f"{','.join(path)} cost {cost:g}"

        out = [
            "queue pops: " + " ".join(f"({n},{k:g})" for n, k in self.pops),
            f"engine: {fmt(self.engine_path, self.engine_cost)}; "
            f"optimal: {fmt(self.optimal_path, self.optimal_cost)}",
            f"simple {SEARCH_START}->{SEARCH_END} paths: {self.n_paths}",
        ]
        if not self.ok:
            out.append(
                f"MISMATCH: expected engine {fmt(*EXPECTED_ENGINE)}, optimal {fmt(*EXPECTED_OPTIMUM)}"
            )
        return out


def run() -> CounterexampleReport:
    g, table = build()

    def cost(e, amt, first):
        return table[e]

    pops: list = []
    eng = mod_dijkstra(g, SEARCH_START, SEARCH_END, 1, cost, C_ATTEMPT, trace=pops)
    opt = brute_force_route(g, SEARCH_START, SEARCH_END, 1, cost, c_attempt=C_ATTEMPT)
    n_paths = len(enumerate_paths(g, SEARCH_START, SEARCH_END))
    # reverse payment order back into search order
    return CounterexampleReport(
        engine_path=tuple(reversed(eng.nodes)),
        engine_cost=eng.engine_cost,
        optimal_path=tuple(reversed(opt.nodes)),
        optimal_cost=opt.engine_cost,
        pops=pops,
        n_paths=n_paths,
    )
