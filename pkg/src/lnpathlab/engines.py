"""Route search engines and exhaustive oracles.

Searches run backwards: they start at the receiver, walk incoming edges and
stop when the sender is settled.  The label of a node carries the amount that
must reach it, so amount-dependent weights see the amount that actually
crosses each edge.

``cost_fn(edge_idx, amt, is_first_hop)`` returns an :class:`EdgeCost` or
``None`` for an edge that cannot carry ``amt``.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .graph import ChannelGraph, ChannelPolicy, NodeId
from .weights import EdgeCost, hop_fee, propagate_amount

CostFn = Callable[[int, int, bool], Optional[EdgeCost]]
INF = math.inf


class ContractError(ValueError):
    """A cost function broke the engine's assumptions (negative or < 1 weights)."""


class EnumerationBudgetExceeded(RuntimeError):
    pass


# ------------------------------------------------------------ constraints

TIMELOCK = "timelock_sum"
NEG_LOG_PROB = "neg_log_prob_sum"
FEE = "fee_sum"
LENGTH = "path_length"


@dataclass(frozen=True)
class SideConstraint:
    kind: str
    bound: float

    def __post_init__(self):
        if self.kind not in (TIMELOCK, NEG_LOG_PROB, FEE, LENGTH):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        if self.bound < 0:
            raise ValueError("constraint bound must be nonnegative")

    def value(self, policy: ChannelPolicy, amt: int, first_hop: bool, cost: EdgeCost) -> float:
        if self.kind == TIMELOCK:
            return policy.cltv_delta
        if self.kind == FEE:
            return hop_fee(policy, amt, first_hop)
        if self.kind == LENGTH:
            return 1
        return -math.log(cost.prob) if cost.prob > 0 else INF

    @classmethod
    def timelock(cls, max_blocks: float) -> "SideConstraint":
        return cls(TIMELOCK, max_blocks)

    @classmethod
    def min_probability(cls, p_min: float) -> "SideConstraint":
        return cls(NEG_LOG_PROB, -math.log(p_min))

    @classmethod
    def max_fee(cls, msat: float) -> "SideConstraint":
        return cls(FEE, msat)

    @classmethod
    def max_length(cls, hops: int) -> "SideConstraint":
        return cls(LENGTH, hops)


# ------------------------------------------------------------ results


@dataclass(frozen=True)
class RouteResult:
    graph: ChannelGraph = field(repr=False, compare=False)
    edges: tuple[int, ...]  # policy indices, sender -> receiver
    per_hop_amt: tuple[int, ...]
    total_fee: int
    total_timelock: int
    path_prob: float
    engine_cost: float
    additive_cost: float
    multiplicative_cost: float
    constraint_sums: tuple[float, ...] = ()
    counters: dict = field(default_factory=dict, compare=False)

    @property
    def hops(self) -> tuple[ChannelPolicy, ...]:
        return tuple(self.graph.policies[e] for e in self.edges)

    @property
    def nodes(self) -> tuple[NodeId, ...]:
        hops = self.hops
        return (hops[0].source,) + tuple(p.target for p in hops)

    @property
    def channel_ids(self) -> tuple[str, ...]:
        return tuple(p.channel_id for p in self.hops)

    @property
    def sort_key(self):
        return (self.engine_cost, self.nodes, self.channel_ids)

    def __len__(self) -> int:
        return len(self.edges)

    def to_dict(self) -> dict:
        return {
            "hops": [
                {
                    "channel_id": p.channel_id,
                    "short_channel_id": p.short_channel_id,
                    "source": p.source,
                    "target": p.target,
                    "amt_msat": a,
                }
                for p, a in zip(self.hops, self.per_hop_amt)
            ],
            "nodes": list(self.nodes),
            "amount_sent_msat": self.per_hop_amt[0],
            "amount_received_msat": self.per_hop_amt[-1],
            "total_fee_msat": self.total_fee,
            "total_timelock": self.total_timelock,
            "path_prob": self.path_prob,
            "cost": self.engine_cost,
            "exclusions": dict(sorted(self.counters.items())),
        }


def evaluate_path(
    graph: ChannelGraph,
    edges: Sequence[int],
    amt: int,
    cost_fn: CostFn,
    c_attempt: Optional[float] = None,
    constraints: Sequence[SideConstraint] = (),
    from_sender: bool = True,
) -> Optional[RouteResult]:
    """Canonical cost of a forward edge sequence, accumulated receiver-first.

    ``c_attempt=None`` scores the additive cost only; otherwise the score is
    c_a + c_attempt * prod(multiplicative).  Returns None if any edge is
    unusable for the amount that would cross it.  With ``from_sender=False``
    the sequence is a receiver-side suffix and its first edge pays a fee.
    """
    if not edges:
        raise ValueError("empty path")
    ca = 0.0
    cm = 0.0 if c_attempt is None else c_attempt
    x = [0.0] * len(constraints)
    a = amt
    prob = 1.0
    amts = [0] * len(edges)
    timelock = 0
    for i in range(len(edges) - 1, -1, -1):
        e = edges[i]
        pol = graph.policies[e]
        first = i == 0 and from_sender
        w = cost_fn(e, a, first)
        if w is None:
            return None
        amts[i] = a
        ca = ca + w.additive
        if c_attempt is not None:
            cm = cm * w.multiplicative
        for k, c in enumerate(constraints):
            x[k] = x[k] + c.value(pol, a, first, w)
        prob *= w.prob
        timelock += pol.cltv_delta
        a = propagate_amount(pol, a, first)
    cost = ca if c_attempt is None else ca + cm
    return RouteResult(
        graph=graph,
        edges=tuple(edges),
        per_hop_amt=tuple(amts),
        total_fee=a - amt,
        total_timelock=timelock,
        path_prob=prob,
        engine_cost=cost,
        additive_cost=ca,
        multiplicative_cost=cm,
        constraint_sums=tuple(x),
    )


def satisfies(result: RouteResult, constraints: Sequence[SideConstraint], cost_fn: CostFn) -> bool:
    """Recheck every constraint on a finished route, independently of the engine."""
    if not constraints:
        return True
    again = evaluate_path(result.graph, result.edges, result.per_hop_amt[-1], cost_fn, None, constraints)
    return again is not None and all(v <= c.bound for v, c in zip(again.constraint_sums, constraints))


# ------------------------------------------------------------ label-setting search


@dataclass
class Label:
    ca: float
    cm: float
    amt: int
    x: tuple


def _search(
    graph: ChannelGraph,
    start: int,
    goal: int,
    cost_fn: CostFn,
    init: Label,
    *,
    mixed: bool,
    constraints: Sequence[SideConstraint] = (),
    banned_nodes: Iterable[int] = (),
    banned_edges: Iterable[int] = (),
    counters: Optional[Counter] = None,
    trace: Optional[list] = None,
    eligible: Optional[Sequence[bool]] = None,
) -> Optional[list[int]]:
    """Backward label-setting search from ``start`` to ``goal`` (node ranks).

    Relaxation follows the pseudocode literally: a label is replaced only when
    its key strictly improves and every constraint stays within bound.
    Returns the forward edge list from goal to start.
    """
    n = len(graph.nodes)
    key = [INF] * n
    ca = [INF] * n
    cm = [0.0] * n
    amt = [0] * n
    xs: list = [None] * n
    prev = [-1] * n
    settled = bytearray(n)
    for b in banned_nodes:
        settled[b] = 1
    banned_e = set(banned_edges)
    if counters is None:
        counters = Counter()

    ca[start] = init.ca
    cm[start] = init.cm
    amt[start] = init.amt
    nc = len(constraints)
    xs[start] = init.x if len(init.x) == nc else (0.0,) * nc
    key[start] = init.ca + init.cm if mixed else init.ca
    heap = [(key[start], start)]
    in_idx, edge_src, policies = graph.in_idx, graph.edge_src, graph.policies
    while heap:
        k, v = heapq.heappop(heap)
        if settled[v] or k != key[v]:
            continue
        settled[v] = 1
        if trace is not None:
            trace.append((graph.nodes[v], k))
        if v == goal:
            break
        a_v, ca_v, cm_v, x_v = amt[v], ca[v], cm[v], xs[v]
        for e in in_idx[v]:
            u = edge_src[e]
            if settled[u]:
                continue
            if e in banned_e:
                counters["banned"] += 1
                continue
            if eligible is not None and not eligible[e]:
                counters["ineligible"] += 1
                continue
            first = u == goal
            w = cost_fn(e, a_v, first)
            if w is None:
                counters["unusable"] += 1
                continue
            if w.additive < 0 or w.additive != w.additive:
                raise ContractError(f"edge {policies[e].key}: additive weight {w.additive} < 0")
            da = ca_v + w.additive
            if mixed:
                if w.multiplicative < 1:
                    raise ContractError(
                        f"edge {policies[e].key}: multiplicative weight {w.multiplicative} < 1"
                    )
                dm = cm_v * w.multiplicative
                dk = da + dm
            else:
                dm = 0.0
                dk = da
            if not dk < key[u]:
                continue
            if nc:
                pol = policies[e]
                xn = tuple(x_v[i] + constraints[i].value(pol, a_v, first, w) for i in range(nc))
                if any(xn[i] > constraints[i].bound for i in range(nc)):
                    counters["constraint"] += 1
                    continue
            else:
                xn = x_v
            key[u] = dk
            ca[u] = da
            cm[u] = dm
            xs[u] = xn
            amt[u] = propagate_amount(policies[e], a_v, first)
            prev[u] = e
            heapq.heappush(heap, (dk, u))
    if not settled[goal] or key[goal] == INF:
        return None
    path = []
    v = goal
    while v != start:
        e = prev[v]
        path.append(e)
        v = graph.edge_dst[e]
    return path


def _endpoints(graph: ChannelGraph, receiver: NodeId, sender: NodeId) -> tuple[int, int]:
    for name, node in (("receiver", receiver), ("sender", sender)):
        if node not in graph:
            raise KeyError(f"unknown {name} {node!r}")
    if receiver == sender:
        raise ValueError("sender and receiver must differ")
    return graph.rank[receiver], graph.rank[sender]


def _finish(graph, path, amt, cost_fn, c_attempt, constraints, counters):
    if path is None:
        return None
    res = evaluate_path(graph, path, amt, cost_fn, c_attempt, constraints)
    if res is None:  # cannot happen: every edge was usable during the search
        raise RuntimeError("search produced an unusable path")
    res.counters.update(counters)
    return res


def dijkstra_constrained(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    amt: int,
    cost_fn: CostFn,
    constraints: Sequence[SideConstraint] = (),
    *,
    counters: Optional[Counter] = None,
) -> Optional[RouteResult]:
    """Dijkstra on additive weights with greedy side-constraint pruning."""
    r, s = _endpoints(graph, receiver, sender)
    if amt <= 0:
        raise ValueError("amount must be positive")
    counters = Counter() if counters is None else counters
    init = Label(0.0, 0.0, amt, (0.0,) * len(constraints))
    path = _search(graph, r, s, cost_fn, init, mixed=False, constraints=constraints, counters=counters)
    return _finish(graph, path, amt, cost_fn, None, constraints, counters)


def mod_dijkstra(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    amt: int,
    cost_fn: CostFn,
    c_attempt: float,
    constraints: Sequence[SideConstraint] = (),
    *,
    counters: Optional[Counter] = None,
    trace: Optional[list] = None,
) -> Optional[RouteResult]:
    """Dijkstra keyed on c_a + c_m, with c_m seeded at ``c_attempt`` and
    multiplied along the path.  Not optimal in general."""
    r, s = _endpoints(graph, receiver, sender)
    if amt <= 0:
        raise ValueError("amount must be positive")
    if c_attempt < 0:
        raise ValueError("c_attempt must be nonnegative")
    counters = Counter() if counters is None else counters
    init = Label(0.0, float(c_attempt), amt, (0.0,) * len(constraints))
    path = _search(
        graph, r, s, cost_fn, init, mixed=True, constraints=constraints, counters=counters, trace=trace
    )
    return _finish(graph, path, amt, cost_fn, float(c_attempt), constraints, counters)


# ------------------------------------------------------------ Yen


def yen_k_shortest(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    amt: int,
    cost_fn: CostFn,
    k: int,
    constraints_post: Sequence[SideConstraint] = (),
    *,
    spur_search: Optional[Callable] = None,
    tie_limit: int = 64,
    counters: Optional[Counter] = None,
) -> list[RouteResult]:
    """The k cheapest loopless paths by additive cost.

    Paths are ordered by (cost, forward node sequence, channel ids).  To make
    that order exact under cost ties, enumeration continues past the k-th
    path while candidates tie with it (at most ``tie_limit`` extra paths).
    Post-validation then drops paths violating ``constraints_post``.

    ``spur_search(start, goal, init, banned_nodes, banned_edges)`` may replace
    the pure-Python spur search; it must return a forward edge list or None.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    r, s = _endpoints(graph, receiver, sender)
    if amt <= 0:
        raise ValueError("amount must be positive")
    counters = Counter() if counters is None else counters
    if spur_search is None:

        def spur_search(start, goal, init, banned_nodes, banned_edges):
            return _search(
                graph,
                start,
                goal,
                cost_fn,
                init,
                mixed=False,
                banned_nodes=banned_nodes,
                banned_edges=banned_edges,
                counters=counters,
            )

    first = spur_search(r, s, Label(0.0, 0.0, amt, ()), (), ())
    if first is None:
        return []
    best = evaluate_path(graph, first, amt, cost_fn)
    found: list[RouteResult] = [best]
    seen = {best.edges}
    cand: list = []
    while True:
        last = found[-1]
        edges = last.edges
        n = len(edges)
        # spur at node i of the last path, root = edges[i:] (receiver side)
        for i in range(n, 0, -1):
            root = edges[i:]
            spur_node = graph.edge_dst[edges[i - 1]]
            if i < n:
                root_res = evaluate_path(graph, root, amt, cost_fn, from_sender=False)
                if root_res is None:
                    continue
                init = Label(root_res.engine_cost, 0.0, amt + root_res.total_fee, ())
            else:
                init = Label(0.0, 0.0, amt, ())
            ban_e = {
                p.edges[len(p.edges) - len(root) - 1]
                for p in found
                if len(p.edges) > len(root) and p.edges[len(p.edges) - len(root):] == root
            }
            ban_n = {graph.edge_dst[e] for e in root}
            spur = spur_search(spur_node, s, init, ban_n, ban_e)
            if spur is None:
                continue
            full = tuple(spur) + root
            if full in seen:
                continue
            res = evaluate_path(graph, full, amt, cost_fn)
            if res is None:
                continue
            seen.add(full)
            heapq.heappush(cand, (res.sort_key, full, res))
        if not cand:
            break
        if len(found) >= k:
            kth = sorted(p.sort_key for p in found)[k - 1][0]
            if cand[0][0][0] > kth or len(found) >= k + tie_limit:
                break
        found.append(heapq.heappop(cand)[2])
    found.sort(key=lambda p: p.sort_key)
    top = found[:k]
    out = []
    for p in top:
        if constraints_post:
            chk = evaluate_path(graph, p.edges, amt, cost_fn, None, constraints_post)
            if not all(v <= c.bound for v, c in zip(chk.constraint_sums, constraints_post)):
                counters["post_validation"] += 1
                continue
            p = chk
        p.counters.update(counters)
        out.append(p)
    return out


# ------------------------------------------------------------ oracles


def enumerate_paths(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    max_len: int = 8,
    budget: int = 1_000_000,
) -> list[tuple[int, ...]]:
    """All simple sender->receiver edge sequences with at most ``max_len`` hops."""
    r, s = _endpoints(graph, receiver, sender)
    out: list[tuple[int, ...]] = []
    on_path = bytearray(len(graph.nodes))
    on_path[r] = 1
    stack: list[int] = []

    def walk(v: int):
        if len(stack) >= max_len:
            return
        for e in graph.in_idx[v]:
            u = graph.edge_src[e]
            if on_path[u]:
                continue
            stack.append(e)
            if u == s:
                out.append(tuple(reversed(stack)))
                if len(out) > budget:
                    raise EnumerationBudgetExceeded(f"more than {budget} paths")
            else:
                on_path[u] = 1
                walk(u)
                on_path[u] = 0
            stack.pop()

    walk(r)
    return out


def brute_force_top_k(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    amt: int,
    cost_fn: CostFn,
    k: int,
    *,
    c_attempt: Optional[float] = None,
    constraints: Sequence[SideConstraint] = (),
    max_len: int = 8,
    budget: int = 1_000_000,
) -> list[RouteResult]:
    ranked = []
    for path in enumerate_paths(graph, receiver, sender, max_len, budget):
        res = evaluate_path(graph, path, amt, cost_fn, c_attempt, constraints)
        if res is None:
            continue
        if any(v > c.bound for v, c in zip(res.constraint_sums, constraints)):
            continue
        ranked.append(res)
    ranked.sort(key=lambda p: p.sort_key)
    return ranked[:k]


def brute_force_route(
    graph: ChannelGraph,
    receiver: NodeId,
    sender: NodeId,
    amt: int,
    cost_fn: CostFn,
    *,
    c_attempt: Optional[float] = None,
    constraints: Sequence[SideConstraint] = (),
    max_len: int = 8,
    budget: int = 1_000_000,
) -> Optional[RouteResult]:
    """Exact optimum over simple paths of at most ``max_len`` hops.

    The whole-path score is c_a + c_attempt * prod(m) when ``c_attempt`` is
    given and c_a otherwise.
    """
    top = brute_force_top_k(
        graph,
        receiver,
        sender,
        amt,
        cost_fn,
        1,
        c_attempt=c_attempt,
        constraints=constraints,
        max_len=max_len,
        budget=budget,
    )
    return top[0] if top else None


__all__ = [
    "ContractError",
    "EnumerationBudgetExceeded",
    "Label",
    "RouteResult",
    "SideConstraint",
    "brute_force_route",
    "brute_force_top_k",
    "dijkstra_constrained",
    "enumerate_paths",
    "evaluate_path",
    "mod_dijkstra",
    "satisfies",
    "yen_k_shortest",
]
