"""Client dispatch: one entry point that routes a payment the way a given
client variant would.

Two backends share this module.  The pure-Python one drives the generic
engines with cost functions from :mod:`lnpathlab.weights`; the compiled one
runs the same search and the same arithmetic inside ``_ckernel``.  Both
produce identical routes; the returned :class:`RouteResult` is always
rebuilt in Python so reported numbers never depend on the backend.
"""

from __future__ import annotations

import enum
import math
import random
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernel
from .engines import (
    Label,
    RouteResult,
    SideConstraint,
    _search,
    evaluate_path,
    yen_k_shortest,
)
from .graph import ChannelGraph, NodeId
from .weights import (
    ClnParams,
    EclairParams,
    LdkParams,
    LndParams,
    cost_cln,
    cost_eclair,
    cost_ldk,
    cost_lnd,
    eclair_factor,
    eclair_ranges,
    lnd_penalty,
)


class ClientVariant(str, enum.Enum):
    LND_AP = "LND-ap"
    LND_BM = "LND-bm"
    LND_UN = "LND-un"
    CLN = "CLN"
    LDK_UN = "LDK-un"
    LDK_BM = "LDK-bm"
    ECLAIR1 = "Eclair1"
    ECLAIR2 = "Eclair2"
    ECLAIR3 = "Eclair3"

    @property
    def family(self) -> str:
        return self.value.rstrip("123").split("-")[0].upper()

    @classmethod
    def parse(cls, name: str) -> "ClientVariant":
        for v in cls:
            if v.value.lower() == name.lower() or v.name.lower() == name.lower():
                return v
        raise ValueError(f"unknown client {name!r}; choose from {', '.join(v.value for v in cls)}")


ALL_CLIENTS = tuple(ClientVariant)

_LND_MODEL = {ClientVariant.LND_AP: "apriori", ClientVariant.LND_BM: "bimodal", ClientVariant.LND_UN: "uniform"}
_LDK_MODEL = {ClientVariant.LDK_UN: "uniform_bounds", ClientVariant.LDK_BM: "bimodal_quadratic"}
_ECLAIR_VARIANT = {
    ClientVariant.ECLAIR1: "ratios",
    ClientVariant.ECLAIR2: "constants_plain",
    ClientVariant.ECLAIR3: "constants_log",
}


@dataclass(frozen=True)
class ConstraintLimits:
    fee_limit_ppm: int = 10_000  # 1% of the amount
    fee_limit_base_msat: int = 50_000  # plus 50 sats
    lnd_max_cltv: int = 2016
    lnd_min_prob: float = 0.01
    ldk_max_cltv: int = 1008
    ldk_min_prob: float = 0.01
    ldk_max_len: int = 19
    cln_max_len: int = 10
    eclair_max_cltv: int = 2016
    eclair_max_len: int = 20
    eclair_fee_limit: bool = False  # the post-validated fee limit is user-defined

    def fee_limit(self, amt: int) -> int:
        return self.fee_limit_base_msat + amt * self.fee_limit_ppm // 1_000_000


@dataclass(frozen=True)
class ClientParams:
    lnd: LndParams = field(default_factory=LndParams)
    cln: ClnParams = field(default_factory=ClnParams)
    ldk: LdkParams = field(default_factory=LdkParams)
    eclair: EclairParams = field(default_factory=EclairParams)
    limits: ConstraintLimits = field(default_factory=ConstraintLimits)
    eclair_k: int = 3
    eclair_random_select: bool = False

    def for_variant(self, client: ClientVariant) -> "ClientParams":
        """Copy with the variant's probability model / heuristic selected."""
        if client in _LND_MODEL:
            return replace(self, lnd=replace(self.lnd, prob_model=_LND_MODEL[client]))
        if client in _LDK_MODEL:
            return replace(self, ldk=replace(self.ldk, prob_model=_LDK_MODEL[client]))
        if client in _ECLAIR_VARIANT:
            return replace(self, eclair=replace(self.eclair, variant=_ECLAIR_VARIANT[client]))
        return self


class ScorerState:
    """Per-edge knowledge a router holds about hidden balances.

    Defaults make every model a pure prior: liquidity bounds [0, cap],
    success amount 0, failure amount cap and no recorded failure.
    """

    def __init__(self, graph: ChannelGraph):
        caps = np.array([p.capacity_msat for p in graph.policies], dtype=np.int64)
        m = len(caps)
        self.graph = graph
        self.lb = np.zeros(m, dtype=np.int64)
        self.ub = caps.copy()
        self.hist_lb = np.zeros(m, dtype=np.int64)
        self.hist_ub = caps.copy()
        self.success_amt = np.zeros(m, dtype=np.int64)
        self.fail_amt = caps.copy()
        self.fail_time = np.full(m, np.nan)
        self.now = 0.0

    def copy(self) -> "ScorerState":
        c = ScorerState.__new__(ScorerState)
        c.__dict__.update({k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()})
        return c

    def time_since_failure(self) -> np.ndarray:
        return self.now - self.fail_time

    def record(self, route: RouteResult, failed_hop: Optional[int]) -> None:
        """Learn from one attempt: hops before ``failed_hop`` forwarded their
        amount, the failed hop could not (``None`` means full success)."""
        upto = len(route.edges) if failed_hop is None else failed_hop
        for e, a in zip(route.edges[:upto], route.per_hop_amt[:upto]):
            self.lb[e] = min(max(self.lb[e], a), self.ub[e])
            self.success_amt[e] = min(max(self.success_amt[e], a), self.fail_amt[e])
        if failed_hop is not None:
            e, a = route.edges[failed_hop], route.per_hop_amt[failed_hop]
            self.ub[e] = max(min(self.ub[e], a - 1), self.lb[e])
            self.fail_amt[e] = max(min(self.fail_amt[e], a), self.success_amt[e])
            self.fail_time[e] = self.now


def _tolist(a: np.ndarray) -> list:
    return a.tolist()


def make_cost_fn(graph: ChannelGraph, client: ClientVariant, params: ClientParams, scorer: Optional[ScorerState] = None):
    """Pure-Python cost function ``(edge_idx, amt, is_first_hop)`` for a client."""
    p = params.for_variant(client)
    pols = graph.policies
    fam = client.family
    if fam == "LND":
        lp = p.lnd
        if scorer is None:

            def cost(e, amt, first):
                return cost_lnd(pols[e], amt, lp, is_first_hop=first)

        else:
            sa, fa = _tolist(scorer.success_amt), _tolist(scorer.fail_amt)
            tf = _tolist(scorer.time_since_failure())

            def cost(e, amt, first):
                t = tf[e]
                return cost_lnd(
                    pols[e],
                    amt,
                    lp,
                    is_first_hop=first,
                    time_since_last_failure=None if t != t else t,
                    success_amt=sa[e],
                    fail_amt=fa[e],
                )

        return cost
    if fam == "CLN":
        cp = p.cln

        def cost(e, amt, first):
            return cost_cln(pols[e], amt, cp, is_first_hop=first)

        return cost
    if fam == "LDK":
        kp = p.ldk
        if scorer is None:

            def cost(e, amt, first):
                return cost_ldk(pols[e], amt, kp, is_first_hop=first)

        else:
            lb, ub = _tolist(scorer.lb), _tolist(scorer.ub)
            hlb, hub = _tolist(scorer.hist_lb), _tolist(scorer.hist_ub)

            def cost(e, amt, first):
                return cost_ldk(
                    pols[e], amt, kp, is_first_hop=first, bounds=(lb[e], ub[e]), historic_bounds=(hlb[e], hub[e])
                )

        return cost
    ep = p.eclair
    ranges = eclair_ranges(graph, ep)
    factors = _eclair_factors(graph, ep)

    def cost(e, amt, first):
        return cost_eclair(pols[e], amt, ep, ranges, is_first_hop=first, factor=factors[e])

    return cost


def _eclair_factors(graph: ChannelGraph, ep: EclairParams) -> list:
    key = ("eclair_factors", ep)
    cache = graph.__dict__.setdefault("_route_cache", {})
    if key not in cache:
        ranges = eclair_ranges(graph, ep)
        cache[key] = [eclair_factor(pol, ep, ranges) for pol in graph.policies]
    return cache[key]


def client_constraints(client: ClientVariant, params: ClientParams, amt: int, in_search: bool):
    """(in-search constraints, post-validated constraints) for a client."""
    lim = params.limits
    fam = client.family
    if fam == "LND":
        ins = [
            SideConstraint.timelock(lim.lnd_max_cltv),
            SideConstraint.min_probability(lim.lnd_min_prob),
            SideConstraint.max_fee(lim.fee_limit(amt)),
        ]
        return (ins if in_search else []), []
    if fam == "LDK":
        ins = [
            SideConstraint.timelock(lim.ldk_max_cltv),
            SideConstraint.min_probability(lim.ldk_min_prob),
            SideConstraint.max_fee(lim.fee_limit(amt)),
            SideConstraint.max_length(lim.ldk_max_len),
        ]
        return (ins if in_search else []), []
    if fam == "CLN":
        return [], [SideConstraint.max_length(lim.cln_max_len)]
    post = [SideConstraint.timelock(lim.eclair_max_cltv), SideConstraint.max_length(lim.eclair_max_len)]
    if lim.eclair_fee_limit:
        post.append(SideConstraint.max_fee(lim.fee_limit(amt)))
    return [], post


def eligible_mask(graph: ChannelGraph, amt: int) -> np.ndarray:
    packed = PackedGraph.of(graph)
    return (packed.hmin <= amt) & (amt <= np.minimum(packed.hmax, packed.cap))


# ------------------------------------------------------------ packed graph


class PackedGraph:
    """Flat numpy view of a graph for the compiled kernel."""

    def __init__(self, graph: ChannelGraph):
        pols = graph.policies
        self.n_nodes = len(graph.nodes)
        ptr = [0]
        flat = []
        for lst in graph.in_idx:
            flat.extend(lst)
            ptr.append(len(flat))
        self.in_ptr = np.array(ptr, dtype=np.int64)
        self.in_edges = np.array(flat, dtype=np.int64)
        self.edge_src = np.array(graph.edge_src, dtype=np.int64)
        self.edge_dst = np.array(graph.edge_dst, dtype=np.int64)
        self.base = np.array([p.base_fee_msat for p in pols], dtype=np.int64)
        self.ppm = np.array([p.fee_rate_ppm for p in pols], dtype=np.int64)
        self.cltv = np.array([p.cltv_delta for p in pols], dtype=np.int64)
        self.hmin = np.array([p.htlc_min_msat for p in pols], dtype=np.int64)
        self.hmax = np.array([p.htlc_max_msat for p in pols], dtype=np.int64)
        self.cap = np.array([p.capacity_msat for p in pols], dtype=np.int64)

    @classmethod
    def of(cls, graph: ChannelGraph) -> "PackedGraph":
        cache = graph.__dict__.setdefault("_route_cache", {})
        if "packed" not in cache:
            cache["packed"] = cls(graph)
        return cache["packed"]


# kernel client codes
K_LND, K_CLN, K_LDK, K_ECLAIR = 0, 1, 2, 3
# fparams slots
F_RISK, F_PAPRIORI, F_CO, F_SO, F_HALFLIFE, F_LND_S_ABS, F_LND_S_FRAC = 0, 1, 2, 3, 4, 5, 6
F_CLN_RISK = 7
F_PB, F_BM, F_AP, F_LM, F_LAM, F_HM, F_HAM = 8, 9, 10, 11, 12, 13, 14
F_LFR = 15
N_FPARAMS = 16
# iparams slots
I_MODEL, I_BPY, I_FAIL_BASE, I_FAIL_RATE, I_HOP_BASE, I_HOP_RATE = 0, 1, 2, 3, 4, 5
N_IPARAMS = 6


def _kernel_params(client: ClientVariant, p: ClientParams):
    f = np.zeros(N_FPARAMS, dtype=np.float64)
    i = np.zeros(N_IPARAMS, dtype=np.int64)
    fam = client.family
    if fam == "LND":
        lp = p.lnd
        code = K_LND
        i[I_MODEL] = {"apriori": 0, "bimodal": 1, "uniform": 2}[lp.prob_model]
        f[F_RISK] = lp.riskfactor
        f[F_PAPRIORI], f[F_CO], f[F_SO], f[F_HALFLIFE] = (
            lp.apriori.p_apriori,
            lp.apriori.c_o,
            lp.apriori.s_o,
            lp.apriori.penalty_half_life,
        )
        if lp.bimodal_scale_fraction is not None:
            f[F_LND_S_FRAC] = lp.bimodal_scale_fraction
            f[F_LND_S_ABS] = math.nan
        else:
            f[F_LND_S_ABS] = float(lp.bimodal_scale_msat)
    elif fam == "CLN":
        code = K_CLN
        f[F_CLN_RISK] = p.cln.riskfactor
        i[I_BPY] = p.cln.blocks_per_year
    elif fam == "LDK":
        kp = p.ldk
        code = K_LDK
        i[I_MODEL] = 0 if kp.prob_model == "uniform_bounds" else 1
        f[F_PB], f[F_BM], f[F_AP] = kp.penalty_base_msat, kp.base_multiplier_msat, kp.anti_probing_penalty_msat
        f[F_LM], f[F_LAM] = kp.liquidity_multiplier_msat, kp.liquidity_amt_multiplier_msat
        f[F_HM], f[F_HAM] = kp.historic_multiplier_msat, kp.historic_amt_multiplier_msat
    else:
        ep = p.eclair
        code = K_ECLAIR
        i[I_MODEL] = {"ratios": 0, "constants_plain": 1, "constants_log": 2}[ep.variant]
        f[F_LFR] = ep.locked_funds_risk
        i[I_FAIL_BASE], i[I_FAIL_RATE] = ep.base_failure_cost_msat, ep.failure_cost_rate_ppm
        i[I_HOP_BASE], i[I_HOP_RATE] = ep.base_hop_cost_msat, ep.hop_cost_rate_ppm
    return code, f, i


def _kernel_bounds(constraints) -> np.ndarray:
    b = np.full(4, np.inf)
    order = {"timelock_sum": 0, "neg_log_prob_sum": 1, "fee_sum": 2, "path_length": 3}
    for c in constraints:
        b[order[c.kind]] = c.bound
    return b


class _KernelSearch:
    def __init__(self, graph, client, params, scorer, eligible, constraints, counters):
        mod = kernel.compiled()
        self.mod = mod
        self.graph = graph
        pk = PackedGraph.of(graph)
        self.pk = pk
        code, f, i = _kernel_params(client, params)
        self.code, self.f, self.i = code, f, i
        m = len(graph.policies)
        if scorer is None:
            scorer = _default_scorer(graph)
        self.lb, self.ub = scorer.lb, scorer.ub
        self.hlb, self.hub = scorer.hist_lb, scorer.hist_ub
        self.sa, self.fa = scorer.success_amt, scorer.fail_amt
        self.tsf = np.ascontiguousarray(scorer.time_since_failure(), dtype=np.float64)
        if code == K_ECLAIR:
            self.factor = np.array(_eclair_factors(graph, params.eclair), dtype=np.float64)
        else:
            self.factor = np.zeros(m, dtype=np.float64)
        self.eligible = eligible.astype(np.uint8)
        self.bounds = _kernel_bounds(constraints)
        self.counters = counters
        self.cnt = np.zeros(4, dtype=np.int64)

    def __call__(self, start, goal, init: Label, banned_nodes=(), banned_edges=(), mixed=False):
        pk = self.pk
        bn = np.zeros(pk.n_nodes, dtype=np.uint8)
        for b in banned_nodes:
            bn[b] = 1
        be = np.zeros(len(pk.cap), dtype=np.uint8)
        for b in banned_edges:
            be[b] = 1
        self.cnt[:] = 0
        path = self.mod.search(
            pk.in_ptr, pk.in_edges, pk.edge_src, pk.edge_dst,
            pk.base, pk.ppm, pk.cltv, pk.hmin, pk.hmax, pk.cap,
            self.code, self.f, self.i,
            self.lb, self.ub, self.hlb, self.hub, self.sa, self.fa, self.tsf, self.factor,
            self.eligible, bn, be, self.bounds,
            int(start), int(goal), float(init.ca), float(init.cm), int(init.amt), bool(mixed),
            self.cnt,
        )  # fmt: skip
        for name, v in zip(("unusable", "constraint", "banned", "ineligible"), self.cnt.tolist()):
            if v:
                self.counters[name] += v
        return path


def _default_scorer(graph: ChannelGraph) -> ScorerState:
    cache = graph.__dict__.setdefault("_route_cache", {})
    if "scorer" not in cache:
        cache["scorer"] = ScorerState(graph)
    return cache["scorer"]


def route_with_diagnostics(
    client: ClientVariant | str,
    graph: ChannelGraph,
    sender: NodeId,
    receiver: NodeId,
    amt: int,
    *,
    params: ClientParams = ClientParams(),
    scorer: Optional[ScorerState] = None,
    enable_in_search_constraints: bool = False,
    k: Optional[int] = None,
    rng: Optional[random.Random] = None,
    backend: Optional[str] = None,
) -> tuple[Optional[RouteResult], Counter]:
    """:func:`find_route` plus the exclusion tallies, also when no route exists."""
    if isinstance(client, str):
        client = ClientVariant.parse(client)
    for name, node in (("sender", sender), ("receiver", receiver)):
        if node not in graph:
            raise KeyError(f"unknown {name} {node!r}")
    if sender == receiver:
        raise ValueError("sender and receiver must differ")
    if amt <= 0:
        raise ValueError("amount must be positive")
    backend = kernel.resolve(backend)
    p = params.for_variant(client)
    cost_fn = make_cost_fn(graph, client, p, scorer)
    counters: Counter = Counter()
    elig = eligible_mask(graph, amt)
    counters["ineligible_edges"] = int(len(elig) - int(elig.sum()))
    ins, post = client_constraints(client, p, amt, enable_in_search_constraints)
    r, s = graph.rank[receiver], graph.rank[sender]
    mixed = client.family == "LND"
    c_attempt = lnd_penalty(amt, p.lnd) if mixed else None

    if backend == "compiled":
        search = _KernelSearch(graph, client, p, scorer, elig, ins, counters)
    else:
        ok = elig.tolist()

        def search(start, goal, init, banned_nodes=(), banned_edges=(), mixed=False):
            return _search(
                graph,
                start,
                goal,
                cost_fn,
                init,
                mixed=mixed,
                constraints=ins,
                banned_nodes=banned_nodes,
                banned_edges=banned_edges,
                counters=counters,
                eligible=ok,
            )

    if client.family == "ECLAIR":
        kk = p.eclair_k if k is None else k
        paths = yen_k_shortest(
            graph, receiver, sender, amt, cost_fn, kk, post, spur_search=search, counters=counters
        )
        if not paths:
            return None, counters
        if p.eclair_random_select and rng is not None:
            chosen = paths[rng.randrange(len(paths))]
        else:
            chosen = paths[0]
        chosen.counters.clear()
        chosen.counters.update(counters)
        return chosen, counters
    init = Label(0.0, c_attempt if mixed else 0.0, amt, ())
    path = search(r, s, init, mixed=mixed)
    if path is None:
        return None, counters
    res = evaluate_path(graph, path, amt, cost_fn, c_attempt, ins + post)
    if post and any(v > c.bound for v, c in zip(res.constraint_sums[len(ins):], post)):
        counters["post_validation"] += 1
        return None, counters
    res.counters.update(counters)
    return res, counters


def find_route(
    client: ClientVariant | str,
    graph: ChannelGraph,
    sender: NodeId,
    receiver: NodeId,
    amt: int,
    **kwargs,
) -> Optional[RouteResult]:
    """Route ``amt`` msat from ``sender`` to ``receiver`` as ``client`` would.

    Channels that cannot carry the payment amount (HTLC limits, capacity) are
    filtered before the search.  In-search side constraints are off unless
    ``enable_in_search_constraints`` is set; post-validated limits (CLN path
    length, Eclair timelock/length) always apply.  Keyword arguments are
    those of :func:`route_with_diagnostics`.
    """
    return route_with_diagnostics(client, graph, sender, receiver, amt, **kwargs)[0]


__all__ = [
    "ALL_CLIENTS",
    "ClientParams",
    "ClientVariant",
    "ConstraintLimits",
    "PackedGraph",
    "ScorerState",
    "client_constraints",
    "eligible_mask",
    "find_route",
    "route_with_diagnostics",
    "make_cost_fn",
]
