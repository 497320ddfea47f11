"""Synthetic channel graphs with a heavy-tailed degree/capacity profile.

Nodes get one of four roles before any channel is drawn:

* hubs: many large channels, always Well connected
* small: 6 to 8 small channels, always Fair connected
* leaves: one or two channels, always Poor connected
* regular: whatever preferential attachment gives them

A random spanning tree grown by capacity-weighted preferential attachment
makes the graph connected; extra channels are then added between hubs and
regular nodes, again choosing endpoints by capacity.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import rng
from .graph import ChannelGraph, ChannelPolicy, pack_scid

CLTV_CHOICES = (18, 34, 40, 80, 144)
CLTV_WEIGHTS = (0.05, 0.20, 0.45, 0.10, 0.20)


@dataclass(frozen=True)
class SynthParams:
    # None: 5, or n - 1 on graphs too small for that
    mean_degree: float | None = None
    hub_fraction: float = 0.03
    small_fraction: float = 0.10
    leaf_fraction: float = 0.30
    # log10 of capacity in sats
    cap_log10_range: tuple = (5.0, 7.5)
    hub_cap_log10_range: tuple = (5.5, 7.7)
    small_cap_log10_range: tuple = (4.3, 5.05)
    attachment_offset_sat: float = 1e6
    fee_rate_log10_range: tuple = (0.0, 3.3)
    base_fee_choices: tuple = (0, 0, 1, 100, 1000, 1000)
    htlc_min_choices: tuple = (1, 1000)
    htlc_max_full_prob: float = 0.5
    height_range: tuple = (500_000, 800_000)
    tip_height: int = 800_000

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthParams":
        known = {k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown synthetic graph parameters: {sorted(unknown)}")
        return cls(**known)


def _roles(n: int, p: SynthParams, gen: np.random.Generator) -> list[str]:
    roles = ["regular"] * n
    if n < 10:
        return roles
    n_hub = max(1, round(p.hub_fraction * n))
    n_small = max(1, round(p.small_fraction * n)) if n >= 20 else 0
    n_leaf = max(1, round(p.leaf_fraction * n))
    order = gen.permutation(n)
    k = 0
    for role, cnt in (("hub", n_hub), ("small", n_small), ("leaf", n_leaf)):
        for j in order[k : k + cnt]:
            roles[j] = role
        k += cnt
    return roles


def generate_synthetic(n_nodes: int, params: SynthParams | None = None, seed: int = 0) -> ChannelGraph:
    """Connected synthetic graph on ``n_nodes`` nodes, deterministic in
    ``(params, seed)``."""
    p = params or SynthParams()
    n = int(n_nodes)
    if n < 2:
        raise ValueError("need at least 2 nodes")
    deg = min(5.0, n - 1) if p.mean_degree is None else p.mean_degree
    if not 0 < deg < n:
        raise ValueError(f"mean degree {deg} infeasible for {n} nodes")
    target_channels = max(n - 1, round(deg * n / 2))
    if target_channels > n * (n - 1) // 2:
        raise ValueError("more channels requested than node pairs")
    gen = rng.stream(seed, "synthetic-graph", n)
    width = len(str(n - 1))
    names = [f"n{i:0{width}d}" for i in range(n)]
    roles = _roles(n, p, gen)

    degree = [0] * n
    weight = np.zeros(n)  # capacity in sats per node
    pairs: set = set()
    chans: list[tuple[int, int, int]] = []  # (a, b, cap_sat)

    def draw_cap(a: int, b: int) -> int:
        ra, rb = roles[a], roles[b]
        if "small" in (ra, rb):
            lo, hi = p.small_cap_log10_range
        elif "hub" in (ra, rb):
            lo, hi = p.hub_cap_log10_range
        else:
            lo, hi = p.cap_log10_range
        return int(10 ** gen.uniform(lo, hi))

    def connect(a: int, b: int) -> None:
        cap = draw_cap(a, b)
        pairs.add((min(a, b), max(a, b)))
        chans.append((a, b, cap))
        for x in (a, b):
            degree[x] += 1
            weight[x] += cap

    def pick(candidates: list[int], exclude: int) -> int | None:
        cand = [c for c in candidates if c != exclude and (min(c, exclude), max(c, exclude)) not in pairs]
        if not cand:
            return None
        w = weight[cand] + p.attachment_offset_sat
        return cand[int(gen.choice(len(cand), p=w / w.sum()))]

    core = [i for i in range(n) if roles[i] in ("hub", "regular")]
    # spanning tree: hubs, then regular nodes, then the rest attach to the core
    seq: list[int] = []
    for role in ("hub", "regular", "small", "leaf"):
        group = [i for i in range(n) if roles[i] == role]
        seq.extend(group[j] for j in gen.permutation(len(group)))
    placed: list[int] = [seq[0]]
    for v in seq[1:]:
        pool = [u for u in placed if roles[u] in ("hub", "regular")] or placed
        connect(v, pick(pool, v))
        placed.append(v)

    # small nodes: fill up to 6..8 channels
    for v in range(n):
        if roles[v] == "small":
            want = int(gen.integers(6, 9))
            while degree[v] < want:
                u = pick(core, v)
                if u is None:
                    break
                connect(v, u)
    # leaves: maybe a second channel
    for v in range(n):
        if roles[v] == "leaf" and gen.random() < 0.5:
            u = pick([h for h in core if roles[h] == "hub"] or core, v)
            if u is not None:
                connect(v, u)
    # hubs get at least 8 channels
    for v in range(n):
        if roles[v] == "hub":
            while degree[v] < 8:
                u = pick(core, v)
                if u is None:
                    break
                connect(v, u)
    # remaining budget between core nodes
    guard = 0
    while len(chans) < target_channels and guard < 50 * target_channels:
        guard += 1
        pool = core if len(core) >= 2 else list(range(n))
        a = pool[int(gen.integers(len(pool)))]
        b = pick(pool, a)
        if b is not None:
            connect(a, b)

    return _to_graph(names, chans, p, gen)


def _to_graph(names, chans, p: SynthParams, gen: np.random.Generator) -> ChannelGraph:
    lo_h, hi_h = p.height_range
    policies = []
    cltv_w = np.array(CLTV_WEIGHTS) / sum(CLTV_WEIGHTS)
    for tx, (a, b, cap_sat) in enumerate(chans):
        height = int(gen.integers(lo_h, hi_h + 1))
        scid = pack_scid(height, tx, 0)
        cid = f"{height}x{tx}x0"
        cap = cap_sat * 1000
        for src, dst in ((a, b), (b, a)):
            hmin = int(p.htlc_min_choices[int(gen.integers(len(p.htlc_min_choices)))])
            if gen.random() < p.htlc_max_full_prob:
                hmax = cap
            else:
                hmax = max(hmin, int(cap * gen.uniform(0.1, 0.99)))
            policies.append(
                ChannelPolicy(
                    channel_id=cid,
                    short_channel_id=scid,
                    source=names[src],
                    target=names[dst],
                    capacity_msat=cap,
                    base_fee_msat=int(p.base_fee_choices[int(gen.integers(len(p.base_fee_choices)))]),
                    fee_rate_ppm=int(math.floor(10 ** gen.uniform(*p.fee_rate_log10_range))),
                    cltv_delta=int(CLTV_CHOICES[int(gen.choice(len(CLTV_CHOICES), p=cltv_w))]),
                    htlc_min_msat=hmin,
                    htlc_max_msat=hmax,
                    funding_height=height,
                )
            )
    for pol in policies:
        pol.validate()
    return ChannelGraph(policies, nodes=names, tip_height=p.tip_height)
