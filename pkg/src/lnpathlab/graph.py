"""Channel graph model, snapshot ingestion and balance sampling.

All amounts are integer millisatoshi.  A channel appears as one
:class:`ChannelPolicy` per direction; the two directions share
``channel_id``, ``short_channel_id``, ``capacity_msat`` and
``funding_height``.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import IO, Iterable, Mapping, Sequence, Union

import numpy as np

from . import rng

NodeId = str
PolicyKey = tuple  # (source, target, channel_id)

SATS_WELL = 10**6
SATS_FAIR = 10**4


class SnapshotError(ValueError):
    """A snapshot record could not be turned into a valid graph."""


def pack_scid(height: int, tx_index: int = 0, output: int = 0) -> int:
    return (height << 40) | (tx_index << 16) | output


def scid_height(scid: int) -> int:
    return (scid >> 40) & 0xFFFFFF


@dataclass(frozen=True)
class ChannelPolicy:
    channel_id: str
    short_channel_id: int
    source: NodeId
    target: NodeId
    capacity_msat: int
    base_fee_msat: int
    fee_rate_ppm: int
    cltv_delta: int
    htlc_min_msat: int
    htlc_max_msat: int
    funding_height: int

    @property
    def key(self) -> PolicyKey:
        return (self.source, self.target, self.channel_id)

    def validate(self) -> None:
        where = f"channel {self.channel_id} ({self.source}->{self.target})"
        if self.capacity_msat <= 0:
            raise SnapshotError(f"{where}: capacity must be positive")
        if self.cltv_delta < 0 or self.base_fee_msat < 0 or self.fee_rate_ppm < 0:
            raise SnapshotError(f"{where}: negative fee or cltv parameter")
        if not 0 <= self.htlc_min_msat <= self.htlc_max_msat <= self.capacity_msat:
            raise SnapshotError(
                f"{where}: need 0 <= htlc_min ({self.htlc_min_msat}) <= htlc_max "
                f"({self.htlc_max_msat}) <= capacity ({self.capacity_msat})"
            )
        if self.source == self.target:
            raise SnapshotError(f"{where}: self loop")


class ChannelGraph:
    """Immutable directed multigraph of channel policies.

    Nodes are ranked by their sorted order; the rank is used for every
    deterministic tie-break.  Policies are stored sorted by
    (source, target, channel_id) and are addressed by their position
    (the *edge index*) in hot code.
    """

    def __init__(
        self,
        policies: Iterable[ChannelPolicy],
        nodes: Iterable[NodeId] = (),
        tip_height: int | None = None,
    ):
        pols = sorted(policies, key=lambda p: p.key)
        seen = set()
        for p in pols:
            if p.key in seen:
                raise SnapshotError(f"duplicate policy {p.key}")
            seen.add(p.key)
        node_set = set(nodes)
        for p in pols:
            node_set.add(p.source)
            node_set.add(p.target)
        self.nodes: tuple[NodeId, ...] = tuple(sorted(node_set))
        self.policies: tuple[ChannelPolicy, ...] = tuple(pols)
        self.rank: Mapping[NodeId, int] = MappingProxyType(
            {n: i for i, n in enumerate(self.nodes)}
        )
        self._index = MappingProxyType({p.key: i for i, p in enumerate(pols)})
        if tip_height is None:
            tip_height = max((p.funding_height for p in pols), default=0)
        self.tip_height = tip_height

        n = len(self.nodes)
        out: list[list[int]] = [[] for _ in range(n)]
        inn: list[list[int]] = [[] for _ in range(n)]
        for i, p in enumerate(pols):
            out[self.rank[p.source]].append(i)
            inn[self.rank[p.target]].append(i)
        # policies are sorted by (source, target, cid), so `out` is already
        # in (target, cid) order; `inn` needs (source, cid) order.
        for lst in inn:
            lst.sort(key=lambda i: (pols[i].source, pols[i].channel_id))
        self.out_idx: tuple[tuple[int, ...], ...] = tuple(tuple(x) for x in out)
        self.in_idx: tuple[tuple[int, ...], ...] = tuple(tuple(x) for x in inn)
        self.edge_src = tuple(self.rank[p.source] for p in pols)
        self.edge_dst = tuple(self.rank[p.target] for p in pols)
        self.reverse_idx = tuple(
            self._index.get((p.target, p.source, p.channel_id), -1) for p in pols
        )

    def __len__(self) -> int:
        return len(self.nodes)

    def __contains__(self, node: object) -> bool:
        return node in self.rank

    def __repr__(self) -> str:
        return f"ChannelGraph({len(self.nodes)} nodes, {len(self.policies)} policies)"

    def index_of(self, key: PolicyKey) -> int:
        return self._index[key]

    def policy(self, source: NodeId, target: NodeId, channel_id: str) -> ChannelPolicy:
        return self.policies[self._index[(source, target, channel_id)]]

    def out_policies(self, source: NodeId) -> tuple[ChannelPolicy, ...]:
        return tuple(self.policies[i] for i in self.out_idx[self.rank[source]])

    def in_policies(self, target: NodeId) -> tuple[ChannelPolicy, ...]:
        return tuple(self.policies[i] for i in self.in_idx[self.rank[target]])

    def channels(self) -> dict[str, list[ChannelPolicy]]:
        chans: dict[str, list[ChannelPolicy]] = {}
        for p in self.policies:
            chans.setdefault(p.channel_id, []).append(p)
        return chans

    def content_hash(self) -> str:
        import hashlib

        return hashlib.sha256(dump_snapshot(self, "json").encode()).hexdigest()


# ---------------------------------------------------------------- snapshots

_DIR_FIELDS = ("base_fee_msat", "fee_rate_ppm", "cltv_delta", "htlc_min_msat", "htlc_max_msat")


def _as_int(value, field: str, where: str) -> int:
    if isinstance(value, bool):
        raise SnapshotError(f"{where}: field {field!r} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    if isinstance(value, str):
        try:
            return int(value.strip())
        except ValueError:
            pass
    raise SnapshotError(f"{where}: field {field!r} must be an integer, got {value!r}")


def _field(rec: Mapping, field: str, where: str):
    try:
        return rec[field]
    except (KeyError, TypeError):
        raise SnapshotError(f"{where}: missing field {field!r}") from None


def _make_policy(rec, direction, source, target, where) -> ChannelPolicy:
    scid = _as_int(_field(rec, "short_channel_id", where), "short_channel_id", where)
    cap_sat = _as_int(_field(rec, "capacity_sat", where), "capacity_sat", where)
    vals = {f: _as_int(_field(direction, f, where), f, where) for f in _DIR_FIELDS}
    pol = ChannelPolicy(
        channel_id=str(_field(rec, "channel_id", where)),
        short_channel_id=scid,
        source=str(source),
        target=str(target),
        capacity_msat=cap_sat * 1000,
        funding_height=scid_height(scid),
        **vals,
    )
    try:
        pol.validate()
    except SnapshotError as e:
        raise SnapshotError(f"{where}: {e}") from None
    return pol


def _read_text(source: Union[str, bytes, IO, os.PathLike]) -> str:
    if isinstance(source, os.PathLike):
        return Path(source).read_text()
    if isinstance(source, bytes):
        return source.decode()
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode() if isinstance(data, bytes) else data


def load_snapshot(
    source: Union[str, bytes, IO, os.PathLike], format: str = "json", tip_height: int | None = None
) -> ChannelGraph:
    """Parse a JSON or CSV snapshot given as text, bytes, a readable stream
    or a path object."""
    text = _read_text(source)
    policies: list[ChannelPolicy] = []
    seen: set = set()
    if format == "json":
        try:
            records = json.loads(text)
        except json.JSONDecodeError as e:
            raise SnapshotError(f"invalid JSON at line {e.lineno}: {e.msg}") from None
        if not isinstance(records, list):
            raise SnapshotError("snapshot must be a top-level array of channels")
        for i, rec in enumerate(records):
            where = f"record {i}"
            if not isinstance(rec, dict):
                raise SnapshotError(f"{where}: expected an object")
            n1 = _field(rec, "node1_id", where)
            n2 = _field(rec, "node2_id", where)
            for dir_field, src, dst in (("node1_policy", n1, n2), ("node2_policy", n2, n1)):
                pol = _make_policy(rec, _field(rec, dir_field, where), src, dst, where)
                if pol.key in seen:
                    raise SnapshotError(f"{where}: duplicate channel direction {pol.key}")
                seen.add(pol.key)
                policies.append(pol)
    elif format == "csv":
        reader = csv.DictReader(io.StringIO(text))
        by_channel: dict[str, list[ChannelPolicy]] = {}
        for i, row in enumerate(reader):
            where = f"line {i + 2}"
            pol = _make_policy(
                row, row, _field(row, "node1_id", where), _field(row, "node2_id", where), where
            )
            if pol.key in seen:
                raise SnapshotError(f"{where}: duplicate channel direction {pol.key}")
            seen.add(pol.key)
            by_channel.setdefault(pol.channel_id, []).append(pol)
            policies.append(pol)
        for cid, pols in by_channel.items():
            if len(pols) != 2:
                raise SnapshotError(f"channel {cid}: expected 2 directions, got {len(pols)}")
            a, b = pols
            if (a.source, a.target) != (b.target, b.source):
                raise SnapshotError(f"channel {cid}: directions do not mirror each other")
            if (a.short_channel_id, a.capacity_msat) != (b.short_channel_id, b.capacity_msat):
                raise SnapshotError(f"channel {cid}: directions disagree on scid/capacity")
    else:
        raise ValueError(f"unknown snapshot format {format!r}")
    return ChannelGraph(policies, tip_height=tip_height)


def _direction_dict(p: ChannelPolicy) -> dict:
    return {f: getattr(p, f) for f in _DIR_FIELDS}


def dump_snapshot(graph: ChannelGraph, format: str = "json") -> str:
    """Serialise a graph; ``load_snapshot(dump_snapshot(g))`` rebuilds ``g``.

    Only graphs whose channels have both directions can be serialised.
    """
    chans = graph.channels()
    rows = []
    for cid in sorted(chans):
        pols = chans[cid]
        if len(pols) != 2:
            raise SnapshotError(f"channel {cid} has {len(pols)} directions; need 2")
        p1, p2 = sorted(pols, key=lambda p: (p.source, p.target))
        if p1.capacity_msat % 1000:
            raise SnapshotError(f"channel {cid}: capacity not a whole number of sats")
        rows.append((p1, p2))
    if format == "json":
        out = [
            {
                "short_channel_id": p1.short_channel_id,
                "channel_id": p1.channel_id,
                "capacity_sat": p1.capacity_msat // 1000,
                "node1_id": p1.source,
                "node2_id": p1.target,
                "node1_policy": _direction_dict(p1),
                "node2_policy": _direction_dict(p2),
            }
            for p1, p2 in rows
        ]
        return json.dumps(out, indent=1) + "\n"
    if format == "csv":
        buf = io.StringIO()
        cols = ["short_channel_id", "channel_id", "capacity_sat", "node1_id", "node2_id", *_DIR_FIELDS]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for pair in rows:
            for p in pair:
                w.writerow(
                    {
                        "short_channel_id": p.short_channel_id,
                        "channel_id": p.channel_id,
                        "capacity_sat": p.capacity_msat // 1000,
                        "node1_id": p.source,
                        "node2_id": p.target,
                        **_direction_dict(p),
                    }
                )
        return buf.getvalue()
    raise ValueError(f"unknown snapshot format {format!r}")


# ------------------------------------------------------------ connectivity


class ConnectivityClass(str, enum.Enum):
    WELL = "Well"
    FAIR = "Fair"
    POOR = "Poor"


def node_stats(graph: ChannelGraph, node: NodeId) -> tuple[int, int]:
    """(distinct channel count, total capacity in sats) for a node."""
    if node not in graph:
        raise KeyError(f"unknown node {node!r}")
    r = graph.rank[node]
    caps = {}
    for i in graph.out_idx[r] + graph.in_idx[r]:
        p = graph.policies[i]
        caps[p.channel_id] = p.capacity_msat
    return len(caps), sum(caps.values()) // 1000


def classify_connectivity(graph: ChannelGraph, node: NodeId) -> ConnectivityClass:
    """Well: >5 channels and >= 1e6 sats; Fair: >5 channels and below that;
    Poor: 5 or fewer channels.  Nodes with >5 channels but under 1e4 sats in
    total fall back to Poor so that every node gets exactly one class."""
    count, total_sat = node_stats(graph, node)
    if count <= 5:
        return ConnectivityClass.POOR
    if total_sat >= SATS_WELL:
        return ConnectivityClass.WELL
    if total_sat >= SATS_FAIR:
        return ConnectivityClass.FAIR
    return ConnectivityClass.POOR


def classify_all(graph: ChannelGraph) -> dict[NodeId, ConnectivityClass]:
    return {n: classify_connectivity(graph, n) for n in graph.nodes}


# ---------------------------------------------------------------- balances


class BalanceView:
    """Per-direction balances, aligned with ``graph.policies``.

    For channels present in both directions the two balances always sum to the
    capacity.  Views are values: :meth:`copy` before mutating a shared one.
    """

    def __init__(self, graph: ChannelGraph, balances: np.ndarray):
        balances = np.asarray(balances, dtype=np.int64)
        if balances.shape != (len(graph.policies),):
            raise ValueError("balance array does not match the graph")
        self.graph = graph
        self.balance = balances

    def __getitem__(self, key: Union[PolicyKey, int]) -> int:
        idx = key if isinstance(key, (int, np.integer)) else self.graph.index_of(key)
        return int(self.balance[idx])

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, BalanceView)
            and other.graph is self.graph
            and np.array_equal(other.balance, self.balance)
        )

    def as_dict(self) -> dict[PolicyKey, int]:
        return {p.key: int(b) for p, b in zip(self.graph.policies, self.balance)}

    def copy(self) -> "BalanceView":
        return BalanceView(self.graph, self.balance.copy())

    def transfer(self, edge_idx: int, amount: int) -> None:
        """Move ``amount`` from the forwarding side to the other side."""
        if amount > self.balance[edge_idx]:
            raise ValueError("insufficient balance")
        self.balance[edge_idx] -= amount
        rev = self.graph.reverse_idx[edge_idx]
        if rev >= 0:
            self.balance[rev] += amount

    @classmethod
    def full(cls, graph: ChannelGraph) -> "BalanceView":
        """Every direction holds its full capacity (not conserving)."""
        return cls(graph, np.array([p.capacity_msat for p in graph.policies], dtype=np.int64))


def _primary_edges(graph: ChannelGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per channel: the direction with the smaller (source, target), its
    reverse (or -1), the channel capacity and a 64-bit key of the channel id."""
    cache = getattr(graph, "_primary_cache", None)
    if cache is not None:
        return cache
    prim, rev, keys = [], [], []
    for i, p in enumerate(graph.policies):
        r = graph.reverse_idx[i]
        if r >= 0 and (p.source, p.target) > (p.target, p.source):
            continue
        prim.append(i)
        rev.append(r)
        keys.append(rng.key64(p.channel_id))
    cache = (
        np.array(prim, dtype=np.int64),
        np.array(rev, dtype=np.int64),
        np.array(keys, dtype=np.uint64),
    )
    graph._primary_cache = cache
    return cache


def _capacities(graph: ChannelGraph, idx: np.ndarray) -> np.ndarray:
    caps = getattr(graph, "_cap_cache", None)
    if caps is None:
        caps = np.array([p.capacity_msat for p in graph.policies], dtype=np.int64)
        graph._cap_cache = caps
    return caps[idx]


def _assemble(graph: ChannelGraph, prim, rev, drawn, caps) -> BalanceView:
    bal = np.zeros(len(graph.policies), dtype=np.int64)
    bal[prim] = drawn
    has_rev = rev >= 0
    bal[rev[has_rev]] = caps[has_rev] - drawn[has_rev]
    return BalanceView(graph, bal)


def sample_balances_uniform(graph: ChannelGraph, seed: int) -> BalanceView:
    """Uniform integer balance in [0, capacity] for the lexicographically
    smaller direction of each channel; the other side gets the remainder."""
    prim, rev, keys = _primary_edges(graph)
    caps = _capacities(graph, prim)
    u = rng.hash_uniform(seed, keys)
    drawn = np.minimum(np.floor(u * (caps + 1).astype(np.float64)).astype(np.int64), caps)
    return _assemble(graph, prim, rev, drawn, caps)


def bimodal_inverse_cdf(u: np.ndarray, cap: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Inverse CDF of the density proportional to exp(-x/s) + exp((x-cap)/s)
    on [0, cap].

    With a = exp(-x/s) and E = exp(-cap/s), F(x) = u reduces to
    a^2 + b a - E = 0 where b = (2u - 1)(1 - E).
    """
    u = np.asarray(u, dtype=np.float64)
    cap = np.asarray(cap, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    # work with log a, since E underflows once cap/s is a few hundred
    log_e = -cap / s
    b = (2.0 * u - 1.0) * -np.expm1(log_e)
    with np.errstate(divide="ignore"):
        log_abs_b = np.log(np.abs(b))
    log_root = 0.5 * np.logaddexp(2.0 * log_abs_b, np.log(4.0) + log_e)
    log_a = np.where(
        b > 0,
        np.log(2.0) + log_e - np.logaddexp(log_abs_b, log_root),
        np.logaddexp(log_root, log_abs_b) - np.log(2.0),
    )
    x = -s * log_a
    return np.clip(x, 0.0, cap)


def sample_balances_bimodal(
    graph: ChannelGraph, seed: int, s_fraction: float = 0.1
) -> BalanceView:
    """Balances from the two-sided exponential density with scale
    ``s = s_fraction * capacity``, sampled by inverse CDF."""
    if not 0 < s_fraction <= 1:
        raise ValueError("s_fraction must lie in (0, 1]")
    prim, rev, keys = _primary_edges(graph)
    caps = _capacities(graph, prim)
    u = rng.hash_uniform(seed, keys)
    capf = caps.astype(np.float64)
    x = bimodal_inverse_cdf(u, capf, s_fraction * capf)
    drawn = np.clip(np.rint(x).astype(np.int64), 0, caps)
    return _assemble(graph, prim, rev, drawn, caps)


def validate_balances(view: BalanceView) -> None:
    g = view.graph
    for i, p in enumerate(g.policies):
        b = int(view.balance[i])
        if not 0 <= b <= p.capacity_msat:
            raise AssertionError(f"balance out of range on {p.key}")
        r = g.reverse_idx[i]
        if r >= 0 and b + int(view.balance[r]) != p.capacity_msat:
            raise AssertionError(f"conservation violated on channel {p.channel_id}")


def total_capacity_sat(policies: Sequence[ChannelPolicy]) -> int:
    return sum(p.capacity_msat for p in policies) // 1000


__all__ = [
    "BalanceView",
    "ChannelGraph",
    "ChannelPolicy",
    "ConnectivityClass",
    "NodeId",
    "SnapshotError",
    "classify_all",
    "classify_connectivity",
    "dump_snapshot",
    "load_snapshot",
    "node_stats",
    "pack_scid",
    "sample_balances_bimodal",
    "sample_balances_uniform",
    "scid_height",
]
