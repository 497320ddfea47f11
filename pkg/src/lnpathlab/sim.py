"""Payment simulation against hidden balances.

Every transaction draws its endpoints and amount from a substream keyed by
``(seed, tx index)``, so records do not depend on execution order or thread
count.  All configured clients route the same payment on the same balances.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

from . import config, rng
from .engines import RouteResult
from .graph import (
    BalanceView,
    ChannelGraph,
    ConnectivityClass,
    classify_all,
    load_snapshot,
    sample_balances_bimodal,
    sample_balances_uniform,
)
from .routing import ClientParams, ClientVariant, ScorerState, route_with_diagnostics

DATA_DIR = Path(__file__).with_name("data")
BUILTIN_GRAPHS = {"synthetic500": DATA_DIR / "synthetic500.json"}

SUCCESS = "success"
NO_PATH = "no_path"
INSUFFICIENT = "insufficient_balance"

# seconds of simulated time between transactions (scorer feedback only)
TX_INTERVAL_S = 60.0


class SimulationError(RuntimeError):
    pass


# ------------------------------------------------------------------ clients


@dataclass(frozen=True)
class ClientSpec:
    """A client column: a variant plus optional parameter overrides.

    ``LND-bm:s=cap/10`` sets the bimodal scale to a tenth of each channel's
    capacity; ``LND-bm:s=3e5sat`` or ``LND-bm:s=3e8`` (msat) set it absolutely.
    """

    label: str
    variant: ClientVariant
    params: ClientParams

    @classmethod
    def parse(cls, text: str, base: ClientParams = ClientParams()) -> "ClientSpec":
        name, _, opts = text.partition(":")
        variant = ClientVariant.parse(name.strip())
        params = base
        for opt in filter(None, (o.strip() for o in opts.split(","))):
            k, _, v = opt.partition("=")
            if k.strip() != "s" or variant is not ClientVariant.LND_BM:
                raise ValueError(f"unsupported client option {opt!r} for {variant.value}")
            params = replace(params, lnd=_with_scale(params.lnd, v.strip()))
        label = variant.value if not opts else f"{variant.value}:{opts.strip()}"
        return cls(label, variant, params)


def _with_scale(lnd, spec: str):
    m = re.fullmatch(r"cap\s*/\s*([0-9.eE+]+)", spec)
    if m:
        return replace(lnd, bimodal_scale_fraction=1.0 / float(m.group(1)))
    m = re.fullmatch(r"([0-9.eE+]+)\s*(sat|msat)?", spec)
    if not m:
        raise ValueError(f"bad scale {spec!r}; use cap/N, <n>sat or <n>msat")
    val = float(m.group(1)) * (1000 if m.group(2) == "sat" else 1)
    return replace(lnd, bimodal_scale_msat=val, bimodal_scale_fraction=None)


# ------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    graph: str = "builtin:synthetic500"
    balance_model: str = "uniform"  # uniform | bimodal
    s_fraction: float = 0.1
    n_transactions: int = 2000
    clients: tuple = tuple(v.value for v in ClientVariant)
    seed: int = 42
    endpoint_filter: Optional[tuple] = None  # (sender class, receiver class)
    amount_policy: str = "uniform"  # uniform | decade
    in_search_constraints: bool = False
    mutate_balances: bool = False
    balances_per: str = "transaction"  # transaction | run
    scorer_feedback: bool = False
    params: ClientParams = field(default_factory=ClientParams)

    def validate(self) -> None:
        if self.n_transactions < 1:
            raise ValueError("n_transactions must be >= 1")
        if self.balance_model not in ("uniform", "bimodal"):
            raise ValueError(f"unknown balance model {self.balance_model!r}")
        if self.balance_model == "bimodal" and not 0 < self.s_fraction <= 1:
            raise ValueError("s_fraction must lie in (0, 1]")
        if self.amount_policy not in ("uniform", "decade"):
            raise ValueError(f"unknown amount policy {self.amount_policy!r}")
        if self.balances_per not in ("transaction", "run"):
            raise ValueError(f"unknown balances_per {self.balances_per!r}")
        if not self.clients:
            raise ValueError("no clients configured")
        if self.mutate_balances and self.balances_per != "run":
            raise ValueError("mutate_balances needs balances_per = 'run'")
        if self.endpoint_filter is not None:
            if len(self.endpoint_filter) != 2:
                raise ValueError("endpoint_filter needs two classes")
            for c in self.endpoint_filter:
                ConnectivityClass(c)
        labels = [ClientSpec.parse(c).label for c in self.clients]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate client columns")

    def to_dict(self) -> dict:
        return config.to_dict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = config.from_dict(cls, d)
        try:
            cfg.validate()
        except ValueError as exc:
            raise config.ConfigError(str(exc)) from exc
        return cfg

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def sequential(self) -> bool:
        return self.mutate_balances or self.scorer_feedback


def load_graph(source: str, base_dir: Optional[Path] = None) -> ChannelGraph:
    """``builtin:<name>``, ``synthetic:<n>:<seed>`` or a snapshot path
    (.json or .csv)."""
    if source.startswith("builtin:"):
        name = source.split(":", 1)[1]
        if name not in BUILTIN_GRAPHS:
            raise ValueError(f"unknown builtin graph {name!r}")
        return load_snapshot(BUILTIN_GRAPHS[name])
    if source.startswith("synthetic:"):
        from .synth import generate_synthetic

        parts = source.split(":")
        if len(parts) != 3:
            raise ValueError("use synthetic:<n_nodes>:<seed>")
        return generate_synthetic(int(parts[1]), seed=int(parts[2]))
    path = Path(source)
    if base_dir is not None and not path.is_absolute():
        path = base_dir / path
    fmt = "csv" if path.suffix.lower() == ".csv" else "json"
    return load_snapshot(path, format=fmt)


# ------------------------------------------------------------------ records


@dataclass
class Outcome:
    status: str
    failed_hop: Optional[int] = None
    fee_msat: Optional[int] = None
    path_len: Optional[int] = None
    timelock: Optional[int] = None
    engine_cost: Optional[float] = None

    def to_dict(self) -> dict:
        d: dict = {"status": self.status}
        if self.status == INSUFFICIENT:
            d["failed_hop"] = self.failed_hop
        if self.status == SUCCESS:
            d.update(
                fee_msat=self.fee_msat, path_len=self.path_len, timelock=self.timelock, engine_cost=self.engine_cost
            )
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Outcome":
        return cls(
            d["status"], d.get("failed_hop"), d.get("fee_msat"), d.get("path_len"), d.get("timelock"), d.get("engine_cost")
        )


@dataclass
class SimRecord:
    tx: int
    sender: str
    receiver: str
    amt_msat: int
    sender_class: str
    receiver_class: str
    outcomes: dict  # label -> Outcome, in configured client order
    routes: dict = field(default_factory=dict, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "tx": self.tx,
            "sender": self.sender,
            "receiver": self.receiver,
            "amt_msat": self.amt_msat,
            "sender_class": self.sender_class,
            "receiver_class": self.receiver_class,
            "outcomes": {k: o.to_dict() for k, o in self.outcomes.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "SimRecord":
        return cls(
            d["tx"],
            d["sender"],
            d["receiver"],
            d["amt_msat"],
            d["sender_class"],
            d["receiver_class"],
            {k: Outcome.from_dict(v) for k, v in d["outcomes"].items()},
        )


def read_records(path) -> list[SimRecord]:
    out = []
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(SimRecord.from_dict(json.loads(line)))
            except (KeyError, TypeError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{n}: malformed record ({exc})") from exc
    return out


# --------------------------------------------------------------- primitives


def _max_out(graph: ChannelGraph, balances: BalanceView, r: int) -> int:
    idx = graph.out_idx[r]
    return int(balances.balance[list(idx)].max()) if idx else 0


def _max_in(graph: ChannelGraph, balances: BalanceView, r: int) -> int:
    idx = graph.in_idx[r]
    return int(balances.balance[list(idx)].max()) if idx else 0


def _draw_amount(gen: np.random.Generator, ub: int, policy: str) -> int:
    if policy == "uniform":
        return int(gen.integers(1, ub + 1))
    # decade: a sat decade uniformly among those reachable, then uniform within
    decades = [k for k in range(8) if (10 ** (k + 3) if k else 1) <= ub]
    k = decades[int(gen.integers(len(decades)))]
    lo = 10 ** (k + 3) if k else 1
    hi = min(10 ** (k + 4) - 1, ub)
    return int(gen.integers(lo, hi + 1))


def sample_transaction(
    graph: ChannelGraph,
    balances: BalanceView,
    gen: np.random.Generator,
    endpoint_filter: Optional[tuple] = None,
    amount_policy: str = "uniform",
    classes: Optional[dict] = None,
    max_tries: int = 1000,
) -> tuple[str, str, int]:
    """Uniform endpoints (optionally restricted to a class pair) and an amount
    uniform in [1, min(max outgoing balance of the sender, max balance on the
    receiver's incoming directions)] msat."""
    nodes = graph.nodes
    if endpoint_filter is None:
        senders = receivers = list(range(len(nodes)))
    else:
        classes = classes or classify_all(graph)
        want_s, want_r = (ConnectivityClass(c) for c in endpoint_filter)
        senders = [i for i, n in enumerate(nodes) if classes[n] == want_s]
        receivers = [i for i, n in enumerate(nodes) if classes[n] == want_r]
    if not senders or not receivers or (len(senders) == 1 and senders == receivers):
        raise SimulationError(f"no eligible endpoint pair for filter {endpoint_filter}")
    for _ in range(max_tries):
        s = senders[int(gen.integers(len(senders)))]
        r = receivers[int(gen.integers(len(receivers)))]
        if s == r:
            continue
        ub = min(_max_out(graph, balances, s), _max_in(graph, balances, r))
        if ub < 1:
            continue
        return nodes[s], nodes[r], _draw_amount(gen, ub, amount_policy)
    raise SimulationError(f"no feasible transaction after {max_tries} draws")


def execute_payment(balances: BalanceView, route: RouteResult, mutate: bool = False) -> Outcome:
    """Forward the route's per-hop amounts over the hidden balances."""
    g = balances.graph
    edges = route.edges
    if not edges or len(route.per_hop_amt) != len(edges):
        raise ValueError("malformed route")
    for a, b in zip(edges, edges[1:]):
        if g.edge_dst[a] != g.edge_src[b]:
            raise ValueError("malformed route: hops are not connected")
    for i, (e, amt) in enumerate(zip(edges, route.per_hop_amt)):
        if balances.balance[e] < amt:
            return Outcome(INSUFFICIENT, failed_hop=i)
    if mutate:
        for e, amt in zip(edges, route.per_hop_amt):
            balances.transfer(e, amt)
    return Outcome(
        SUCCESS,
        fee_msat=route.total_fee,
        path_len=len(edges),
        timelock=route.total_timelock,
        engine_cost=route.engine_cost,
    )


# --------------------------------------------------------------- experiment


class _Run:
    def __init__(self, config: ExperimentConfig, graph: ChannelGraph, backend: Optional[str], keep_routes: bool):
        config.validate()
        self.cfg = config
        self.graph = graph
        self.backend = backend
        self.keep_routes = keep_routes
        self.specs = [ClientSpec.parse(c, config.params) for c in config.clients]
        self.classes = classify_all(graph)
        self.scorers: dict = {}
        self.shared: Optional[BalanceView] = None
        if config.balances_per == "run":
            self.shared = self.sample_balances(rng.derive_seed(config.seed, "balances"))

    def sample_balances(self, seed: int) -> BalanceView:
        if self.cfg.balance_model == "uniform":
            return sample_balances_uniform(self.graph, seed)
        return sample_balances_bimodal(self.graph, seed, self.cfg.s_fraction)

    def balances_for(self, i: int) -> BalanceView:
        if self.shared is not None:
            return self.shared if self.cfg.mutate_balances else self.shared.copy()
        return self.sample_balances(rng.derive_seed(self.cfg.seed, "balances", i))

    def one(self, i: int) -> SimRecord:
        try:
            return self._one(i)
        except SimulationError:
            raise
        except Exception as exc:
            raise SimulationError(f"tx {i}: {type(exc).__name__}: {exc}") from exc

    def _one(self, i: int) -> SimRecord:
        cfg = self.cfg
        bal = self.balances_for(i)
        gen = rng.stream(cfg.seed, "tx", i)
        s, r, amt = sample_transaction(self.graph, bal, gen, cfg.endpoint_filter, cfg.amount_policy, self.classes)
        pick = None
        if cfg.params.eclair_random_select:
            pick = random.Random(rng.derive_seed(cfg.seed, "eclair-pick", i))
        outcomes, routes = {}, {}
        # with mutation on, every client sees the balances as they were before
        # this transaction; the first success is applied afterwards
        start = bal.copy() if cfg.mutate_balances else bal
        applied = False
        for spec in self.specs:
            scorer = None
            if cfg.scorer_feedback:
                scorer = self.scorers.setdefault(spec.label, ScorerState(self.graph))
                scorer.now = i * TX_INTERVAL_S
            route, _ = route_with_diagnostics(
                spec.variant,
                self.graph,
                s,
                r,
                amt,
                params=spec.params,
                scorer=scorer,
                enable_in_search_constraints=cfg.in_search_constraints,
                rng=pick,
                backend=self.backend,
            )
            if route is None:
                outcomes[spec.label] = Outcome(NO_PATH)
                continue
            out = execute_payment(start, route)
            outcomes[spec.label] = out
            if self.keep_routes:
                routes[spec.label] = route
            if scorer is not None:
                scorer.record(route, out.failed_hop)
            if cfg.mutate_balances and out.status == SUCCESS and not applied:
                execute_payment(bal, route, mutate=True)
                applied = True
        return SimRecord(
            i, s, r, amt, self.classes[s].value, self.classes[r].value, outcomes, routes
        )


def iter_experiment(
    config: ExperimentConfig,
    graph: Optional[ChannelGraph] = None,
    *,
    threads: int = 1,
    backend: Optional[str] = None,
    keep_routes: bool = False,
    tx_range: Optional[range] = None,
) -> Iterator[SimRecord]:
    """Yield records in tx-index order.  Threads are used only when
    transactions are independent (no balance mutation, no scorer feedback)."""
    graph = graph if graph is not None else load_graph(config.graph)
    run = _Run(config, graph, backend, keep_routes)
    idx = tx_range if tx_range is not None else range(config.n_transactions)
    if threads <= 1 or config.sequential or len(idx) < 2:
        for i in idx:
            yield run.one(i)
        return
    # warm shared caches before fanning out
    first = run.one(idx[0])
    yield first
    with ThreadPoolExecutor(max_workers=threads) as pool:
        yield from pool.map(run.one, idx[1:], chunksize=8)


def run_experiment(config: ExperimentConfig, graph: Optional[ChannelGraph] = None, **kwargs) -> list[SimRecord]:
    return list(iter_experiment(config, graph, **kwargs))


def replay_transaction(config: ExperimentConfig, tx: int, graph: Optional[ChannelGraph] = None, **kwargs) -> SimRecord:
    """Re-run a single transaction from (seed, tx index) alone."""
    if config.sequential:
        raise ValueError("replay needs independent transactions (no mutation, no scorer feedback)")
    return next(iter_experiment(config, graph, tx_range=range(tx, tx + 1), **kwargs))


def run_scale_ablation(
    config: ExperimentConfig,
    scales: Sequence[str],
    graph: Optional[ChannelGraph] = None,
    bins=None,
    **kwargs,
):
    """LND-bm success per amount bin for each broadening scale, all on the
    same transactions.  Rows are scales, columns are bins."""
    from .metrics import DEFAULT_BINS, MetricsTable, Cell

    if config.balance_model != "bimodal":
        raise ValueError("the scale ablation needs bimodal balances")
    if not scales:
        raise ValueError("no scales given")
    bins = bins or DEFAULT_BINS
    clients = tuple(f"LND-bm:s={s}" for s in scales)
    cfg = replace(config, clients=clients)
    records = run_experiment(cfg, graph, **kwargs)
    labels = [ClientSpec.parse(c).label for c in clients]
    cells = {}
    for label, scale in zip(labels, scales):
        for b in bins:
            att = [r for r in records if b.contains(r.amt_msat)]
            ok = sum(r.outcomes[label].status == SUCCESS for r in att)
            cells[(f"s={scale}", b.label)] = Cell.rate(ok, len(att))
    return MetricsTable(
        kind="ablation",
        rows=[f"s={s}" for s in scales],
        columns=[b.label for b in bins],
        cells=cells,
        meta={"balance_model": "bimodal", "s_fraction": config.s_fraction, "n": len(records)},
    ), records
