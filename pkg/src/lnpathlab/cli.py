"""Command-line front end.

Exit codes: 0 success, 1 counterexample mismatch, 2 config/usage error,
3 data error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import random
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__, config, kernel
from .config import ConfigError
from .graph import SnapshotError, dump_snapshot
from .metrics import DEFAULT_BINS, build_table, emit, parse_bin
from .routing import ClientParams, ClientVariant, route_with_diagnostics
from .sim import (
    ExperimentConfig,
    SimulationError,
    iter_experiment,
    load_graph,
    read_records,
    run_scale_ablation,
)

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


# ----------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    tool_version: str
    command: str
    config_hash: str
    graph_hash: Optional[str] = None
    seed: Optional[int] = None
    inputs: dict = field(default_factory=dict)
    timestamp: str = ""

    def write_next_to(self, output: Path) -> Path:
        path = output.with_name(output.name + ".manifest.json")
        d = dict(self.__dict__)
        d["timestamp"] = d["timestamp"] or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
        path.write_text(json.dumps(d, indent=2, sort_keys=True) + "\n")
        return path


def _hash_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(out: Optional[str], data: bytes, manifest: Optional[RunManifest]) -> None:
    if out is None or out == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    path = Path(out)
    path.write_bytes(data)
    if manifest is not None:
        manifest.write_next_to(path)


# ----------------------------------------------------------------- helpers


def _load_graph(source: str):
    try:
        return load_graph(source)
    except (OSError, SnapshotError, json.JSONDecodeError) as exc:
        raise DataError(f"graph {source}: {exc}") from exc


def _params_from(path: Optional[str]) -> ClientParams:
    if not path:
        return ClientParams()
    data = config.read_config(path)
    return config.from_dict(ClientParams, data.get("params", data), "params")


def _experiment(args, need_seed: bool = True) -> ExperimentConfig:
    base: dict = {}
    if args.config:
        raw = config.read_config(args.config)
        base = dict(raw.get("experiment", raw))
        if "params" in raw and "experiment" in raw:
            base["params"] = raw["params"]
        graph = base.get("graph")
        # relative snapshot paths resolve against the config file
        if graph and not graph.startswith(("builtin:", "synthetic:")) and not Path(graph).is_absolute():
            base["graph"] = str(Path(args.config).parent / graph)
    overrides = {
        "graph": args.graph,
        "seed": args.seed,
        "n_transactions": args.n,
        "balance_model": args.balance_model,
        "s_fraction": args.s_fraction,
        "amount_policy": args.amount_policy,
        "balances_per": args.balances_per,
    }
    for k, v in overrides.items():
        if v is not None:
            base[k] = v
    if args.clients:
        base["clients"] = [c.strip() for c in args.clients.split(",") if c.strip()]
    if args.filter:
        base["endpoint_filter"] = [c.strip() for c in args.filter.split(",")]
    if args.constraints is not None:
        base["in_search_constraints"] = args.constraints == "on"
    for flag, key in (("mutate", "mutate_balances"), ("scorer_feedback", "scorer_feedback")):
        if getattr(args, flag):
            base[key] = True
    if need_seed and "seed" not in base:
        raise ConfigError("no seed: pass --seed or set seed in the config file")
    cfg = ExperimentConfig.from_dict(base)
    if args.eclair_random_select:
        cfg = replace(cfg, params=replace(cfg.params, eclair_random_select=True))
    return cfg


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (TOML or JSON); flags override it")
    p.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    p.add_argument("--graph", help="snapshot path, builtin:synthetic500 or synthetic:<n>:<seed>")
    p.add_argument("--n", type=int, help="number of transactions")
    p.add_argument("--clients", help="comma-separated client columns, e.g. LND-ap,LND-bm:s=cap/10,CLN")
    p.add_argument("--balance-model", choices=["uniform", "bimodal"])
    p.add_argument("--s-fraction", type=float, help="bimodal sampling scale as a fraction of capacity")
    p.add_argument("--filter", help="endpoint class pair, e.g. Poor,Well")
    p.add_argument("--amount-policy", choices=["uniform", "decade"])
    p.add_argument("--balances-per", choices=["transaction", "run"])
    p.add_argument("--constraints", choices=["on", "off"], help="in-search side constraints")
    p.add_argument("--mutate", action="store_true", help="apply successful payments to balances (needs --balances-per run)")
    p.add_argument("--scorer-feedback", action="store_true", help="update per-client scorer state from outcomes")
    p.add_argument("--eclair-random-select", action="store_true", help="pick among Eclair's k paths with a seeded RNG")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--backend", choices=list(kernel.BACKENDS))


# ----------------------------------------------------------------- commands


def cmd_verify_counterexample(args) -> int:
    from .counterexample import run

    rep = run()
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.ok else EXIT_MISMATCH


def cmd_gen_graph(args) -> int:
    from .synth import SynthParams, generate_synthetic

    params = SynthParams()
    if args.params:
        raw = config.read_config(args.params)
        params = config.from_dict(SynthParams, raw.get("synthetic", raw), "synthetic")
    try:
        g = generate_synthetic(args.nodes, params, args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    data = dump_snapshot(g, args.format).encode()
    man = RunManifest(
        __version__,
        "gen-graph",
        _hash_json({"nodes": args.nodes, "params": config.to_dict(params), "format": args.format}),
        g.content_hash(),
        args.seed,
    )
    _write(args.out, data, man)
    return EXIT_OK


def cmd_route(args) -> int:
    g = _load_graph(args.graph)
    params = _params_from(args.params)
    amt = args.amt_msat if args.amt_msat is not None else args.amt_sat * 1000
    pick = None
    if args.eclair_random_select:
        if args.seed is None:
            raise ConfigError("--eclair-random-select needs --seed")
        params = replace(params, eclair_random_select=True)
        pick = random.Random(args.seed)
    try:
        client = ClientVariant.parse(args.client)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for node in (args.sender, args.receiver):
        if node not in g:
            raise DataError(f"unknown node {node!r}")
    try:
        res, counters = route_with_diagnostics(
            client,
            g,
            args.sender,
            args.receiver,
            amt,
            params=params,
            enable_in_search_constraints=args.constraints == "on",
            k=args.k,
            rng=pick,
            backend=args.backend,
        )
    except (ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    out = {"client": client.value, "sender": args.sender, "receiver": args.receiver, "amt_msat": amt}
    if res is None:
        out["route"] = None
        out["exclusions"] = dict(sorted(counters.items()))
    else:
        out["route"] = res.to_dict()
    man = RunManifest(
        __version__,
        "route",
        _hash_json({k: out[k] for k in ("client", "sender", "receiver", "amt_msat")} | {"params": config.to_dict(params)}),
        g.content_hash(),
        args.seed,
    )
    _write(args.out, (json.dumps(out, indent=2) + "\n").encode(), man)
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _experiment(args)
    g = _load_graph(cfg.graph)
    lines = []
    try:
        for rec in iter_experiment(cfg, g, threads=args.threads, backend=args.backend):
            lines.append(rec.to_json() + "\n")
    except SimulationError as exc:
        raise DataError(str(exc)) from exc
    man = RunManifest(__version__, "simulate", cfg.config_hash(), g.content_hash(), cfg.seed)
    _write(args.out, "".join(lines).encode(), man)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _experiment(args)
    if cfg.balance_model != "bimodal":
        cfg = replace(cfg, balance_model="bimodal")
    scales = [s.strip() for s in args.scales.split(",") if s.strip()]
    g = _load_graph(cfg.graph)
    try:
        table, _ = run_scale_ablation(cfg, scales, g, threads=args.threads, backend=args.backend)
    except SimulationError as exc:
        raise DataError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    man = RunManifest(
        __version__, "ablate", _hash_json({"config": cfg.to_dict(), "scales": scales}), g.content_hash(), cfg.seed
    )
    _write(args.out, emit(table, args.format), man)
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.inp)
    try:
        records = read_records(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    kw: dict = {}
    if args.table == "metrics":
        kw["min_common_successes"] = args.min_common
    amount_bin = parse_bin(args.bin) if args.bin else None
    if args.table == "cross" and amount_bin is None:
        raise ConfigError("--table cross needs --bin")
    table = build_table(args.table, records, amount_bin, **kw)
    man = RunManifest(
        __version__,
        "report",
        _hash_json({"table": args.table, "bin": args.bin, "format": args.format, "min_common": args.min_common}),
        inputs={path.name: _hash_file(path)},
    )
    _write(args.out, emit(table, args.format), man)
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lnpathlab", description="Payment-channel pathfinding testbed")
    p.add_argument("--version", action="version", version=f"lnpathlab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify-counterexample", help="check the six-node suboptimality instance")
    v.set_defaults(func=cmd_verify_counterexample)

    gg = sub.add_parser("gen-graph", help="generate a synthetic snapshot")
    gg.add_argument("--nodes", type=int, required=True)
    gg.add_argument("--seed", type=int, required=True)
    gg.add_argument("--params", help="TOML/JSON file with generator parameters")
    gg.add_argument("--format", choices=["json", "csv"], default="json")
    gg.add_argument("--out")
    gg.set_defaults(func=cmd_gen_graph)

    r = sub.add_parser("route", help="find one route as a given client would")
    r.add_argument("--graph", required=True)
    r.add_argument("--client", required=True, help=", ".join(v.value for v in ClientVariant))
    r.add_argument("--from", dest="sender", required=True)
    r.add_argument("--to", dest="receiver", required=True)
    amt = r.add_mutually_exclusive_group(required=True)
    amt.add_argument("--amt-msat", type=int, help="amount in msat")
    amt.add_argument("--amt-sat", type=int, help="amount in sat")
    r.add_argument("--constraints", choices=["on", "off"], default="off", help="in-search side constraints")
    r.add_argument("--k", type=int, help="Eclair: number of candidate paths")
    r.add_argument("--eclair-random-select", action="store_true", help="pick among Eclair's k paths at random")
    r.add_argument("--seed", type=int, help="seed for --eclair-random-select")
    r.add_argument("--params", help="client parameter file (TOML/JSON)")
    r.add_argument("--backend", choices=list(kernel.BACKENDS))
    r.add_argument("--out")
    r.set_defaults(func=cmd_route)

    s = sub.add_parser("simulate", help="run an experiment, write JSON-lines records")
    _add_experiment_flags(s)
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("ablate", help="LND-bm success per bin across broadening scales")
    _add_experiment_flags(a)
    a.add_argument("--scales", default="3e5sat,cap/10,cap/1e2,cap/1e4,cap/1e6,cap/1e8")
    a.add_argument("--format", choices=["csv", "json", "md"], default="csv")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)

    rp = sub.add_parser("report", help="tables from simulation records")
    rp.add_argument("--in", dest="inp", required=True)
    rp.add_argument("--table", choices=["success", "metrics", "cross"], default="success")
    rp.add_argument("--bin", help=f"amount bin, e.g. {DEFAULT_BINS[5].label} or 1e5-1e6 (sats)")
    rp.add_argument("--format", choices=["csv", "json", "md"], default="csv")
    rp.add_argument("--min-common", type=int, default=5, help="cohort threshold for the metrics table")
    rp.add_argument("--out")
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"lnpathlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SnapshotError) as exc:
        print(f"lnpathlab {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"lnpathlab {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
