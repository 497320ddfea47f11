"""Pathfinding testbed for payment-channel networks."""

__version__ = "0.1.0"

from .graph import ChannelGraph, ChannelPolicy, dump_snapshot, load_snapshot
from .metrics import aggregate_metrics, connectivity_cross_table, success_rates_by_bin
from .routing import ALL_CLIENTS, ClientParams, ClientVariant, find_route
from .sim import ExperimentConfig, SimRecord, run_experiment
from .synth import SynthParams, generate_synthetic

__all__ = [
    "ALL_CLIENTS",
    "ChannelGraph",
    "ChannelPolicy",
    "ClientParams",
    "ClientVariant",
    "ExperimentConfig",
    "SimRecord",
    "SynthParams",
    "aggregate_metrics",
    "connectivity_cross_table",
    "dump_snapshot",
    "find_route",
    "generate_synthetic",
    "load_snapshot",
    "run_experiment",
    "success_rates_by_bin",
]
