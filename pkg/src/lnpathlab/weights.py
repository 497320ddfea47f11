"""Edge-cost functions of the nine client variants.

Costs are evaluated for the amount that crosses the edge (the receiver's
amount plus every downstream fee).  A function returns ``None`` when the edge
cannot carry the amount at all; that is a distinct signal from a large cost so
engines can count exclusions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from .graph import ChannelPolicy
from .probability import (
    AprioriParams,
    clamp_bounded,
    clamp_ldk_bimodal,
    clamp_lnd_bimodal,
    lnd_node_prob,
)

PPM = 1_000_000
BLOCKS_PER_YEAR = 52596


@dataclass(frozen=True)
class EdgeCost:
    additive: float
    multiplicative: float = 1.0
    prob: float = 1.0  # the client's own estimate for this edge
    fee: int = 0


def proportional(amt: int, rate_ppm: int) -> int:
    """floor(amt * rate / 1e6) without forming the full product."""
    q, r = divmod(amt, PPM)
    return q * rate_ppm + (r * rate_ppm) // PPM


def channel_fee(policy: ChannelPolicy, amt: int) -> int:
    if amt < 0:
        raise ValueError("amount must be nonnegative")
    return policy.base_fee_msat + proportional(amt, policy.fee_rate_ppm)


def propagate_amount(policy: ChannelPolicy, downstream_amt: int, is_first_hop: bool) -> int:
    """Amount that must reach ``policy.source`` so ``downstream_amt`` crosses the edge."""
    if downstream_amt < 0:
        raise ValueError("amount must be nonnegative")
    if is_first_hop:
        return downstream_amt
    return downstream_amt + channel_fee(policy, downstream_amt)


def hop_fee(policy: ChannelPolicy, amt: int, is_first_hop: bool) -> int:
    return 0 if is_first_hop else channel_fee(policy, amt)


def is_eligible(policy: ChannelPolicy, amt: int) -> bool:
    return policy.htlc_min_msat <= amt <= min(policy.htlc_max_msat, policy.capacity_msat)


# ------------------------------------------------------------------- LND


@dataclass(frozen=True)
class LndParams:
    riskfactor: float = 15e-9
    timepref: float = 0.0
    base_attempt_cost_msat: int = 100
    attempt_cost_rate_ppm: int = 1000
    prob_model: str = "apriori"  # apriori | bimodal | uniform
    apriori: AprioriParams = field(default_factory=AprioriParams)
    bimodal_scale_msat: Optional[float] = 300_000_000
    bimodal_scale_fraction: Optional[float] = None  # s = fraction * cap, wins if set

    def __post_init__(self):
        if self.riskfactor < 0:
            raise ValueError("riskfactor must be nonnegative")
        if not -1.0 <= self.timepref <= 1.0:
            raise ValueError("timepref must lie in [-1, 1]")
        if self.prob_model not in ("apriori", "bimodal", "uniform"):
            raise ValueError(f"unknown LND probability model {self.prob_model!r}")

    def scale_for(self, cap: int) -> float:
        if self.bimodal_scale_fraction is not None:
            return self.bimodal_scale_fraction * cap
        return float(self.bimodal_scale_msat)


def lnd_attempt_cost(amt: int, params: LndParams) -> int:
    return params.base_attempt_cost_msat + proportional(amt, params.attempt_cost_rate_ppm)


def lnd_penalty(amt: int, params: LndParams = LndParams()) -> float:
    """Virtual cost of a failed attempt; seeds the multiplicative term."""
    return lnd_attempt_cost(amt, params) * (1.0 / (0.5 - 0.45 * params.timepref)) - 1.0


def lnd_probability(
    policy: ChannelPolicy,
    amt: int,
    params: LndParams,
    time_since_last_failure: Optional[float] = None,
    success_amt: int = 0,
    fail_amt: Optional[int] = None,
) -> float:
    cap = policy.capacity_msat
    if params.prob_model == "uniform":
        return (cap - amt) / cap
    if params.prob_model == "bimodal":
        fa = cap if fail_amt is None else fail_amt
        return clamp_lnd_bimodal(amt, cap, params.scale_for(cap), success_amt, fa)
    p = lnd_node_prob(amt, cap, params.apriori)
    if time_since_last_failure is not None:
        p = p * (1.0 - 2.0 ** (-time_since_last_failure / params.apriori.penalty_half_life))
    return p


def cost_lnd(
    policy: ChannelPolicy,
    amt: int,
    params: LndParams = LndParams(),
    *,
    is_first_hop: bool = False,
    time_since_last_failure: Optional[float] = None,
    success_amt: int = 0,
    fail_amt: Optional[int] = None,
) -> Optional[EdgeCost]:
    if not is_eligible(policy, amt):
        return None
    p = lnd_probability(policy, amt, params, time_since_last_failure, success_amt, fail_amt)
    if p <= 0.0:
        return None
    fee = hop_fee(policy, amt, is_first_hop)
    additive = fee + amt * policy.cltv_delta * params.riskfactor
    return EdgeCost(additive, 1.0 / p, p, fee)


# ------------------------------------------------------------------- CLN


@dataclass(frozen=True)
class ClnParams:
    riskfactor: float = 10.0
    blocks_per_year: int = BLOCKS_PER_YEAR

    def __post_init__(self):
        if self.riskfactor < 0:
            raise ValueError("riskfactor must be nonnegative")


def cln_capacity_bias(amt: int, cap: int) -> float:
    # -ln((cap + 1 - amt) / (cap + 1)); log1p only where its argument is small
    if 2 * amt <= cap + 1:
        return -math.log1p(-amt / (cap + 1))
    return -math.log((cap + 1 - amt) / (cap + 1))


def cost_cln(
    policy: ChannelPolicy, amt: int, params: ClnParams = ClnParams(), *, is_first_hop: bool = False
) -> Optional[EdgeCost]:
    if not is_eligible(policy, amt):
        return None
    cap = policy.capacity_msat
    fee = hop_fee(policy, amt, is_first_hop)
    bias = cln_capacity_bias(amt, cap)
    risk = amt * policy.cltv_delta * params.riskfactor / (params.blocks_per_year * 100)
    additive = (fee + risk + 1.0) * (bias + 1.0)
    return EdgeCost(additive, 1.0, (cap - amt) / cap, fee)


# ------------------------------------------------------------------- LDK


@dataclass(frozen=True)
class LdkParams:
    penalty_base_msat: float = 500.0
    base_multiplier_msat: float = 8192.0
    anti_probing_penalty_msat: float = 250.0
    liquidity_multiplier_msat: float = 30000.0
    liquidity_amt_multiplier_msat: float = 192.0
    historic_multiplier_msat: float = 10000.0
    historic_amt_multiplier_msat: float = 64.0
    prob_model: str = "uniform_bounds"  # uniform_bounds | bimodal_quadratic

    def __post_init__(self):
        if self.prob_model not in ("uniform_bounds", "bimodal_quadratic"):
            raise ValueError(f"unknown LDK probability model {self.prob_model!r}")
        for name in (
            "penalty_base_msat",
            "base_multiplier_msat",
            "anti_probing_penalty_msat",
            "liquidity_multiplier_msat",
            "liquidity_amt_multiplier_msat",
            "historic_multiplier_msat",
            "historic_amt_multiplier_msat",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def ldk_probability(amt: int, cap: int, lb: int, ub: int, params: LdkParams) -> float:
    if params.prob_model == "uniform_bounds":
        return clamp_bounded(amt, lb, ub)
    return clamp_ldk_bimodal(amt, cap, lb, ub)


def ldk_path_htlc_min(policy: ChannelPolicy) -> float:
    return policy.htlc_min_msat * (1.0 + policy.fee_rate_ppm / PPM) + policy.base_fee_msat


def ldk_base_penalty(amt: int, params: LdkParams = LdkParams()) -> float:
    return params.penalty_base_msat + params.base_multiplier_msat * amt / 2.0**30


def ldk_anti_probing(policy: ChannelPolicy, params: LdkParams = LdkParams()) -> float:
    # htlc_max >= cap/2, compared in integers
    return params.anti_probing_penalty_msat if 2 * policy.htlc_max_msat >= policy.capacity_msat else 0.0


def cost_ldk(
    policy: ChannelPolicy,
    amt: int,
    params: LdkParams = LdkParams(),
    *,
    is_first_hop: bool = False,
    bounds: Optional[tuple[int, int]] = None,
    historic_bounds: Optional[tuple[int, int]] = None,
) -> Optional[EdgeCost]:
    if not is_eligible(policy, amt):
        return None
    cap = policy.capacity_msat
    lb, ub = bounds if bounds is not None else (0, cap)
    hlb, hub = historic_bounds if historic_bounds is not None else (0, cap)
    p = ldk_probability(amt, cap, lb, ub, params)
    hp = ldk_probability(amt, cap, hlb, hub, params)
    if p <= 0.0 or hp <= 0.0:
        return None
    fee = hop_fee(policy, amt, is_first_hop)
    liq = -math.log10(p) * (
        params.liquidity_multiplier_msat + params.liquidity_amt_multiplier_msat * amt / 2.0**20
    )
    hist = -math.log10(hp) * (
        params.historic_multiplier_msat + params.historic_amt_multiplier_msat * amt / 2.0**20
    )
    penalty = ldk_base_penalty(amt, params) + ldk_anti_probing(policy, params) + liq + hist
    additive = max(float(fee), ldk_path_htlc_min(policy)) + penalty
    return EdgeCost(additive, 1.0, p, fee)


# ---------------------------------------------------------------- Eclair


@dataclass(frozen=True)
class NormRange:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"normalisation range needs min < max, got [{self.lo}, {self.hi}]")


def normalize(value: float, rng: NormRange) -> float:
    v = min(max(rng.lo, value), rng.hi)
    return 0.00001 + 0.99998 * (v - rng.lo) / (rng.hi - rng.lo)


@dataclass(frozen=True)
class EclairParams:
    variant: str = "ratios"  # ratios | constants_plain | constants_log
    agefactor: float = 0.35
    basefactor: float = 0.0
    capfactor: float = 0.5
    cltvfactor: float = 0.15
    locked_funds_risk: float = 1e-8
    base_failure_cost_msat: int = 2000
    failure_cost_rate_ppm: int = 500
    base_hop_cost_msat: int = 0
    hop_cost_rate_ppm: int = 0
    cltv_range: tuple[float, float] = (9.0, 2016.0)
    cap_range_msat: tuple[float, float] = (1_000.0, 100_000_000_000.0)
    age_range: Optional[tuple[float, float]] = None  # None: (min funding height, tip)

    def __post_init__(self):
        if self.variant not in ("ratios", "constants_plain", "constants_log"):
            raise ValueError(f"unknown Eclair variant {self.variant!r}")
        if min(self.agefactor, self.basefactor, self.capfactor, self.cltvfactor) < 0:
            raise ValueError("heuristic ratios must be nonnegative")
        NormRange(*self.cltv_range)
        NormRange(*self.cap_range_msat)
        if self.age_range is not None:
            NormRange(*self.age_range)


@dataclass(frozen=True)
class EclairRanges:
    cltv: NormRange
    cap: NormRange
    age: NormRange


def eclair_ranges(graph, params: EclairParams = EclairParams()) -> EclairRanges:
    if params.age_range is not None:
        age = NormRange(*params.age_range)
    else:
        lo = min((p.funding_height for p in graph.policies), default=0)
        hi = graph.tip_height
        age = NormRange(lo, hi if hi > lo else lo + 1)
    return EclairRanges(NormRange(*params.cltv_range), NormRange(*params.cap_range_msat), age)


def eclair_factor(policy: ChannelPolicy, params: EclairParams, ranges: EclairRanges) -> float:
    n_cltv = normalize(policy.cltv_delta, ranges.cltv)
    n_age = normalize(policy.funding_height, ranges.age)
    n_cap = normalize(policy.capacity_msat, ranges.cap)
    return (
        params.basefactor
        + n_cltv * params.cltvfactor
        + n_age * params.agefactor
        + (1.0 - n_cap) * params.capfactor
    )


def eclair_failure_cost(amt: int, params: EclairParams = EclairParams()) -> int:
    return params.base_failure_cost_msat + proportional(amt, params.failure_cost_rate_ppm)


def eclair_hop_cost(amt: int, params: EclairParams = EclairParams()) -> int:
    return params.base_hop_cost_msat + proportional(amt, params.hop_cost_rate_ppm)


def cost_eclair(
    policy: ChannelPolicy,
    amt: int,
    params: EclairParams,
    ranges: EclairRanges,
    *,
    is_first_hop: bool = False,
    factor: Optional[float] = None,
) -> Optional[EdgeCost]:
    """``factor`` may be passed precomputed; it only depends on the policy."""
    if not is_eligible(policy, amt):
        return None
    cap = policy.capacity_msat
    p = 1.0 - amt / cap
    fee = hop_fee(policy, amt, is_first_hop)
    hop = eclair_hop_cost(amt, params)
    if params.variant == "ratios":
        if factor is None:
            factor = eclair_factor(policy, params, ranges)
        return EdgeCost((fee + hop) * factor, 1.0, p, fee)
    if p <= 0.0:
        return None
    risk = amt * policy.cltv_delta * params.locked_funds_risk
    failure = eclair_failure_cost(amt, params)
    if params.variant == "constants_plain":
        additive = fee + hop + risk + failure / p
    else:
        additive = fee + hop + risk - failure * math.log(p)
    return EdgeCost(additive, 1.0, p, fee)


__all__ = [
    "ClnParams",
    "EclairParams",
    "EclairRanges",
    "EdgeCost",
    "LdkParams",
    "LndParams",
    "NormRange",
    "channel_fee",
    "cost_cln",
    "cost_eclair",
    "cost_ldk",
    "cost_lnd",
    "eclair_factor",
    "eclair_ranges",
    "is_eligible",
    "lnd_penalty",
    "normalize",
    "propagate_amount",
]
