"""Channel success-probability models.

Every estimator answers "how likely can this channel forward ``amt`` msat"
given what the router believes about the hidden balance.  The raw
functions raise :class:`DomainError` outside their domain; routing code goes
through the clamped adapters at the bottom of the module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

LDK_SCALE = 64 * 1024**3
DEFAULT_BIMODAL_SCALE_MSAT = 300_000_000


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class AprioriParams:
    p_apriori: float = 0.6
    c_o: float = 0.9999
    s_o: float = 0.025
    penalty_half_life: float = 3600.0  # seconds

    def __post_init__(self):
        if not 0.0 <= self.p_apriori <= 1.0:
            raise ValueError("p_apriori must lie in [0, 1]")
        if self.s_o <= 0 or self.penalty_half_life <= 0:
            raise ValueError("s_o and penalty_half_life must be positive")


@dataclass(frozen=True)
class LiquidityBounds:
    lb_msat: int
    ub_msat: int

    @classmethod
    def full(cls, cap: int) -> "LiquidityBounds":
        return cls(0, cap)


@dataclass(frozen=True)
class BimodalScorerState:
    s_msat: float = DEFAULT_BIMODAL_SCALE_MSAT
    success_amt_msat: int = 0
    fail_amt_msat: int | None = None  # None means "capacity"

    def __post_init__(self):
        if self.s_msat <= 0:
            raise ValueError("s_msat must be positive")


def _check_cap(amt, cap):
    if cap <= 0:
        raise DomainError(f"capacity must be positive, got {cap}")
    if not 0 <= amt <= cap:
        raise DomainError(f"amount {amt} outside [0, {cap}]")


def p_uniform_capacity(amt: int, cap: int) -> float:
    _check_cap(amt, cap)
    return (cap - amt) / cap


def p_eclair(amt: int, cap: int) -> float:
    _check_cap(amt, cap)
    return 1.0 - amt / cap


def p_bounded(amt: int, bounds: LiquidityBounds) -> float:
    lb, ub = bounds.lb_msat, bounds.ub_msat
    if ub <= lb:
        raise DomainError(f"degenerate liquidity interval [{lb}, {ub}]")
    if not lb <= amt <= ub:
        raise DomainError(f"amount {amt} outside [{lb}, {ub}]")
    return (ub - amt) / (ub - lb)


def lnd_node_prob(amt: int, cap: int, params: AprioriParams = AprioriParams()) -> float:
    z = (params.c_o * cap - amt) / (params.s_o * cap)
    # 1/(1+e^z) written so that large |z| neither overflows nor loses the tail
    if z >= 0:
        ez = math.exp(-z)
        sig = ez / (1.0 + ez)
    else:
        sig = 1.0 / (1.0 + math.exp(z))
    return params.p_apriori * (1.0 - 0.5 * sig)


def p_lnd_apriori(
    amt: int,
    cap: int,
    time_since_last_failure: float | None = None,
    params: AprioriParams = AprioriParams(),
) -> float:
    _check_cap(amt, cap)
    node_prob = lnd_node_prob(amt, cap, params)
    if time_since_last_failure is None:
        return node_prob
    if time_since_last_failure < 0:
        raise DomainError("time since last failure must be nonnegative")
    return node_prob * (1.0 - 2.0 ** (-time_since_last_failure / params.penalty_half_life))


def _lnd_ratio(amt: int, cap: int, s: float, sa: int, fa: int) -> float:
    """mass(amt, fa) / mass(sa, fa) for the density e^{-x/s} + e^{(x-cap)/s}.

    mass(lo, hi) = s * (1 - e^{-(hi-lo)/s}) * (e^{-lo/s} + e^{(hi-cap)/s}).
    Both masses are rescaled by the larger of e^{-sa/s} and e^{(fa-cap)/s},
    so every exponent is an exact integer difference over s and is <= 0.
    The numerator is a product of two factors that each fall with amt,
    which keeps the rounded result monotone.
    """
    if sa <= cap - fa:
        tail = math.exp(-(cap - fa - sa) / s)
        num2 = math.exp(-(amt - sa) / s) + tail
        den2 = 1.0 + tail
    else:
        num2 = math.exp(-(amt - (cap - fa)) / s) + 1.0
        den2 = math.exp(-(sa - (cap - fa)) / s) + 1.0
    num1 = -math.expm1(-(fa - amt) / s)
    den1 = -math.expm1(-(fa - sa) / s)
    p = (num1 * num2) / (den1 * den2)
    return min(p, 1.0)


def p_lnd_bimodal(amt: int, cap: int, state: BimodalScorerState = BimodalScorerState()) -> float:
    sa = state.success_amt_msat
    fa = cap if state.fail_amt_msat is None else state.fail_amt_msat
    if cap <= 0 or not 0 <= sa <= fa <= cap:
        raise DomainError(f"need 0 <= sa ({sa}) <= fa ({fa}) <= cap ({cap})")
    if not sa <= amt <= fa:
        raise DomainError(f"amount {amt} outside [{sa}, {fa}]")
    if amt == fa:
        return 0.0
    if amt == sa:
        return 1.0
    return _lnd_ratio(amt, cap, float(state.s_msat), sa, fa)


def p_ldk_bimodal(amt: int, cap: int, bounds: LiquidityBounds) -> float:
    """Quadratic-density estimator with the fixed-point regulariser.

    Liquidity is expressed as a fraction of capacity centred on one half, so
    the cubic terms are dimensionless and the +1 regulariser acts on a
    2^36-scaled value.
    """
    lb, ub = bounds.lb_msat, bounds.ub_msat
    if cap <= 0 or not 0 <= lb <= ub <= cap:
        raise DomainError(f"need 0 <= LB ({lb}) <= UB ({ub}) <= cap ({cap})")
    if not lb <= amt <= ub:
        raise DomainError(f"amount {amt} outside [{lb}, {ub}]")
    return _ldk_ratio(amt, cap, lb, ub)


def _cube_diff(hi: int, lo: int, cap: int) -> float:
    # (h - 1/2)^3 - (l - 1/2)^3 with h, l fractions of cap, factored so the
    # difference keeps full relative precision
    u = hi / cap - 0.5
    a = lo / cap - 0.5
    return ((hi - lo) / cap) * (u * u + u * a + a * a)


def _ldk_ratio(amt, cap, lb, ub) -> float:
    num = _cube_diff(ub, amt, cap) * LDK_SCALE + 1.0
    den = _cube_diff(ub, lb, cap) * LDK_SCALE + 1.0
    return min(num / den, 1.0)


# ------------------------------------------------------------ routing adapters


def clamp_bounded(amt: int, lb: int, ub: int) -> float:
    """p_bounded, total: 1 below LB, 0 above UB and for empty intervals."""
    if amt <= lb:
        return 1.0
    if amt >= ub:
        return 0.0
    return (ub - amt) / (ub - lb)


def clamp_ldk_bimodal(amt: int, cap: int, lb: int, ub: int) -> float:
    if amt <= lb:
        return 1.0
    if amt > ub:
        return 0.0
    return _ldk_ratio(amt, cap, lb, ub)


def clamp_lnd_bimodal(amt: int, cap: int, s: float, sa: int, fa: int) -> float:
    if amt <= sa:
        return 1.0
    if amt >= fa:
        return 0.0
    return _lnd_ratio(amt, cap, s, sa, fa)


__all__ = [
    "AprioriParams",
    "BimodalScorerState",
    "DomainError",
    "LiquidityBounds",
    "clamp_bounded",
    "clamp_ldk_bimodal",
    "clamp_lnd_bimodal",
    "lnd_node_prob",
    "p_bounded",
    "p_eclair",
    "p_ldk_bimodal",
    "p_lnd_apriori",
    "p_lnd_bimodal",
    "p_uniform_capacity",
]
