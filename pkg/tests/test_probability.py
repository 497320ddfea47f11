import math
import random

import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from lnpathlab.probability import (
    LDK_SCALE,
    AprioriParams,
    BimodalScorerState,
    DomainError,
    LiquidityBounds,
    clamp_bounded,
    clamp_ldk_bimodal,
    clamp_lnd_bimodal,
    lnd_node_prob,
    p_bounded,
    p_eclair,
    p_ldk_bimodal,
    p_lnd_apriori,
    p_lnd_bimodal,
    p_uniform_capacity,
)

caps = st.integers(1, 10**11)


@st.composite
def amt_cap(draw):
    cap = draw(caps)
    return draw(st.integers(0, cap)), cap


def test_uniform_boundaries():
    assert p_uniform_capacity(0, 1000) == 1.0
    assert p_uniform_capacity(1000, 1000) == 0.0
    assert p_uniform_capacity(250, 1000) == 0.75
    with pytest.raises(DomainError):
        p_uniform_capacity(1001, 1000)
    with pytest.raises(DomainError):
        p_uniform_capacity(1, 0)


def test_eclair_equals_uniform():
    r = random.Random(5)
    for _ in range(1000):
        cap = r.randint(1, 10**11)
        amt = r.randint(0, cap)
        assert p_eclair(amt, cap) == pytest.approx(p_uniform_capacity(amt, cap), abs=1e-15)
    assert p_eclair(0, 7) == 1.0 and p_eclair(7, 7) == 0.0


def test_bounded():
    b = LiquidityBounds(100, 600)
    assert p_bounded(100, b) == 1.0
    assert p_bounded(600, b) == 0.0
    assert p_bounded(350, b) == 0.5
    with pytest.raises(DomainError):
        p_bounded(5, LiquidityBounds(5, 5))
    with pytest.raises(DomainError):
        p_bounded(50, b)


@given(amt_cap())
def test_bounded_full_interval_is_uniform(ac):
    amt, cap = ac
    assert p_bounded(amt, LiquidityBounds.full(cap)) == p_uniform_capacity(amt, cap)


def test_clamp_bounded_outside_interval():
    assert clamp_bounded(50, 100, 600) == 1.0
    assert clamp_bounded(700, 100, 600) == 0.0
    assert clamp_bounded(5, 5, 5) == 1.0


def test_apriori_examples():
    assert p_lnd_apriori(0, 10**9) == pytest.approx(0.6, abs=1e-12)
    cap, amt = 10**9, 4 * 10**8
    node = p_lnd_apriori(amt, cap)
    hl = AprioriParams().penalty_half_life
    assert p_lnd_apriori(amt, cap, hl) == pytest.approx(node / 2, rel=1e-15)
    assert p_lnd_apriori(amt, cap, 0.0) == 0.0
    with pytest.raises(DomainError):
        p_lnd_apriori(amt, cap, -1.0)


def test_apriori_sigmoid_halfway():
    # at amt = c_o * cap the sigmoid term is exactly 1/2
    p = AprioriParams()
    cap = 10**6
    assert lnd_node_prob(p.c_o * cap, cap, p) == pytest.approx(p.p_apriori * 0.75, rel=1e-15)


def test_apriori_params_validated():
    with pytest.raises(ValueError):
        AprioriParams(p_apriori=1.5)
    with pytest.raises(ValueError):
        AprioriParams(s_o=0)


def test_lnd_bimodal_boundaries():
    st_ = BimodalScorerState(s_msat=3e8, success_amt_msat=1000, fail_amt_msat=10**8)
    assert p_lnd_bimodal(1000, 10**9, st_) == 1.0
    assert p_lnd_bimodal(10**8, 10**9, st_) == 0.0
    with pytest.raises(DomainError):
        p_lnd_bimodal(999, 10**9, st_)
    with pytest.raises(DomainError):
        p_lnd_bimodal(5, 10, BimodalScorerState(success_amt_msat=8, fail_amt_msat=4))


def test_lnd_bimodal_symmetry():
    # with no observations the density is symmetric about cap/2
    cap = 10**10
    assert p_lnd_bimodal(cap // 2, cap) == pytest.approx(0.5, rel=1e-12)


def test_lnd_bimodal_extreme_ratio_is_finite():
    cap = 10**11
    st_ = BimodalScorerState(s_msat=10.0)
    for amt in (1, 10**3, cap // 2, cap - 10**3, cap - 1):
        p = p_lnd_bimodal(amt, cap, st_)
        assert 0.0 <= p <= 1.0 and not math.isnan(p)


def test_ldk_bimodal_boundaries():
    cap = 10**9
    b = LiquidityBounds(10**8, 9 * 10**8)
    assert p_ldk_bimodal(10**8, cap, b) == 1.0
    at_ub = p_ldk_bimodal(9 * 10**8, cap, b)
    u, a = 0.4, -0.4
    den = (u**3 - a**3) * LDK_SCALE + 1.0
    assert at_ub == pytest.approx(1.0 / den, rel=1e-12)
    assert at_ub > 0
    with pytest.raises(DomainError):
        p_ldk_bimodal(5, cap, b)


def test_ldk_bimodal_degenerate_interval_is_one():
    assert p_ldk_bimodal(500, 1000, LiquidityBounds(500, 500)) == 1.0


def test_ldk_scale():
    assert LDK_SCALE == 64 * 1024**3 == 2**36


ESTIMATORS = {
    "uniform": lambda a, c: p_uniform_capacity(a, c),
    "eclair": lambda a, c: p_eclair(a, c),
    "apriori": lambda a, c: p_lnd_apriori(a, c),
    "apriori-decay": lambda a, c: p_lnd_apriori(a, c, 1800.0),
    "lnd-bimodal": lambda a, c: p_lnd_bimodal(a, c),
    "lnd-bimodal-frac": lambda a, c: p_lnd_bimodal(a, c, BimodalScorerState(s_msat=c / 10)),
    "ldk-bimodal": lambda a, c: p_ldk_bimodal(a, c, LiquidityBounds.full(c)),
}


@pytest.mark.parametrize("name", sorted(ESTIMATORS))
@given(cap=caps, x=st.floats(0, 1), y=st.floats(0, 1))
def test_estimators_in_range_and_monotone(name, cap, x, y):
    f = ESTIMATORS[name]
    a1, a2 = sorted((int(x * cap), int(y * cap)))
    p1, p2 = f(a1, cap), f(a2, cap)
    lo = 0.0 if name != "ldk-bimodal" else 1e-300
    assert lo <= p2 <= p1 <= 1.0


@given(cap=caps, x=st.floats(0, 1), y=st.floats(0, 1), z=st.floats(0, 1))
def test_clamped_adapters_agree_inside_domain(cap, x, y, z):
    lb, amt, ub = sorted(int(v * cap) for v in (x, y, z))
    assume(lb < ub)
    assert clamp_bounded(amt, lb, ub) == pytest.approx(p_bounded(amt, LiquidityBounds(lb, ub)), abs=1e-15)
    if amt > lb:
        assert clamp_ldk_bimodal(amt, cap, lb, ub) == p_ldk_bimodal(amt, cap, LiquidityBounds(lb, ub))
        s = cap / 10
        st_ = BimodalScorerState(s_msat=s, success_amt_msat=lb, fail_amt_msat=ub)
        assert clamp_lnd_bimodal(amt, cap, s, lb, ub) == p_lnd_bimodal(amt, cap, st_)
