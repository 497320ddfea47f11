import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lnpathlab.graph import (
    BalanceView,
    ChannelGraph,
    ConnectivityClass,
    SnapshotError,
    bimodal_inverse_cdf,
    classify_connectivity,
    dump_snapshot,
    load_snapshot,
    node_stats,
    pack_scid,
    sample_balances_bimodal,
    sample_balances_uniform,
    scid_height,
    validate_balances,
)

from conftest import make_policy

RECORD = {
    "short_channel_id": pack_scid(650_000, 12, 1),
    "channel_id": "650000x12x1",
    "capacity_sat": 2_000_000,
    "node1_id": "alice",
    "node2_id": "bob",
    "node1_policy": {"base_fee_msat": 1000, "fee_rate_ppm": 1, "cltv_delta": 40, "htlc_min_msat": 1, "htlc_max_msat": 1_980_000_000},
    "node2_policy": {"base_fee_msat": 0, "fee_rate_ppm": 200, "cltv_delta": 144, "htlc_min_msat": 1000, "htlc_max_msat": 2_000_000_000},
}


def test_json_record_becomes_two_policies():
    g = load_snapshot(json.dumps([RECORD]))
    assert len(g.policies) == 2
    ab = g.policy("alice", "bob", "650000x12x1")
    ba = g.policy("bob", "alice", "650000x12x1")
    assert ab.capacity_msat == ba.capacity_msat == 2_000_000_000
    assert ab.fee_rate_ppm == 1 and ba.cltv_delta == 144
    assert ab.funding_height == 650_000
    assert g.reverse_idx[g.index_of(ab.key)] == g.index_of(ba.key)


def test_scid_roundtrip():
    assert scid_height(pack_scid(812_345, 99, 3)) == 812_345


def test_json_csv_dump_roundtrip(g500):
    for fmt in ("json", "csv"):
        text = dump_snapshot(g500, fmt)
        again = load_snapshot(text, format=fmt, tip_height=g500.tip_height)
        assert again.policies == g500.policies
        assert again.nodes == g500.nodes


def test_load_accepts_stream_bytes_and_path(tmp_path):
    text = json.dumps([RECORD])
    p = tmp_path / "g.json"
    p.write_text(text)
    graphs = [load_snapshot(text), load_snapshot(text.encode()), load_snapshot(io.StringIO(text)), load_snapshot(p)]
    assert all(g.policies == graphs[0].policies for g in graphs)


@pytest.mark.parametrize(
    "mutate, msg",
    [
        (lambda r: r.pop("capacity_sat"), "capacity_sat"),
        (lambda r: r["node1_policy"].update(fee_rate_ppm="x"), "fee_rate_ppm"),
        (lambda r: r["node2_policy"].update(htlc_min_msat=3_000_000_000), "record 0"),
        (lambda r: r.update(capacity_sat=-1), "record 0"),
    ],
)
def test_bad_records_are_rejected(mutate, msg):
    rec = json.loads(json.dumps(RECORD))
    mutate(rec)
    with pytest.raises(SnapshotError, match=msg):
        load_snapshot(json.dumps([rec]))


def test_duplicate_direction_rejected():
    with pytest.raises(SnapshotError, match="duplicate"):
        load_snapshot(json.dumps([RECORD, RECORD]))


def test_not_an_array():
    with pytest.raises(SnapshotError):
        load_snapshot('{"a": 1}')
    with pytest.raises(SnapshotError, match="line"):
        load_snapshot("[1,")


def test_csv_needs_both_directions(g500):
    text = dump_snapshot(g500, "csv")
    lines = text.splitlines()
    with pytest.raises(SnapshotError, match="expected 2 directions"):
        load_snapshot("\n".join(lines[:2]) + "\n", format="csv")


def test_adjacency_is_sorted_and_consistent(g500):
    for v, edges in enumerate(g500.in_idx):
        keys = [(g500.policies[e].source, g500.policies[e].channel_id) for e in edges]
        assert keys == sorted(keys)
        assert all(g500.edge_dst[e] == v for e in edges)
    for v, edges in enumerate(g500.out_idx):
        assert all(g500.edge_src[e] == v for e in edges)


def _star(center, k, cap_sat):
    pols = []
    for i in range(k):
        cid = f"{center}{i}"
        pols.append(make_policy(center, f"x{i}", cid, cap=cap_sat * 1000))
        pols.append(make_policy(f"x{i}", center, cid, cap=cap_sat * 1000))
    return ChannelGraph(pols)


@pytest.mark.parametrize(
    "k, cap_sat, expected",
    [
        (6, 200_000, ConnectivityClass.WELL),
        (6, 100_000, ConnectivityClass.FAIR),
        (6, 1_000, ConnectivityClass.POOR),
        (5, 10**7, ConnectivityClass.POOR),
        (6, 1_700, ConnectivityClass.FAIR),
    ],
)
def test_connectivity_classes(k, cap_sat, expected):
    g = _star("h", k, cap_sat)
    assert node_stats(g, "h") == (k, k * cap_sat)
    assert classify_connectivity(g, "h") is expected


def test_every_class_present_in_builtin(g500):
    from lnpathlab.graph import classify_all

    seen = set(classify_all(g500).values())
    assert seen == set(ConnectivityClass)


@pytest.mark.parametrize("sampler", [sample_balances_uniform, sample_balances_bimodal])
def test_balances_conserve_capacity(g500, sampler):
    view = sampler(g500, 3)
    validate_balances(view)
    assert view == sampler(g500, 3)
    assert not np.array_equal(view.balance, sampler(g500, 4).balance)


def test_transfer_moves_liquidity(two_node):
    view = BalanceView(two_node, np.array([4_000_000, 1_000_000]))
    e = two_node.index_of(("a", "b", "1x1x0"))
    view.transfer(e, 1_500_000)
    assert view[("a", "b", "1x1x0")] == 2_500_000
    assert view[("b", "a", "1x1x0")] == 2_500_000
    validate_balances(view)
    with pytest.raises(ValueError):
        view.transfer(e, 10**9)


@given(
    st.floats(0.0, 1.0),
    st.floats(1e3, 1e11),
    st.floats(1e-4, 1.0),
)
def test_bimodal_inverse_cdf_in_range(u, cap, frac):
    x = float(bimodal_inverse_cdf(np.array([u]), np.array([cap]), np.array([frac * cap]))[0])
    assert 0.0 <= x <= cap


def test_bimodal_inverse_cdf_is_monotone():
    u = np.linspace(0, 1, 2001)
    cap = np.full_like(u, 1e9)
    for frac in (1e-6, 1e-2, 0.1, 1.0):
        x = bimodal_inverse_cdf(u, cap, frac * cap)
        assert np.all(np.diff(x) >= 0)
        assert x[1000] == pytest.approx(5e8, rel=1e-9)


def test_content_hash_tracks_policy_changes(two_node):
    changed = ChannelGraph([make_policy("a", "b", "1x1x0", cap=5_000_000, base=1001, ppm=100), make_policy("b", "a", "1x1x0", cap=5_000_000, ppm=10, cltv=18)])
    assert two_node.content_hash() != changed.content_hash()
    assert two_node.content_hash() == ChannelGraph(reversed(two_node.policies)).content_hash()


@given(st.floats(0.001, 0.999), st.sampled_from([1e-3, 0.05, 0.1, 0.5, 1.0]))
def test_bimodal_inverse_cdf_inverts_the_cdf(u, frac):
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    cap = mpmath.mpf(10**9)
    s = frac * cap
    x = mpmath.mpf(float(bimodal_inverse_cdf(np.array([u]), np.array([1e9]), np.array([float(s)]))[0]))
    num = (1 - mpmath.exp(-x / s)) + (mpmath.exp((x - cap) / s) - mpmath.exp(-cap / s))
    F = num / (2 * (1 - mpmath.exp(-cap / s)))
    assert float(F) == pytest.approx(u, abs=1e-9)
