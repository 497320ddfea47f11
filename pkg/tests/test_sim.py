import numpy as np
import pytest
from dataclasses import replace

from lnpathlab import rng
from lnpathlab.config import ConfigError
from lnpathlab.graph import BalanceView, ChannelGraph, sample_balances_uniform, validate_balances
from lnpathlab.routing import ClientVariant, find_route
from lnpathlab.sim import (
    INSUFFICIENT,
    NO_PATH,
    SUCCESS,
    ClientSpec,
    ExperimentConfig,
    SimRecord,
    SimulationError,
    execute_payment,
    iter_experiment,
    load_graph,
    read_records,
    replay_transaction,
    run_experiment,
    run_scale_ablation,
    sample_transaction,
)

from conftest import make_policy

SMALL = ExperimentConfig(graph="synthetic:60:3", n_transactions=40, seed=9)


@pytest.fixture(scope="module")
def g60():
    return load_graph(SMALL.graph)


def test_client_spec_parse():
    a = ClientSpec.parse("LND-bm:s=cap/10")
    assert a.label == "LND-bm:s=cap/10" and a.variant is ClientVariant.LND_BM
    assert a.params.lnd.scale_for(10**9) == pytest.approx(10**8)
    b = ClientSpec.parse("LND-bm:s=3e5sat")
    assert b.params.lnd.scale_for(10**9) == 3e8
    assert ClientSpec.parse("LND-bm:s=3e8").params.lnd.scale_for(1) == 3e8
    assert ClientSpec.parse("CLN").label == "CLN"
    with pytest.raises(ValueError):
        ClientSpec.parse("CLN:s=cap/10")
    with pytest.raises(ValueError):
        ClientSpec.parse("LND-bm:s=lots")


@pytest.mark.parametrize(
    "bad",
    [
        {"n_transactions": 0},
        {"balance_model": "gaussian"},
        {"balance_model": "bimodal", "s_fraction": 0},
        {"amount_policy": "zipf"},
        {"mutate_balances": True},
        {"clients": ["CLN", "cln"]},
        {"clients": []},
        {"endpoint_filter": ["Well"]},
        {"endpoint_filter": ["Well", "Great"]},
        {"colour": "blue"},
    ],
)
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_config_hash_stable():
    a = ExperimentConfig()
    assert a.config_hash() == ExperimentConfig.from_dict(a.to_dict()).config_hash()
    assert a.config_hash() != replace(a, seed=43).config_hash()


def test_load_graph_sources(tmp_path, g60):
    from lnpathlab.graph import dump_snapshot

    p = tmp_path / "g.csv"
    p.write_text(dump_snapshot(g60, "csv"))
    assert load_graph(str(p)).policies == g60.policies
    assert load_graph("g.csv", base_dir=tmp_path).policies == g60.policies
    with pytest.raises(ValueError):
        load_graph("builtin:nope")
    with pytest.raises(ValueError):
        load_graph("synthetic:60")


def test_sample_transaction_respects_balances(g60):
    bal = sample_balances_uniform(g60, 1)
    for i in range(50):
        s, r, amt = sample_transaction(g60, bal, rng.stream(1, i))
        assert s != r and amt >= 1
        si, ri = g60.rank[s], g60.rank[r]
        assert amt <= max(bal.balance[list(g60.out_idx[si])])
        assert amt <= max(bal.balance[list(g60.in_idx[ri])])


def test_sample_transaction_filter(g60):
    from lnpathlab.graph import classify_all

    cls = classify_all(g60)
    bal = sample_balances_uniform(g60, 1)
    for i in range(20):
        s, r, _ = sample_transaction(g60, bal, rng.stream(2, i), ("Poor", "Well"))
        assert cls[s].value == "Poor" and cls[r].value == "Well"


def test_sample_transaction_infeasible():
    g = ChannelGraph([make_policy("a", "b", "c"), make_policy("b", "a", "c")])
    empty = BalanceView(g, np.zeros(2, dtype=np.int64))
    with pytest.raises(SimulationError):
        sample_transaction(g, empty, rng.stream(0), max_tries=20)
    with pytest.raises(SimulationError):
        sample_transaction(g, BalanceView.full(g), rng.stream(0), ("Well", "Well"))


def _line():
    pols = [make_policy("s", "m", "1", cap=10**6), make_policy("m", "s", "1", cap=10**6)]
    pols += [make_policy("m", "r", "2", cap=10**6, base=1000), make_policy("r", "m", "2", cap=10**6, base=1000)]
    return ChannelGraph(pols)


def test_execute_payment_success_and_mutation():
    g = _line()
    route = find_route("CLN", g, "s", "r", 500_000)
    assert route.per_hop_amt == (501_000, 500_000)
    # index layout follows sorted (source, target, cid)
    arr = np.zeros(4, dtype=np.int64)
    for i, p in enumerate(g.policies):
        arr[i] = {("m", "r"): 500_000, ("r", "m"): 500_000, ("m", "s"): 400_000, ("s", "m"): 600_000}[(p.source, p.target)]
    bal = BalanceView(g, arr)
    out = execute_payment(bal, route)
    assert out.status == SUCCESS and out.fee_msat == 1000 and out.path_len == 2
    before = bal.copy()
    execute_payment(bal, route, mutate=True)
    validate_balances(bal)
    assert bal[("s", "m", "1")] == before[("s", "m", "1")] - 501_000
    assert bal[("r", "m", "2")] == before[("r", "m", "2")] + 500_000
    again = execute_payment(bal, route)
    assert again.status == INSUFFICIENT and again.failed_hop == 0


def test_record_roundtrip(tmp_path):
    recs = run_experiment(SMALL)
    p = tmp_path / "r.jsonl"
    p.write_text("".join(r.to_json() + "\n" for r in recs))
    back = read_records(p)
    assert [r.to_dict() for r in back] == [r.to_dict() for r in recs]
    p.write_text('{"tx": 0}\n')
    with pytest.raises(ValueError, match="malformed"):
        read_records(p)


def test_outcome_fields():
    recs = run_experiment(SMALL)
    statuses = {o.status for r in recs for o in r.outcomes.values()}
    assert SUCCESS in statuses and statuses <= {SUCCESS, NO_PATH, INSUFFICIENT}
    for r in recs:
        assert list(r.outcomes) == list(SMALL.clients)
        for o in r.outcomes.values():
            d = o.to_dict()
            assert ("fee_msat" in d) == (o.status == SUCCESS)
            assert ("failed_hop" in d) == (o.status == INSUFFICIENT)


def test_threads_do_not_change_records():
    a = [r.to_json() for r in iter_experiment(SMALL, threads=1)]
    b = [r.to_json() for r in iter_experiment(SMALL, threads=8)]
    assert a == b


def test_replay_single_transaction():
    recs = run_experiment(SMALL)
    for i in (0, 17, 39):
        assert replay_transaction(SMALL, i).to_json() == recs[i].to_json()


def test_python_backend_gives_same_records():
    pytest.importorskip("lnpathlab._ckernel")
    cfg = replace(SMALL, n_transactions=10)
    a = [r.to_json() for r in iter_experiment(cfg, backend="compiled")]
    b = [r.to_json() for r in iter_experiment(cfg, backend="python")]
    assert a == b


def test_mutation_keeps_conservation(g60):
    cfg = replace(SMALL, balances_per="run", mutate_balances=True, n_transactions=30)
    recs = run_experiment(cfg, g60)
    assert len(recs) == 30
    assert [r.to_json() for r in recs] == [r.to_json() for r in run_experiment(cfg, g60, threads=4)]
    with pytest.raises(ValueError):
        replay_transaction(cfg, 3)


def test_scorer_feedback_runs_sequentially():
    cfg = replace(SMALL, scorer_feedback=True, clients=("LDK-un", "LND-ap"), n_transactions=25)
    a = [r.to_json() for r in iter_experiment(cfg, threads=4)]
    assert a == [r.to_json() for r in iter_experiment(cfg)]


def test_bimodal_and_decade_amounts():
    cfg = replace(SMALL, balance_model="bimodal", amount_policy="decade", n_transactions=60)
    recs = run_experiment(cfg)
    decades = {len(str(r.amt_msat // 1000)) for r in recs if r.amt_msat >= 1000}
    assert len(decades) >= 4


def test_scale_ablation_table(g60):
    cfg = replace(SMALL, balance_model="bimodal", n_transactions=30)
    table, recs = run_scale_ablation(cfg, ["3e5sat", "cap/10"], g60)
    assert table.rows == ["s=3e5sat", "s=cap/10"]
    assert sum(table.cell("s=cap/10", c).den or 0 for c in table.columns) == 30
    with pytest.raises(ValueError):
        run_scale_ablation(SMALL, ["cap/10"], g60)
