import pytest

from lnpathlab import config
from lnpathlab.config import ConfigError
from lnpathlab.routing import ClientParams
from lnpathlab.sim import ExperimentConfig
from lnpathlab.synth import SynthParams
from lnpathlab.weights import EclairParams, LndParams


@pytest.mark.parametrize("suffix", [".toml", ".json"])
def test_experiment_roundtrip(tmp_path, suffix):
    cfg = ExperimentConfig(
        balance_model="bimodal",
        clients=("LND-bm:s=cap/10", "CLN"),
        endpoint_filter=("Poor", "Well"),
        params=ClientParams(lnd=LndParams(riskfactor=1e-9), eclair=EclairParams(age_range=(1.0, 2.0))),
    )
    p = tmp_path / f"c{suffix}"
    config.write_config(cfg.to_dict(), p)
    assert ExperimentConfig.from_dict(config.read_config(p)) == cfg


def test_defaults_survive_null_dropping(tmp_path):
    cfg = ExperimentConfig()
    p = tmp_path / "c.toml"
    config.write_config(cfg.to_dict(), p)
    assert "endpoint_filter" not in p.read_text()
    assert ExperimentConfig.from_dict(config.read_config(p)) == cfg


def test_nested_unknown_key(tmp_path):
    with pytest.raises(ConfigError, match="params.lnd"):
        ExperimentConfig.from_dict({"params": {"lnd": {"riskfactr": 1}}})


def test_nested_bad_value():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"params": {"lnd": {"prob_model": "magic"}}})


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        config.read_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 3")
    with pytest.raises(ConfigError):
        config.read_config(bad)
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        config.read_config(bad)


def test_synth_params_roundtrip():
    p = SynthParams(mean_degree=4.0, cap_log10_range=(4.0, 6.0))
    assert SynthParams.from_dict(p.to_dict()) == p
    assert config.from_dict(SynthParams, config.to_dict(p)) == p
    with pytest.raises(ValueError):
        SynthParams.from_dict({"hubs": 3})
