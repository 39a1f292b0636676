import json

import pytest

from echo_pathways.config import ConfigError, ScenarioConfig, parse_override


def test_defaults_match_reference_settings():
    cfg = ScenarioConfig()
    assert cfg.opinion_tol == 1e-7
    assert cfg.quiet_steps == 60
    assert cfg.max_steps == 20_000
    assert cfg.n == 500 and cfg.k_o == 15
    assert cfg.k_R == 10


@pytest.mark.parametrize("key,value", [
    ("n", 1), ("k_o", 0), ("k_o", 600), ("epsilon", 0), ("epsilon", 2.5),
    ("alpha", -0.1), ("alpha", 1.5), ("q", 2), ("p", -1), ("k_R", 0),
    ("k_h", -1), ("strategy", "viral"), ("max_steps", 0), ("quiet_steps", 0),
    ("opinion_tol", 0.0), ("baseline_formula", "guess"),
])
def test_invalid_values_name_the_key(key, value):
    with pytest.raises(ConfigError) as excinfo:
        ScenarioConfig(epsilon=0.45).with_overrides({key: value})
    assert excinfo.value.key == key


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        ScenarioConfig(epsilon=0.45).with_overrides({"momentum": 1})


def test_json_round_trip(tmp_path):
    cfg = ScenarioConfig(epsilon=0.45, alpha=0.005, strategy="opinion", k_h=6, seed=99)
    cfg.save(tmp_path / "c.json")
    assert ScenarioConfig.load(tmp_path / "c.json") == cfg
    data = json.loads((tmp_path / "c.json").read_text())
    assert data["schema_version"] == 1


def test_epsilon_required_in_documents(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"n": 10, "k_o": 3}))
    with pytest.raises(ConfigError) as excinfo:
        ScenarioConfig.load(tmp_path / "c.json")
    assert excinfo.value.key == "epsilon"


def test_parse_override_coercion():
    assert parse_override("alpha=0.05") == ("alpha", 0.05)
    assert parse_override("n=200") == ("n", 200)
    assert parse_override("strategy=opinion") == ("strategy", "opinion")
    with pytest.raises(ConfigError):
        parse_override("alpha")
