from pathlib import Path

import pytest

from sightsteeple.config import (
    ConfigError, ScenarioConfig, attack1_config, attack2_config, from_dict, from_json, load,
)
from sightsteeple.consensus import elect_leader

SCENARIOS = Path(__file__).resolve().parents[1] / "src" / "sightsteeple" / "scenarios"


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.stem)
def test_bundled_scenarios_load(path):
    cfg = load(path)
    assert cfg.name == path.stem
    assert from_json(cfg.canonical_json()) == cfg


@pytest.mark.parametrize("data, where", [
    ({"variant": "pbft"}, "variant"),
    ({"n": 4, "m": 5}, "m"),
    ({"epochs": 0}, "epochs"),
    ({"views": ["sum-of-squares"]}, "views"),
    ({"network": {"delta": 0}}, "network.delta"),
    ({"network": {"policy": "random"}}, "network.policy"),
    ({"network": {"policy": "exhaustive"}, "n": 5}, "network.policy"),
    ({"network": {"speed": 3}}, "network.speed"),
    ({"colour": "red"}, "colour"),
    ({"adversary": {"model": "evil"}}, "adversary.model"),
    ({"adversary": {"model": "crash", "players": [1], "crash_rounds": []}}, "adversary.crash_rounds"),
    ({"adversary": {"model": "rational", "players": [3]}}, "adversary.model"),
    ({"variant": "rft", "n": 6, "adversary": {"model": "rational", "players": [4, 5]}}, "adversary"),
    ({"variant": "rft", "adversary": {"model": "rational", "players": [3], "beta1": "1/3"}}, "adversary"),
    ({"variant": "rft", "adversary": {"model": "rational", "players": [3], "beta1": "x"}}, "adversary.beta1"),
    ({"workload": {"accounts": 1}}, "workload.accounts"),
    ({"network": 3}, "network"),
])
def test_invalid_configs_name_the_field(data, where):
    with pytest.raises(ConfigError) as exc:
        from_dict(data)
    assert exc.value.where == where


def test_bad_toml(tmp_path):
    p = tmp_path / "x.toml"
    p.write_text("n = = 3")
    with pytest.raises(ConfigError, match="invalid TOML"):
        load(p)


def test_views_assignment():
    cfg = ScenarioConfig(n=6, m=2, views=("token-sum", "null"))
    assert [cfg.view_of(i) for i in range(6)] == ["identity", "identity", "token-sum", "null", "token-sum", "null"]


def test_attack_builders():
    a1 = attack1_config()
    assert a1.adversary.model == "byzantine-demo" and a1.view_of(3) == "null"
    assert attack1_config(False).adversary.model == "none"
    a2 = attack2_config()
    adv = a2.adversary
    assert a2.n == 7 and a2.m == 3 and a2.family.decrement and not adv.verkey
    attacker = adv.players[0]
    assert attacker < a2.m and adv.wrong_key_victim < a2.m and adv.wrong_key_victim != attacker
    e1 = next(e for e in range(1, 100) if elect_leader(e, 3) == attacker)
    assert e1 == 1
    assert attack2_config(verkey=True).adversary.verkey
