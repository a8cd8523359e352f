from fractions import Fraction

import pytest

from sightsteeple.adversary import (
    RATIONAL, AdversaryConfigError, RationalConfig, check_fault_bound, enumerate_strategies, revenue, utility,
)
from sightsteeple.chain import Ledger, Variant
from sightsteeple.config import AdversarySection, ScenarioConfig
from sightsteeple.simulation import World, dominance_for_config
from sightsteeple.views import IDENTITY, Transaction, default_family

from helpers import Net

TXS = [Transaction("alice", "bob", 1, i) for i in range(4)]


def test_config_validation():
    with pytest.raises(AdversaryConfigError):
        RationalConfig(beta1=Fraction(1, 2), beta2=Fraction(1, 3))
    with pytest.raises(AdversaryConfigError):
        RationalConfig(block_reward=-1)
    with pytest.raises(AdversaryConfigError):
        RationalConfig(wrong_key_victim=1)


def test_fault_bounds():
    check_fault_bound(Variant.CFT, 7, {4, 5, 6}, 2)
    with pytest.raises(AdversaryConfigError):
        check_fault_bound(Variant.CFT, 6, {3, 4, 5}, 2)
    check_fault_bound(Variant.RFT, 7, {5, 6}, 2)
    with pytest.raises(AdversaryConfigError):
        check_fault_bound(Variant.RFT, 6, {4, 5}, 2)
    with pytest.raises(AdversaryConfigError):
        check_fault_bound(Variant.RFT, 10, {0, 1}, 2)


def test_revenue_examples():
    adv = RationalConfig({0}, block_reward=2, fee_per_tx=1, max_fee_txs=3)
    assert revenue(TXS, adv, 0) == Fraction(5, 5)
    assert revenue(TXS[:1], adv, 0) == Fraction(3, 5)
    assert revenue(TXS, adv, 1) == 0
    assert revenue(TXS, RationalConfig({0}), 0) == 0


def test_double_spend_gain_only_for_own_overspend():
    adv = RationalConfig({0}, block_reward=1, double_spend_gain=1, accounts={"mallory"})
    led = Ledger({"mallory": 5, "alice": 5})
    assert revenue([Transaction("mallory", "alice", 9, 0)], adv, 0, led) == 1
    assert revenue([Transaction("mallory", "alice", 4, 0)], adv, 0, led) == Fraction(1, 2)
    assert revenue([Transaction("alice", "bob", 9, 0)], adv, 0, led) == Fraction(1, 2)


def test_utility_examples():
    fam = default_family()
    adv = RationalConfig({5, 6}, beta1=Fraction(1, 10), beta2=Fraction(9, 10))
    assert utility(None, True, adv, fam) == 0
    net = Net("rft")
    b = net.block(net.genesis.digest, 1)
    assert utility(b, False, adv, fam, {5: IDENTITY, 6: IDENTITY}, Fraction(1)) == 0
    assert utility(b, True, adv, fam, {5: IDENTITY, 6: IDENTITY}, Fraction(1)) == 1
    # token-sum sits one step above null out of two
    assert utility(b, True, adv, fam, {5: "token-sum", 6: "null"}, Fraction(0)) == Fraction(9, 10) * Fraction(1, 4)
    with pytest.raises(ValueError):
        utility(b, True, adv, fam, {}, Fraction(2))


def test_strategy_set_contents():
    net = Net("rft", n=7, m=3)
    adv = RationalConfig({0, 6})
    names = [s.name for s in enumerate_strategies(net.genesis, adv, 0)]
    assert {"abstain", "honest", RATIONAL, "upgrade[0]", "upgrade[6]"} <= set(names)
    assert any(n.startswith("wrong-key[1->") for n in names)
    assert any(n.startswith("wrong-listed[5->") for n in names)
    assert "double-spend" not in names
    assert len(names) == len(set(names))


RATIONAL_CFG = ScenarioConfig(
    name="rat", variant="rft", n=7, m=3, epochs=12,
    adversary=AdversarySection(model="rational", players=(0, 6), block_reward=1, fee_per_tx=1, max_fee_txs=5))


def test_rational_run_upgrades_keys_and_never_votes_no():
    w = World(RATIONAL_CFG).run()
    rows = w.utilities()
    assert rows and all(r["notarized"] for r in rows)
    assert all(Fraction(r["utility"]) > 0 for r in rows)
    for p in w.players:
        if p.id in (0, 6):
            assert not p.votes_cast
    assert not w.consistency_errors


def test_dominance_holds():
    res = dominance_for_config(RATIONAL_CFG)
    assert res.holds, res.detail
    best = res.by_name(RATIONAL)
    assert best.notarized and best.utility > res.by_name("abstain").utility
    assert best.utility >= res.by_name("honest").utility
    for o in res.outcomes:
        if o.strategy.startswith(("wrong-key", "wrong-listed")):
            assert not o.notarized, o


def test_double_proposal_adds_second_block():
    cfg = ScenarioConfig(name="dp", variant="rft", n=7, m=3, epochs=8, adversary=AdversarySection(
        model="rational", players=(0, 6), block_reward=1, fee_per_tx=1, max_fee_txs=10, double_proposal=True))
    w = World(cfg).run()
    by_epoch = {}
    for pr in w.proposals:
        by_epoch.setdefault(pr.epoch, []).append(pr)
    doubled = [e for e, prs in by_epoch.items() if len(prs) == 2]
    assert doubled
    e = doubled[0]
    # honest players latch the first proposal, so at most one of the pair is notarized
    assert sum(w.notarized_anywhere(pr.digest) for pr in by_epoch[e]) <= 1
    assert not w.consistency_errors


def test_fork_to_ancestor_keeps_consistency():
    cfg = ScenarioConfig(name="fork", variant="rft", n=7, m=3, epochs=12, adversary=AdversarySection(
        model="rational", players=(0, 6), block_reward=1, fork_to_ancestor=True))
    w = World(cfg).run()
    assert not w.consistency_errors
    forks = [pr for pr in w.proposals if pr.leader == 0]
    assert forks and not any(w.notarized_anywhere(pr.digest) for pr in forks[1:])
