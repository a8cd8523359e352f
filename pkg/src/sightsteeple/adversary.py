"""Fault behaviors and the rational adversary's payoff.

The rational leader's default proposal upgrades every adversary envelope to
the identity key. ``check_dominance`` replays a finite strategy set for one
epoch against fresh player instances and compares exact utilities.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Iterable, Mapping, Sequence

from . import encoding as enc
from .chain import (
    Ledger, Message, Metablock, Variant, Vote, build_metablock, find_double_spend, threshold_met,
)
from .crypto import CryptoError, FunctionKey, pke_decrypt
from .views import Payload, Transaction, ViewFamily

if TYPE_CHECKING:  # pragma: no cover
    from .consensus import Player


class AdversaryConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RationalConfig:
    adversary: frozenset[int] = frozenset()
    beta1: Fraction = Fraction(1, 2)
    beta2: Fraction = Fraction(1, 2)
    block_reward: int = 0
    fee_per_tx: int = 0
    max_fee_txs: int = 0
    double_spend_gain: int = 0
    accounts: frozenset[str] = frozenset()
    upgrade: bool = True
    fork_to_ancestor: bool = False
    double_proposal: bool = False
    wrong_key_victim: int | None = None
    wrong_key_function: str | None = None
    leak_epoch: int = 1

    def __post_init__(self):
        object.__setattr__(self, "adversary", frozenset(self.adversary))
        object.__setattr__(self, "accounts", frozenset(self.accounts))
        b1, b2 = Fraction(self.beta1), Fraction(self.beta2)
        object.__setattr__(self, "beta1", b1)
        object.__setattr__(self, "beta2", b2)
        if b1 + b2 != 1:
            raise AdversaryConfigError(f"beta1 + beta2 must be 1, got {b1} + {b2}")
        if not (0 <= b1 <= 1):
            raise AdversaryConfigError("beta1 must lie in [0, 1]")
        for name in ("block_reward", "fee_per_tx", "max_fee_txs", "double_spend_gain"):
            if getattr(self, name) < 0:
                raise AdversaryConfigError(f"{name} must be >= 0")
        if (self.wrong_key_victim is None) != (self.wrong_key_function is None):
            raise AdversaryConfigError("wrong_key_victim and wrong_key_function go together")

    @property
    def max_revenue(self) -> int:
        return self.block_reward + self.fee_per_tx * self.max_fee_txs + self.double_spend_gain


def check_fault_bound(variant: Variant, n: int, faulty: Iterable[int], m: int) -> None:
    """Reject adversary sets outside the tolerated bound or covering every head player."""
    faulty = set(faulty)
    k = len(faulty)
    if variant is Variant.CFT and not 2 * k < n:
        raise AdversaryConfigError(f"CFT needs 2*|A| < n, got |A|={k}, n={n}")
    if variant is Variant.RFT and not 3 * k < n:
        raise AdversaryConfigError(f"RFT needs 3*|A| < n, got |A|={k}, n={n}")
    if set(range(m)) <= faulty:
        raise AdversaryConfigError("at least one head player must be honest")


# -- payoff -------------------------------------------------------------------------

def revenue(txs: Payload | Sequence[Transaction], adv: RationalConfig, proposer: int,
            ledger: Ledger | None = None) -> Fraction:
    """Normalized revenue of a payload for the adversary, in [0, 1]."""
    txs = tuple(txs)
    top = adv.max_revenue
    if top == 0 or proposer not in adv.adversary:
        return Fraction(0)
    total = adv.block_reward + adv.fee_per_tx * min(len(txs), adv.max_fee_txs)
    if adv.double_spend_gain and ledger is not None:
        own = [tx for tx in txs if tx.sender in adv.accounts]
        if own and find_double_spend(ledger, txs) is not None and find_double_spend(
                ledger, [tx for tx in txs if tx.sender not in adv.accounts]) is None:
            total += adv.double_spend_gain
    return Fraction(total, top)


def effective_functions(block: Metablock, keys: Mapping[int, object]) -> dict[int, str]:
    """Function id each adversary player actually received, read from its envelope."""
    pp = block.pp if block.pp is not None else block.ciphertext.pp
    out = {}
    for i, dk in keys.items():
        entry = block.entry_for(i)
        try:
            out[i] = FunctionKey.decode(pke_decrypt(dk, entry.key_envelope), pp).function_id
        except (CryptoError, ValueError):
            out[i] = None
    return out


def utility(block: Metablock | None, notarized: bool, adv: RationalConfig, family: ViewFamily,
            received: Mapping[int, str | None] | None = None, tau: Fraction = Fraction(0)) -> Fraction:
    """Weighted revenue plus the mean normalized view height of adversary keys; 0 if unnotarized."""
    if block is None or not notarized:
        return Fraction(0)
    tau = Fraction(tau)
    if not 0 <= tau <= 1:
        raise ValueError(f"revenue {tau} outside [0, 1]")
    if not adv.adversary:
        return adv.beta1 * tau
    received = received or {}
    full = family.dist(family.null, family.identity)
    heights = Fraction(0)
    for i in adv.adversary:
        fid = received.get(i)
        if fid is not None:
            heights += Fraction(family.dist(family.null, family[fid]), full)
    return adv.beta1 * tau + adv.beta2 * heights / len(adv.adversary)


# -- behaviors driven by the player state machine ------------------------------------

@dataclass(frozen=True, eq=False)
class KeyLeak(Message):
    sender: int
    epoch: int
    block: bytes
    key: bytes

    def encode(self) -> bytes:
        return b"LEAK" + enc.u32(self.sender) + enc.u64(self.epoch) + enc.blob(self.block) + enc.blob(self.key)


def attack1_broadcast_key(player: "Player", e: int) -> list[KeyLeak]:
    """Leak this player's function key for the oldest finalized block not yet leaked."""
    adv = player.adv or RationalConfig()
    for d in player.state.finalized[1:]:
        epoch = player.state.epoch_of[d]
        if epoch < adv.leak_epoch or epoch >= e or d in player.leaked or d not in player.keys_held:
            continue
        player.leaked.add(d)
        player.emit("leak", d, f"key={player.keys_held[d].function_id} block_epoch={epoch}")
        return [KeyLeak(player.id, epoch, d, player.keys_held[d].encode())]
    return []


def _key_plan(player: "Player", adv: RationalConfig) -> dict[int, str]:
    plan = {}
    if adv.upgrade:
        top = player.family.identity.id
        plan.update({i: top for i in adv.adversary})
    if adv.wrong_key_victim is not None:
        plan[adv.wrong_key_victim] = adv.wrong_key_function
    return plan


def rational_proposal_strategy(player: "Player", e: int) -> list[Metablock]:
    """The rational leader's proposals for epoch ``e`` (normally exactly one)."""
    adv = player.adv or RationalConfig(frozenset({player.id}))
    st = player.state
    parent = st.longest_tip()
    if adv.fork_to_ancestor and parent != st.root:
        parent = st.parent[parent]
    plan = _key_plan(player, adv)
    txs = player.next_payload(parent)
    digests = player.chain_digests(parent)
    out = [build_metablock(Variant.RFT, player.keys, e, parent, txs, player.genesis, digests, player.rng,
                           key_functions=plan)]
    late = getattr(player, "late_pending", [])
    if adv.double_proposal and late:
        seen = {(tx.sender, tx.nonce) for tx in txs}
        txs2 = Payload(txs.txs + tuple(tx for tx in late if (tx.sender, tx.nonce) not in seen))
        led = player.ledger(parent)
        if revenue(txs2, adv, player.id, led) > revenue(txs, adv, player.id, led):
            out.append(build_metablock(Variant.RFT, player.keys, e, parent, txs2, player.genesis, digests,
                                       player.rng, key_functions=plan))
        player.late_pending = []
    return out


def rational_vote_policy(player: "Player", block: Metablock) -> list:
    """Rational players never vote no and gain nothing by voting yes."""
    return []


def classify_block(player: "Player", block: Metablock) -> str:
    adv = player.adv or RationalConfig()
    if adv.wrong_key_victim is not None:
        return "wrong-key"
    return "rational" if adv.upgrade and adv.adversary else "honest"


def attack2_wrong_key_scenario(config, verkey: bool = False):
    """Return ``config`` rigged so a rational leader hands a decrement key to an honest head player."""
    from .config import attack2_config
    return attack2_config(config, verkey)


# -- one-epoch dominance check ---------------------------------------------------------

@dataclass(frozen=True)
class Strategy:
    name: str
    abstain: bool = False
    key_functions: Mapping[int, str] = field(default_factory=dict)
    listed_functions: Mapping[int, str] = field(default_factory=dict)
    extra_txs: tuple[Transaction, ...] = ()


@dataclass(frozen=True)
class StrategyOutcome:
    strategy: str
    notarized: bool
    yes: int
    no: int
    tau: Fraction
    utility: Fraction


RATIONAL = "rational-metablock"


def enumerate_strategies(genesis, adv: RationalConfig, leader: int,
                         double_spend: Transaction | None = None) -> list[Strategy]:
    """Honest block, adversary upgrade subsets, every wrong key or wrong listing for an honest
    player, an optional double-spending payload, and abstention."""
    family = genesis.family
    top = family.identity.id
    A = sorted(adv.adversary)
    out = [Strategy("abstain", abstain=True)]
    for k in range(len(A) + 1):
        for S in itertools.combinations(A, k):
            name = "honest" if not S else (RATIONAL if len(S) == len(A) else f"upgrade{list(S)}")
            out.append(Strategy(name, key_functions={i: top for i in S}))
    full = {i: top for i in A}
    for i in range(genesis.n):
        if i in adv.adversary:
            continue
        own = genesis.function_for(i).id
        for f in family.functions.values():
            if f.id == own:
                continue
            out.append(Strategy(f"wrong-key[{i}->{f.id}]", key_functions={**full, i: f.id}))
            out.append(Strategy(f"wrong-listed[{i}->{f.id}]", key_functions=full, listed_functions={i: f.id}))
    if double_spend is not None:
        out.append(Strategy("double-spend", key_functions=full, extra_txs=(double_spend,)))
    return out


def play_strategy(players: Sequence["Player"], leader: int, strategy: Strategy, e: int, round_: int,
                  adv: RationalConfig) -> StrategyOutcome:
    """Deliver the leader's block once to every other player and tally the votes it draws."""
    lp = players[leader]
    genesis = lp.genesis
    if strategy.abstain:
        return StrategyOutcome(strategy.name, False, 0, 0, Fraction(0), Fraction(0))
    for p in players:
        p.epoch = e
    parent = lp.state.longest_tip()
    base = lp.next_payload(parent)
    txs = Payload(base.txs + strategy.extra_txs)
    block = build_metablock(Variant.RFT, lp.keys, e, parent, txs, genesis, lp.chain_digests(parent), lp.rng,
                            key_functions=strategy.key_functions, listed_functions=strategy.listed_functions)
    yes, no = {leader}, set()
    for p in players:
        if p.id == leader:
            continue
        for msg in p.receive(block, round_):
            if isinstance(msg, Vote) and msg.voter == p.id and msg.block == block.digest:
                (yes if msg.verdict is not False else no).add(p.id)
    notarized = threshold_met(Variant.RFT, genesis.n, len(yes), len(no))
    tau = revenue(txs, adv, leader, lp.ledger(parent))
    received = effective_functions(block, {i: players[i].keys.decryption for i in adv.adversary})
    u = utility(block, notarized, adv, genesis.family, received, tau)
    return StrategyOutcome(strategy.name, notarized, len(yes), len(no), tau, u)


@dataclass
class DominanceResult:
    outcomes: list[StrategyOutcome]
    holds: bool
    detail: str

    def by_name(self, name: str) -> StrategyOutcome:
        return next(o for o in self.outcomes if o.strategy == name)


def check_dominance(make_players: Callable[[], Sequence["Player"]], leader: int, e: int, round_: int,
                    adv: RationalConfig, double_spend: Transaction | None = None) -> DominanceResult:
    """Play every enumerated strategy against a fresh world and compare utilities exactly."""
    genesis = make_players()[0].genesis
    outcomes = [play_strategy(make_players(), leader, s, e, round_, adv)
                for s in enumerate_strategies(genesis, adv, leader, double_spend)]
    best = next(o for o in outcomes if o.strategy == RATIONAL)
    beaten = [o for o in outcomes if o.utility > best.utility]
    family = genesis.family
    needs_strict = any(genesis.function_for(i).id != family.null.id for i in adv.adversary)
    abstain = next(o for o in outcomes if o.strategy == "abstain")
    strict_ok = not needs_strict or best.utility > abstain.utility
    holds = not beaten and strict_ok
    if beaten:
        detail = "beaten by " + ", ".join(f"{o.strategy}={o.utility}" for o in beaten)
    elif not strict_ok:
        detail = "not strictly above abstain"
    else:
        detail = f"rational utility {best.utility} maximal over {len(outcomes)} strategies"
    return DominanceResult(outcomes, holds, detail)
