"""Per-player state machines for the crash- and rational-fault-tolerant protocols.

A player consumes delivered messages and epoch ticks and returns the messages
it wants broadcast. Players share nothing; the harness moves bytes between them.
"""
from __future__ import annotations

import enum
import random
from dataclasses import dataclass
from typing import Callable

from . import adversary
from .chain import (
    ChainError, GenesisBlock, Ledger, Metablock, MetaChainState, PlayerChain, Variant, Vote,
    apply_payload, build_metablock, extend_player_chain, finalize, find_double_spend,
    genesis_chain_digest, genesis_view_digest, link_chain_digest, make_vote, short,
)
from .crypto import (
    CryptoError, FunctionKey, PlayerKeys, fe_decrypt, fe_verify_ct, fe_verify_key, hash_bytes, pke_decrypt,
)
from .encoding import u64
from .views import Payload, PayloadView, Transaction, ViewTag


class Behavior(str, enum.Enum):
    HONEST = "honest"
    CRASH = "crash"
    RATIONAL = "rational"
    BYZANTINE_DEMO = "byzantine-demo"


def elect_leader(e: int, m: int) -> int:
    """L_e = H*(e) mod m over the 8-byte big-endian epoch."""
    if m < 1:
        raise ValueError("need at least one head player")
    return int.from_bytes(hash_bytes(u64(e)), "big") % m


@dataclass
class EpochClock:
    rounds_per_epoch: int
    round: int = 0

    @property
    def epoch(self) -> int:
        return self.round // self.rounds_per_epoch

    @property
    def at_epoch_start(self) -> bool:
        return self.round % self.rounds_per_epoch == 0

    def tick(self) -> None:
        self.round += 1


@dataclass(frozen=True)
class ProtocolOptions:
    verkey: bool = True
    echo: bool = True


@dataclass(frozen=True)
class TraceEvent:
    epoch: int
    event: str
    player: int
    digest: bytes | None
    detail: str = ""

    def line(self) -> str:
        d = short(self.digest) if self.digest else "-"
        return f"{self.epoch} | {self.event} | {self.player} | {d} | {self.detail}"


class Player:
    def __init__(
        self,
        pid: int,
        keys: PlayerKeys,
        genesis: GenesisBlock,
        genesis_votes=(),
        behavior: Behavior = Behavior.HONEST,
        crash_round: int | None = None,
        options: ProtocolOptions = ProtocolOptions(),
        rng: random.Random | None = None,
        adv: "adversary.RationalConfig | None" = None,
        sink: Callable[[TraceEvent], None] | None = None,
    ):
        self.id = pid
        self.keys = keys
        self.genesis = genesis
        self.variant = genesis.variant
        self.family = genesis.family
        self.n, self.m = genesis.n, genesis.m
        self.behavior = Behavior(behavior)
        self.crash_round = crash_round
        self.options = options
        self.rng = rng or random.Random(pid)
        self.adv = adv
        self._sink = sink
        self.function = genesis.function_for(pid)
        self.is_head = genesis.psi.is_top(genesis.credentials[pid])
        self.state = MetaChainState(genesis, genesis_votes)
        self.chain = PlayerChain(pid, genesis.digest)
        self.epoch = 0
        self.pending: list[Transaction] = []
        self.late_pending: list[Transaction] = []
        self.seen: set[bytes] = set()
        self.latch: dict[int, bytes] = {}
        self.views: dict[bytes, PayloadView | None] = {}
        self.keys_held: dict[bytes, FunctionKey] = {}
        self.verdicts: dict[bytes, str | None] = {}
        self.votes_cast: list[Vote] = []
        self.leaks: list = []
        self.leaked: set[bytes] = set()
        self.drops: list[str] = []
        # function ids listed per finalized block, as this player recorded them
        self.hierarchy: dict[bytes, tuple[str, ...]] = {}
        self._orphans: dict[bytes, list[Metablock]] = {}
        root = self.state.root
        self._ledger: dict[bytes, Ledger] = {root: Ledger(dict(genesis.balances))}
        self._included: dict[bytes, frozenset[Transaction]] = {root: frozenset()}
        self._chain_digest: dict[tuple[bytes, str], bytes] = {}

    # bookkeeping -------------------------------------------------------------
    def __repr__(self) -> str:
        return f"Player({self.id}, {self.behavior.value}, head={self.is_head})"

    @property
    def honest(self) -> bool:
        return self.behavior is Behavior.HONEST

    def alive(self, r: int) -> bool:
        return self.crash_round is None or r < self.crash_round

    def emit(self, event: str, digest: bytes | None = None, detail: str = "", epoch: int | None = None) -> None:
        if self._sink is not None:
            self._sink(TraceEvent(self.epoch if epoch is None else epoch, event, self.id, digest, detail))

    def receive_payload(self, txs) -> None:
        if self.is_head:
            self.pending.extend(txs)

    # branch-local knowledge (head players see full payloads) ----------------------
    def payload_of(self, d: bytes) -> tuple[Transaction, ...] | None:
        if d == self.state.root:
            return ()
        v = self.views.get(d)
        if v is None or v.tag is not ViewTag.FULL:
            return None
        return v.value.txs

    def ledger(self, d: bytes) -> Ledger:
        if d not in self._ledger:
            parent = self.state.parent[d]
            self._ledger[d] = apply_payload(self.ledger(parent), self.payload_of(d) or ())
        return self._ledger[d]

    def included(self, d: bytes) -> frozenset[Transaction]:
        if d not in self._included:
            parent = self.state.parent[d]
            self._included[d] = self.included(parent) | frozenset(self.payload_of(d) or ())
        return self._included[d]

    def _view_digest(self, d: bytes, fid: str) -> bytes:
        if d == self.state.root:
            return genesis_view_digest(d)
        txs = self.payload_of(d)
        if txs is None:
            return hash_bytes(b"unknown" + d)
        return self.family.apply(fid, Payload(txs)).digest()

    def chain_digest(self, d: bytes, fid: str) -> bytes:
        """H*(chain_i) for a player with view ``fid`` along the branch ending at ``d``."""
        key = (d, fid)
        if key not in self._chain_digest:
            if d == self.state.root:
                out = genesis_chain_digest(d)
            else:
                p = self.state.parent[d]
                out = link_chain_digest(self.chain_digest(p, fid), self._view_digest(p, fid), self._view_digest(d, fid))
            self._chain_digest[key] = out
        return self._chain_digest[key]

    def chain_digests(self, parent: bytes) -> list[bytes]:
        return [self.chain_digest(parent, self.genesis.function_for(i).id) for i in range(self.n)]

    def next_payload(self, parent: bytes) -> Payload:
        inc = self.included(parent)
        return Payload(tuple(tx for tx in self.pending if tx not in inc))

    # epoch start ---------------------------------------------------------------------
    def on_epoch_start(self, e: int, r: int) -> list:
        self.epoch = e
        if not self.alive(r):
            return []
        out: list = []
        if self.behavior is Behavior.BYZANTINE_DEMO:
            out += adversary.attack1_broadcast_key(self, e)
        if self.is_head and elect_leader(e, self.m) == self.id:
            if self.behavior is Behavior.RATIONAL:
                blocks = adversary.rational_proposal_strategy(self, e)
            else:
                blocks = [self.honest_proposal(e)]
            for b in blocks:
                kind = adversary.classify_block(self, b) if self.behavior is Behavior.RATIONAL else "honest"
                self.emit("propose", b.digest, f"{kind} txs={len(self.payload_for_trace(b))}")
                self.seen.add(b.msg_id)
                self._accept_block(b, r)
                out.append(b)
        for m in out:
            self.seen.add(m.msg_id)
        return out

    def payload_for_trace(self, b: Metablock) -> tuple:
        return self.payload_of(b.digest) or ()

    def honest_proposal(self, e: int) -> Metablock:
        parent = self.state.longest_tip()
        return build_metablock(self.variant, self.keys, e, parent, self.next_payload(parent), self.genesis,
                               self.chain_digests(parent), self.rng)

    # message intake -----------------------------------------------------------------
    def receive(self, msg, r: int) -> list:
        """Handle one delivered message; returns messages to broadcast (echo first)."""
        if not self.alive(r):
            return []
        mid = msg.msg_id
        if mid in self.seen:
            return []
        self.seen.add(mid)
        out = [msg] if self.options.echo else []
        if isinstance(msg, Metablock):
            out += self.on_metablock(msg, r)
        elif isinstance(msg, Vote):
            out += self.on_vote(msg, r)
        elif isinstance(msg, adversary.KeyLeak):
            self.leaks.append(msg)
        return out

    def _drop(self, why: str, d: bytes | None = None) -> list:
        self.drops.append(why)
        self.emit("drop", d, why)
        return []

    def on_metablock(self, block: Metablock, r: int) -> list:
        if block.variant is not self.variant:
            return self._drop("variant mismatch", block.digest)
        if block.leader != elect_leader(block.epoch, self.m):
            return self._drop("not from epoch leader", block.digest)
        if not block.covers(self.n):
            return self._drop("entries do not cover all players", block.digest)
        if self.variant is Variant.RFT and not block.signatures_valid(self.genesis.directory.verify_keys[block.leader]):
            return self._drop("bad leader signature", block.digest)
        if not self.state.has(block.parent):
            self._orphans.setdefault(block.parent, []).append(block)
            return []
        if self.state.epoch_of[block.parent] >= block.epoch:
            return self._drop("parent epoch not smaller", block.digest)
        out = self._accept_block(block, r)
        for child in self._orphans.pop(block.digest, []):
            out += self.on_metablock(child, r)
        return out

    def _accept_block(self, block: Metablock, r: int) -> list:
        d = block.digest
        if self.state.has(d):
            return []
        newly = self.state.add_block(block)
        # a proposal doubles as its leader's vote
        implicit = Vote(block.leader, block.epoch, d, None if self.variant is Variant.CFT else True)
        newly += self.state.add_vote(implicit)
        self._open(block)
        out: list = []
        if block.leader != self.id and block.epoch == self.epoch and block.epoch not in self.latch:
            self.latch[block.epoch] = d
            if self.state.extends_longest(block.parent):
                out += self._cast_vote(block)
        self._after_votes(newly, r)
        return out

    def _open(self, block: Metablock) -> None:
        d = block.digest
        entry = block.entry_for(self.id)
        pp = block.pp if block.pp is not None else block.ciphertext.pp
        try:
            key = FunctionKey.decode(pke_decrypt(self.keys.decryption, entry.key_envelope), pp)
            self.keys_held[d] = key
            self.views[d] = fe_decrypt(key, block.ciphertext, self.family)
        except (CryptoError, ValueError) as exc:
            self.views[d] = None
            self.verdicts[d] = f"cannot open: {exc}"

    def validate(self, block: Metablock) -> str | None:
        """Vote-time assertions; returns the first failed one or None."""
        d = block.digest
        if d in self.verdicts and self.verdicts[d] is not None:
            return self.verdicts[d]
        entry = block.entry_for(self.id)
        if entry.function_id != self.function.id:
            return f"listed function {entry.function_id} != {self.function.id}"
        key = self.keys_held.get(d)
        if key is None:
            return "no key"
        if self.options.verkey and not fe_verify_key(block.pp, self.function, key):
            return f"key does not verify for {self.function.id}"
        if not fe_verify_ct(block.pp, block.ciphertext):
            return "ciphertext not bound to pp"
        if self.is_head:
            view = self.views.get(d)
            if view is None or view.tag is not ViewTag.FULL:
                return "head player did not receive a full view"
            why = find_double_spend(self.ledger(block.parent), view.value.txs)
            if why:
                return f"double spending: {why}"
        return None

    def _cast_vote(self, block: Metablock) -> list:
        if self.behavior is Behavior.RATIONAL:
            out = adversary.rational_vote_policy(self, block)
            self.emit("abstain", block.digest)
            return out
        if self.variant is Variant.CFT:
            vote = make_vote(self.keys, block.epoch, block.digest, None, signed=False)
            detail = ""
        else:
            why = self.validate(block)
            self.verdicts[block.digest] = why
            vote = make_vote(self.keys, block.epoch, block.digest, why is None, signed=True)
            detail = "yes" if why is None else f"no ({why})"
        self.votes_cast.append(vote)
        self.seen.add(vote.msg_id)
        self.emit("vote", block.digest, detail)
        self._after_votes(self.state.add_vote(vote), None)
        return [vote]

    def on_vote(self, vote: Vote, r: int) -> list:
        if self.variant is Variant.RFT:
            if vote.sig is None or not 0 <= vote.voter < self.n:
                return self._drop("unsigned vote", vote.block)
            if not self.genesis.directory.verify_keys[vote.voter].verify(vote.statement(), vote.sig):
                return self._drop("bad vote signature", vote.block)
        self._after_votes(self.state.add_vote(vote), r)
        return []

    def _after_votes(self, newly: list[bytes], r) -> None:
        for d in newly:
            self.emit("notarize", d, f"e={self.state.epoch_of[d]}")
        if not newly:
            return
        new_final = finalize(self.state)
        if new_final:
            blocks = [self.state.blocks[d] for d in new_final]
            extend_player_chain(self.chain, blocks, self.keys.decryption, self.genesis, verify=self.options.verkey and self.variant is Variant.RFT)
            for b in blocks:
                self.hierarchy[b.digest] = tuple(e.function_id for e in b.entries)
            self.emit("finalize", new_final[-1], "e=" + ",".join(str(b.epoch) for b in blocks))
