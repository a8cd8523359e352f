"""Metablocks, votes, the notarized metablock tree and per-player chains."""
from __future__ import annotations

import enum
import random
from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from . import encoding as enc
from .crypto import (
    CryptoError, DecryptionKey, EncryptionKey, FECipherText, FunctionKey, PKECipherText, PlayerKeys,
    PublicParams, Signature, VerifyKey, fe_decrypt, fe_encrypt, fe_keygen, fe_setup, fe_verify_key,
    hash_bytes, pke_decrypt, pke_encrypt,
)
from .views import Credential, Payload, PayloadView, Transaction, ViewAssignment, ViewFamily


class Variant(str, enum.Enum):
    CFT = "cft"
    RFT = "rft"


class ChainError(ValueError):
    pass


class NotHeadPlayer(ChainError):
    pass


def short(d: bytes) -> str:
    return d.hex()[:12]


class Message:
    """Anything sent over the network: canonical wire bytes plus an id."""

    def encode(self) -> bytes:  # pragma: no cover
        raise NotImplementedError

    @cached_property
    def wire(self) -> bytes:
        return self.encode()

    @cached_property
    def msg_id(self) -> bytes:
        return hash_bytes(self.wire)


@dataclass(frozen=True)
class Directory:
    """Public key directory published at setup."""
    verify_keys: tuple[VerifyKey, ...]
    encryption_keys: tuple[EncryptionKey, ...]

    @classmethod
    def from_keys(cls, keys: Sequence[PlayerKeys]) -> "Directory":
        return cls(tuple(k.verify_key for k in keys), tuple(k.encryption_key for k in keys))

    def encode(self) -> bytes:
        return enc.seq(vk.encode() for vk in self.verify_keys)


@dataclass(frozen=True, eq=False)
class GenesisBlock(Message):
    variant: Variant
    credentials: tuple[Credential, ...]
    family: ViewFamily
    psi: ViewAssignment
    directory: Directory
    balances: tuple[tuple[str, int], ...] = ()
    hash_id: str = "sha256"

    epoch = 0

    @property
    def n(self) -> int:
        return len(self.credentials)

    @cached_property
    def m(self) -> int:
        return sum(1 for c in self.credentials if self.psi.is_top(c))

    @property
    def schemes(self) -> tuple[str, ...]:
        if self.variant is Variant.CFT:
            return ("pke-sim", "afe-sim")
        return ("pke-sim", "vfe-sim", "sig-sim")

    def function_for(self, player: int):
        return self.psi.assign_view(self.credentials[player])

    def encode(self) -> bytes:
        return (b"GEN" + enc.u64(0) + enc.u32(self.n)
                + enc.seq(c.encode() for c in self.credentials)
                + enc.blob(self.family.digest()) + self.psi.encode()
                + enc.seq(enc.text(s) for s in self.schemes) + enc.text(self.hash_id)
                + self.directory.encode()
                + enc.seq(enc.text(a) + enc.u64(b) for a, b in self.balances))

    @cached_property
    def digest(self) -> bytes:
        return hash_bytes(self.wire)


@dataclass(frozen=True, eq=False)
class MetaEntry:
    player: int
    chain_digest: bytes
    function_id: str
    key_envelope: PKECipherText
    sig: Signature | None = None

    def body(self) -> bytes:
        return enc.u32(self.player) + enc.blob(self.chain_digest) + enc.text(self.function_id) + self.key_envelope.encode()

    def encode(self) -> bytes:
        return self.body() + (self.sig.encode() if self.sig else b"")


@dataclass(frozen=True, eq=False)
class Metablock(Message):
    epoch: int
    parent: bytes
    variant: Variant
    leader: int
    ciphertext: FECipherText
    entries: tuple[MetaEntry, ...]
    pp: PublicParams | None = None
    header_sig: Signature | None = None

    def header(self) -> bytes:
        out = b"MB" + enc.text(self.variant.value) + enc.u64(self.epoch) + enc.blob(self.parent) + enc.u32(self.leader)
        if self.variant is Variant.RFT:
            out += self.pp.encode()
        return out + self.ciphertext.encode()

    def encode(self) -> bytes:
        head = self.header() + (self.header_sig.encode() if self.header_sig else b"")
        return head + enc.seq(e.encode() for e in self.entries)

    @property
    def digest(self) -> bytes:
        return self.msg_id

    def entry_for(self, player: int) -> MetaEntry | None:
        if 0 <= player < len(self.entries) and self.entries[player].player == player:
            return self.entries[player]
        for e in self.entries:
            if e.player == player:
                return e
        return None

    def covers(self, n: int) -> bool:
        return sorted(e.player for e in self.entries) == list(range(n))

    def signatures_valid(self, vk: VerifyKey) -> bool:
        if self.header_sig is None or not vk.verify(self.header(), self.header_sig):
            return False
        return all(e.sig is not None and vk.verify(e.body(), e.sig) for e in self.entries)


@dataclass(frozen=True, eq=False)
class Vote(Message):
    voter: int
    epoch: int
    block: bytes
    verdict: bool | None = None  # None in CFT
    sig: Signature | None = None

    def statement(self) -> bytes:
        v = 2 if self.verdict is None else int(self.verdict)
        return b"VOTE" + enc.u32(self.voter) + enc.u64(self.epoch) + enc.blob(self.block) + enc.u8(v)

    def encode(self) -> bytes:
        return self.statement() + (self.sig.encode() if self.sig else b"")

    @property
    def key(self) -> tuple:
        return (self.voter, self.epoch, self.block, self.verdict)


def make_vote(keys: PlayerKeys, epoch: int, block: bytes, verdict: bool | None, signed: bool) -> Vote:
    v = Vote(keys.owner, epoch, block, verdict)
    if signed:
        v = Vote(keys.owner, epoch, block, verdict, keys.signing.sign(v.statement()))
    return v


# -- chain digests -------------------------------------------------------------

def genesis_view_digest(genesis_digest: bytes) -> bytes:
    return hash_bytes(b"genesis-view" + genesis_digest)


def genesis_chain_digest(genesis_digest: bytes) -> bytes:
    return hash_bytes(b"chain0" + genesis_digest)


def link_chain_digest(prev: bytes, parent_view_digest: bytes, view_digest: bytes) -> bytes:
    """H*(chain^e) from H*(chain^{e-1}) and the hash-linked view pair."""
    return hash_bytes(prev + parent_view_digest + view_digest)


# -- builders --------------------------------------------------------------------

def build_metablock(
    variant: Variant,
    leader: PlayerKeys,
    e: int,
    parent: bytes,
    txs: Payload,
    genesis: GenesisBlock,
    chain_digests: Sequence[bytes],
    rng: random.Random,
    key_functions: Mapping[int, str] | None = None,
    listed_functions: Mapping[int, str] | None = None,
) -> Metablock:
    """Assemble a metablock. ``key_functions`` overrides which function key a
    player's envelope actually holds; ``listed_functions`` overrides the
    function id written in the clear."""
    if not genesis.psi.is_top(genesis.credentials[leader.owner]):
        raise NotHeadPlayer(f"player {leader.owner} is not a head player")
    family = genesis.family
    key_functions = key_functions or {}
    listed_functions = listed_functions or {}
    inst = fe_setup(e, leader.signing, rng)
    ct = fe_encrypt(inst, txs, rng)
    rft = variant is Variant.RFT
    entries = []
    for i in range(genesis.n):
        fid = genesis.function_for(i).id
        key = fe_keygen(inst, family[key_functions.get(i, fid)], family)
        env = pke_encrypt(genesis.directory.encryption_keys[i], key.encode(), rng.randbytes(12))
        entry = MetaEntry(i, chain_digests[i], listed_functions.get(i, fid), env)
        if rft:
            entry = MetaEntry(entry.player, entry.chain_digest, entry.function_id, env, leader.signing.sign(entry.body()))
        entries.append(entry)
    block = Metablock(e, parent, variant, leader.owner, ct, tuple(entries), inst.pp if rft else None)
    if rft:
        block = Metablock(e, parent, variant, leader.owner, ct, block.entries, inst.pp, leader.signing.sign(block.header()))
    return block


def build_metablock_cft(leader, e, parent, txs, genesis, chain_digests, rng) -> Metablock:
    return build_metablock(Variant.CFT, leader, e, parent, txs, genesis, chain_digests, rng)


def build_metablock_rft_honest(leader, e, parent, txs, genesis, chain_digests, rng) -> Metablock:
    return build_metablock(Variant.RFT, leader, e, parent, txs, genesis, chain_digests, rng)


def build_metablock_rft_rational(leader, e, parent, txs, genesis, chain_digests, rng, adversary_set) -> Metablock:
    """Same as the honest block except every adversary envelope holds the identity key."""
    top = genesis.family.identity.id
    return build_metablock(Variant.RFT, leader, e, parent, txs, genesis, chain_digests, rng,
                           key_functions={i: top for i in adversary_set})


# -- notarization and finalization ------------------------------------------------

def threshold_met(variant: Variant, n: int, yes: int, no: int = 0) -> bool:
    if variant is Variant.CFT:
        return 2 * yes >= n
    return 3 * yes >= 2 * n and no == 0


class GenesisNotNotarized(ChainError):
    pass


class MetaChainState:
    """One player's view of the metablock tree."""

    def __init__(self, genesis: GenesisBlock, genesis_votes: Iterable[Vote] = ()):
        self.genesis = genesis
        self.variant = genesis.variant
        self.n = genesis.n
        g = genesis.digest
        voters = {v.voter for v in genesis_votes if v.block == g and v.epoch == 0}
        if not threshold_met(self.variant, self.n, len(voters)):
            raise GenesisNotNotarized(f"{len(voters)} genesis votes for n={self.n}")
        self.root = g
        self.blocks: dict[bytes, Metablock] = {}
        self.parent: dict[bytes, bytes | None] = {g: None}
        self.epoch_of: dict[bytes, int] = {g: 0}
        self.height: dict[bytes, int] = {g: 0}
        self.children: dict[bytes, list[bytes]] = defaultdict(list)
        self.yes: dict[bytes, set[int]] = defaultdict(set)
        self.no: dict[bytes, set[int]] = defaultdict(set)
        self._vote_keys: set[tuple] = set()
        self._buffered: dict[bytes, list[Vote]] = defaultdict(list)
        self.notarized: set[bytes] = {g}
        # blocks whose whole path from genesis is notarized -> chain length
        self.chain_len: dict[bytes, int] = {g: 0}
        self.finalized: list[bytes] = [g]
        self.conflicts: list[tuple[bytes, bytes]] = []

    # tree ------------------------------------------------------------------
    def has(self, d: bytes) -> bool:
        return d in self.parent

    def add_block(self, block: Metablock) -> list[bytes]:
        """Insert a block whose parent is known; returns newly notarized digests."""
        d = block.digest
        if d in self.parent:
            return []
        if block.parent not in self.parent:
            raise ChainError("parent unknown")
        if self.epoch_of[block.parent] >= block.epoch:
            raise ChainError("parent epoch must be smaller")
        self.blocks[d] = block
        self.parent[d] = block.parent
        self.epoch_of[d] = block.epoch
        self.height[d] = self.height[block.parent] + 1
        self.children[block.parent].append(d)
        newly = []
        for v in self._buffered.pop(d, []):
            newly += self._count(v)
        newly += self._check(d)
        return newly

    def add_vote(self, vote: Vote) -> list[bytes]:
        """Tally a vote; votes for unknown blocks are buffered. Returns newly notarized digests."""
        if vote.key in self._vote_keys:
            return []
        self._vote_keys.add(vote.key)
        if vote.block not in self.parent:
            self._buffered[vote.block].append(vote)
            return []
        return self._count(vote)

    def _count(self, vote: Vote) -> list[bytes]:
        d = vote.block
        if vote.epoch != self.epoch_of[d] or d == self.root:
            return []
        if vote.verdict is False:
            self.no[d].add(vote.voter)
        else:
            self.yes[d].add(vote.voter)
        return self._check(d)

    def votes_for(self, d: bytes) -> tuple[int, int]:
        return len(self.yes.get(d, ())), len(self.no.get(d, ()))

    def _check(self, d: bytes) -> list[bytes]:
        if d in self.notarized or d not in self.parent:
            return []
        yes, no = self.votes_for(d)
        if not threshold_met(self.variant, self.n, yes, no):
            return []
        self.notarized.add(d)
        self._extend_chain(d)
        return [d]

    def _extend_chain(self, d: bytes) -> None:
        p = self.parent[d]
        if p not in self.chain_len:
            return
        stack = [d]
        while stack:
            x = stack.pop()
            if x in self.chain_len or x not in self.notarized:
                continue
            self.chain_len[x] = self.chain_len[self.parent[x]] + 1
            stack.extend(self.children.get(x, ()))

    def is_notarized(self, d: bytes) -> bool:
        return d in self.notarized

    # queries ----------------------------------------------------------------
    def longest_length(self) -> int:
        return max(self.chain_len.values())

    def longest_tip(self) -> bytes:
        """Tip of a longest notarized chain; ties go to the smaller digest."""
        best = self.longest_length()
        return min(d for d, k in self.chain_len.items() if k == best)

    def extends_longest(self, parent: bytes) -> bool:
        return self.chain_len.get(parent, -1) == self.longest_length()

    def path(self, d: bytes) -> list[bytes]:
        out = []
        while d is not None:
            out.append(d)
            d = self.parent[d]
        return out[::-1]

    def is_ancestor(self, a: bytes, d: bytes) -> bool:
        ha = self.height[a]
        while d is not None and self.height[d] > ha:
            d = self.parent[d]
        return d == a

    def notarized_per_epoch(self) -> dict[int, list[bytes]]:
        out: dict[int, list[bytes]] = defaultdict(list)
        for d in self.notarized:
            if d != self.root:
                out[self.epoch_of[d]].append(d)
        return out

    @property
    def finalized_tip(self) -> bytes:
        return self.finalized[-1]

    def finalized_blocks(self) -> list[Metablock]:
        return [self.blocks[d] for d in self.finalized[1:]]


def finalize(state: MetaChainState) -> list[bytes]:
    """Apply the three-consecutive-epochs rule; returns newly finalized digests.

    Any notarized chain holding hash-linked blocks with epochs e, e+1, e+2
    makes the prefix up to the middle block final. The finalized tip only
    advances; a candidate that does not extend it is recorded as a conflict.
    """
    ep, par = state.epoch_of, state.parent
    cands = set()
    for c in state.chain_len:
        b = par[c]
        if b is None:
            continue
        a = par[b]
        # genesis never counts as one of the three
        if a is None or a == state.root:
            continue
        if ep[a] + 1 == ep[b] and ep[b] + 1 == ep[c]:
            cands.add(b)
    new: list[bytes] = []
    for b in sorted(cands, key=lambda x: (state.height[x], x)):
        tip = state.finalized[-1]
        if state.height[b] <= state.height[tip]:
            if not state.is_ancestor(b, tip):
                state.conflicts.append((tip, b))
            continue
        if not state.is_ancestor(tip, b):
            state.conflicts.append((tip, b))
            continue
        ext = state.path(b)[len(state.finalized):]
        state.finalized.extend(ext)
        new.extend(ext)
    return new


# -- double spending ---------------------------------------------------------------

@dataclass
class Ledger:
    """Account balances plus spent (sender, nonce) pairs along one branch."""
    balances: dict[str, int]
    spent: set[tuple[str, int]] = field(default_factory=set)

    def copy(self) -> "Ledger":
        return Ledger(dict(self.balances), set(self.spent))


def find_double_spend(ledger: Ledger, txs: Iterable[Transaction]) -> str | None:
    """First reason ``txs`` is invalid on top of ``ledger``, or None.

    Transactions apply in list order, so inflows earlier in the payload fund
    later outflows. Reusing a spent (sender, nonce) counts as a double spend.
    """
    bal = dict(ledger.balances)
    spent = set(ledger.spent)
    for tx in txs:
        k = (tx.sender, tx.nonce)
        if k in spent:
            return f"replay {tx}"
        if tx.amount > bal.get(tx.sender, 0):
            return f"overspend {tx}"
        bal[tx.sender] = bal.get(tx.sender, 0) - tx.amount
        bal[tx.receiver] = bal.get(tx.receiver, 0) + tx.amount
        spent.add(k)
    return None


def apply_payload(ledger: Ledger, txs: Iterable[Transaction]) -> Ledger:
    out = ledger.copy()
    for tx in txs:
        out.balances[tx.sender] = out.balances.get(tx.sender, 0) - tx.amount
        out.balances[tx.receiver] = out.balances.get(tx.receiver, 0) + tx.amount
        out.spent.add((tx.sender, tx.nonce))
    return out


# -- player chains -------------------------------------------------------------------

@dataclass(frozen=True)
class ChainEntry:
    epoch: int
    block: bytes
    parent_view_digest: bytes
    view: PayloadView | None
    flag: str | None = None

    @property
    def view_digest(self) -> bytes:
        if self.view is None:
            return hash_bytes(b"flagged" + self.block)
        return self.view.digest()


@dataclass
class PlayerChain:
    player: int
    genesis: bytes
    entries: list[ChainEntry] = field(default_factory=list)

    @property
    def tip_view_digest(self) -> bytes:
        return self.entries[-1].view_digest if self.entries else genesis_view_digest(self.genesis)

    def views(self) -> list[PayloadView | None]:
        return [e.view for e in self.entries]

    def flagged(self) -> list[ChainEntry]:
        return [e for e in self.entries if e.flag]

    def chain_digest(self) -> bytes:
        d = genesis_chain_digest(self.genesis)
        prev = genesis_view_digest(self.genesis)
        for e in self.entries:
            d = link_chain_digest(d, prev, e.view_digest)
            prev = e.view_digest
        return d


def open_entry(player: int, block: Metablock, dk: DecryptionKey, family: ViewFamily,
               verify_function=None) -> tuple[FunctionKey, PayloadView]:
    """Unwrap player's envelope, optionally VerKey-check it, then decrypt the payload view."""
    entry = block.entry_for(player)
    if entry is None:
        raise ChainError(f"block has no entry for player {player}")
    pp = block.pp if block.pp is not None else block.ciphertext.pp
    key = FunctionKey.decode(pke_decrypt(dk, entry.key_envelope), pp)
    if verify_function is not None and not fe_verify_key(pp, verify_function, key):
        raise CryptoError(f"key does not verify for {verify_function.id}")
    return key, fe_decrypt(key, block.ciphertext, family)


def extend_player_chain(chain: PlayerChain, blocks: Iterable[Metablock], dk: DecryptionKey,
                        genesis: GenesisBlock, verify: bool | None = None) -> list[ChainEntry]:
    """Append one entry per finalized block, flagging (never skipping) failures."""
    if verify is None:
        verify = genesis.variant is Variant.RFT
    family = genesis.family
    own = genesis.function_for(chain.player)
    added = []
    for block in blocks:
        parent_vd = chain.tip_view_digest
        try:
            _, view = open_entry(chain.player, block, dk, family, own if verify else None)
            entry = ChainEntry(block.epoch, block.digest, parent_vd, view)
        except (CryptoError, ValueError) as exc:
            entry = ChainEntry(block.epoch, block.digest, parent_vd, None, f"{type(exc).__name__}: {exc}")
        chain.entries.append(entry)
        added.append(entry)
    return added


def derive_player_chain(player: int, finalized: Iterable[Metablock], dk: DecryptionKey,
                        genesis: GenesisBlock, verify: bool | None = None) -> PlayerChain:
    chain = PlayerChain(player, genesis.digest)
    extend_player_chain(chain, finalized, dk, genesis, verify)
    return chain
