"""Transactions, payload view functions and the implication order over them.

A view family is a finite set of view functions with a hand-declared Hasse
diagram. ``f1 <= f2`` means the view under ``f1`` can be recomputed from the
view under ``f2``; every declared edge carries the derivation that proves it.
"""
from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

from . import encoding as enc


class ViewError(ValueError):
    pass


class UnknownFunction(ViewError):
    pass


class FamilyMismatch(ViewError):
    pass


class NotComparable(ViewError):
    pass


@dataclass(frozen=True, order=True)
class Transaction:
    sender: str
    receiver: str
    amount: int
    nonce: int

    def __post_init__(self):
        if self.amount < 0:
            raise ViewError(f"negative amount {self.amount}")
        if self.nonce < 0:
            raise ViewError(f"negative nonce {self.nonce}")

    def encode(self) -> bytes:
        return enc.text(self.sender) + enc.text(self.receiver) + enc.u64(self.amount) + enc.u64(self.nonce)

    @classmethod
    def read(cls, r: enc.Reader) -> "Transaction":
        return cls(r.text(), r.text(), r.u64(), r.u64())

    def __str__(self) -> str:
        return f"{self.sender}->{self.receiver}:{self.amount}#{self.nonce}"


@dataclass(frozen=True)
class Payload:
    txs: tuple[Transaction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))
        seen = set()
        for tx in self.txs:
            key = (tx.sender, tx.nonce)
            if key in seen:
                raise ViewError(f"duplicate (sender, nonce) {key}")
            seen.add(key)

    def __len__(self) -> int:
        return len(self.txs)

    def __iter__(self):
        return iter(self.txs)

    def encode(self) -> bytes:
        return enc.seq(tx.encode() for tx in self.txs)

    @classmethod
    def read(cls, r: enc.Reader) -> "Payload":
        return cls(tuple(Transaction.read(r) for _ in range(r.u32())))

    @classmethod
    def decode(cls, data: bytes) -> "Payload":
        r = enc.Reader(data)
        out = cls.read(r)
        r.done()
        return out


@dataclass(frozen=True, order=True)
class RedactedTx:
    """A transaction whose amount is reduced to a presence marker."""
    sender: str
    receiver: str
    nonce: int

    def encode(self) -> bytes:
        return enc.text(self.sender) + enc.text(self.receiver) + enc.u64(self.nonce) + enc.u8(1)

    @classmethod
    def read(cls, r: enc.Reader) -> "RedactedTx":
        out = cls(r.text(), r.text(), r.u64())
        if r.u8() != 1:
            raise enc.DecodeError("bad presence marker")
        return out


class ViewKind(enum.Enum):
    IDENTITY = "identity"
    NULL = "null"
    PARTY_FILTER = "party-filter"
    TOKEN_SUM = "token-sum"
    MIN_TX = "min-tx"
    VALUE_REDACT = "value-redact"
    # wrong-but-registered function used only by the wrong-key attack demo
    DECREMENT = "decrement"


class ViewTag(enum.IntEnum):
    FULL = 1
    BOTTOM = 2
    SUBSET = 3
    SUM = 4
    SINGLE = 5
    REDACTED = 6


_TAG_FOR_KIND = {
    ViewKind.IDENTITY: ViewTag.FULL,
    ViewKind.NULL: ViewTag.BOTTOM,
    ViewKind.PARTY_FILTER: ViewTag.SUBSET,
    ViewKind.TOKEN_SUM: ViewTag.SUM,
    ViewKind.MIN_TX: ViewTag.SINGLE,
    ViewKind.VALUE_REDACT: ViewTag.REDACTED,
    ViewKind.DECREMENT: ViewTag.FULL,
}


@dataclass(frozen=True)
class ViewFunction:
    id: str
    kind: ViewKind
    parent_ids: tuple[str, ...] = ()
    party: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "parent_ids", tuple(self.parent_ids))
        if (self.kind is ViewKind.PARTY_FILTER) != (self.party is not None):
            raise ViewError(f"{self.id}: party is required for, and only for, party filters")

    def encode(self) -> bytes:
        return enc.text(self.id) + enc.text(self.kind.value) + enc.text(self.party or "")

    def __call__(self, payload: Payload) -> "PayloadView":
        return apply_view(self, payload)


@dataclass(frozen=True)
class PayloadView:
    function_id: str
    tag: ViewTag
    value: object = None

    def encode(self) -> bytes:
        out = enc.text(self.function_id) + enc.u8(int(self.tag))
        t, v = self.tag, self.value
        if t is ViewTag.BOTTOM:
            return out
        if t is ViewTag.SUM:
            return out + enc.u64(v)
        if t is ViewTag.SINGLE:
            return out + (enc.u8(0) if v is None else enc.u8(1) + v.encode())
        if t is ViewTag.FULL:
            return out + v.encode()
        return out + enc.seq(x.encode() for x in v)

    @classmethod
    def decode(cls, data: bytes) -> "PayloadView":
        r = enc.Reader(data)
        fid = r.text()
        tag = ViewTag(r.u8())
        if tag is ViewTag.BOTTOM:
            value = None
        elif tag is ViewTag.SUM:
            value = r.u64()
        elif tag is ViewTag.SINGLE:
            value = Transaction.read(r) if r.u8() else None
        elif tag is ViewTag.FULL:
            value = Payload.read(r)
        elif tag is ViewTag.SUBSET:
            value = tuple(Transaction.read(r) for _ in range(r.u32()))
        else:
            value = tuple(RedactedTx.read(r) for _ in range(r.u32()))
        r.done()
        return cls(fid, tag, value)

    def digest(self) -> bytes:
        return enc.hash_bytes(self.encode())

    @property
    def is_bottom(self) -> bool:
        return self.tag is ViewTag.BOTTOM


def apply_view(f: ViewFunction, payload: Payload) -> PayloadView:
    """Evaluate ``f`` on a payload."""
    k = f.kind
    txs = payload.txs
    if k is ViewKind.IDENTITY:
        value = payload
    elif k is ViewKind.NULL:
        value = None
    elif k is ViewKind.PARTY_FILTER:
        value = tuple(tx for tx in txs if f.party in (tx.sender, tx.receiver))
    elif k is ViewKind.TOKEN_SUM:
        value = sum(tx.amount for tx in txs)
    elif k is ViewKind.MIN_TX:
        # ties resolve to the earliest transaction in list order
        value = min(txs, key=lambda tx: tx.amount) if txs else None
    elif k is ViewKind.VALUE_REDACT:
        value = tuple(RedactedTx(tx.sender, tx.receiver, tx.nonce) for tx in txs)
    elif k is ViewKind.DECREMENT:
        value = Payload(tuple(Transaction(tx.sender, tx.receiver, max(tx.amount - 1, 0), tx.nonce) for tx in txs))
    else:  # pragma: no cover
        raise UnknownFunction(f.id)
    return PayloadView(f.id, _TAG_FOR_KIND[k], value)


# Edge derivations: (upper kind, lower kind) -> how to compute the lower view
# from the upper one. Only these pairs may appear as Hasse edges.
def _from_full(upper: PayloadView, lower: ViewFunction) -> PayloadView:
    return apply_view(lower, upper.value)


def _to_bottom(upper: PayloadView, lower: ViewFunction) -> PayloadView:
    return PayloadView(lower.id, ViewTag.BOTTOM, None)


def _same_party(upper: PayloadView, lower: ViewFunction) -> PayloadView:
    return PayloadView(lower.id, ViewTag.SUBSET, upper.value)


Derivation = Callable[[PayloadView, ViewFunction], PayloadView]


def edge_derivation(upper: ViewFunction, lower: ViewFunction) -> Derivation | None:
    if lower.kind is ViewKind.NULL:
        return _to_bottom
    if upper.kind is ViewKind.IDENTITY:
        return _from_full
    if upper.kind is ViewKind.PARTY_FILTER and lower.kind is ViewKind.PARTY_FILTER and upper.party == lower.party:
        return _same_party
    return None


@dataclass
class ViewFamily:
    """A registered view-function family and its Hasse diagram."""

    functions: dict[str, ViewFunction]
    _up: dict[str, frozenset[str]] = field(init=False, repr=False)

    def __init__(self, functions: Iterable[ViewFunction]):
        self.functions = {}
        for f in functions:
            if f.id in self.functions:
                raise ViewError(f"duplicate function id {f.id!r}")
            self.functions[f.id] = f
        self._validate()

    def _validate(self) -> None:
        ids = self.functions
        tops = [f for f in ids.values() if f.kind is ViewKind.IDENTITY]
        bots = [f for f in ids.values() if f.kind is ViewKind.NULL]
        if len(tops) != 1 or len(bots) != 1:
            raise ViewError("a family needs exactly one identity and one null function")
        self.identity, self.null = tops[0], bots[0]
        for f in ids.values():
            for p in f.parent_ids:
                if p not in ids:
                    raise ViewError(f"{f.id}: unknown parent {p!r}")
                if edge_derivation(ids[p], f) is None:
                    raise ViewError(f"edge {p} -> {f.id} has no derivation")
        # transitive upward closure, with cycle detection
        up: dict[str, frozenset[str]] = {}
        visiting: set[str] = set()

        def closure(fid: str) -> frozenset[str]:
            if fid in up:
                return up[fid]
            if fid in visiting:
                raise ViewError(f"Hasse diagram has a cycle through {fid!r}")
            visiting.add(fid)
            acc = {fid}
            for p in ids[fid].parent_ids:
                acc |= closure(p)
            visiting.discard(fid)
            up[fid] = frozenset(acc)
            return up[fid]

        for fid in ids:
            closure(fid)
        self._up = up
        for f in ids.values():
            if self.identity.id not in up[f.id] or f.id not in up[self.null.id]:
                raise ViewError(f"{f.id} is not between null and identity")

    def __contains__(self, f) -> bool:
        fid = f.id if isinstance(f, ViewFunction) else f
        return fid in self.functions

    def __iter__(self):
        return iter(self.functions.values())

    def __len__(self) -> int:
        return len(self.functions)

    def __getitem__(self, fid: str) -> ViewFunction:
        try:
            return self.functions[fid]
        except KeyError:
            raise UnknownFunction(fid) from None

    def _own(self, f: ViewFunction | str) -> ViewFunction:
        if isinstance(f, str):
            return self[f]
        if self.functions.get(f.id) != f:
            raise FamilyMismatch(f"{f.id!r} is not registered in this family")
        return f

    def apply(self, f: ViewFunction | str, payload: Payload) -> PayloadView:
        return apply_view(self._own(f), payload)

    def leq(self, f1, f2) -> bool:
        a, b = self._own(f1), self._own(f2)
        return b.id in self._up[a.id]

    def dist(self, f1, f2) -> int:
        """Edges on a shortest downward path from ``f2`` to ``f1``."""
        a, b = self._own(f1), self._own(f2)
        if not self.leq(a, b):
            raise NotComparable(f"{a.id} is not below {b.id}")
        frontier = deque([(a.id, 0)])
        seen = {a.id}
        while frontier:
            fid, d = frontier.popleft()
            if fid == b.id:
                return d
            for p in self.functions[fid].parent_ids:
                if p not in seen:
                    seen.add(p)
                    frontier.append((p, d + 1))
        raise AssertionError("unreachable")  # pragma: no cover

    def derive(self, view: PayloadView, target) -> PayloadView:
        """Recompute the view under ``target`` from a higher view by composing edge derivations."""
        src, dst = self[view.function_id], self._own(target)
        if not self.leq(dst, src):
            raise NotComparable(f"{dst.id} is not implied by {src.id}")
        path = self._down_path(src, dst)
        cur = view
        for upper, lower in zip(path, path[1:]):
            cur = edge_derivation(upper, lower)(cur, lower)
        return cur

    def _down_path(self, src: ViewFunction, dst: ViewFunction) -> list[ViewFunction]:
        # BFS upward from dst, then walk back
        prev: dict[str, str | None] = {dst.id: None}
        frontier = deque([dst.id])
        while frontier:
            fid = frontier.popleft()
            if fid == src.id:
                break
            for p in self.functions[fid].parent_ids:
                if p not in prev:
                    prev[p] = fid
                    frontier.append(p)
        path = [src]
        cur = prev[src.id]
        while cur is not None:
            path.append(self.functions[cur])
            cur = prev[cur]
        return path

    def _extremes(self, views: Iterable[PayloadView], below: bool) -> list[PayloadView]:
        uniq: dict[str, PayloadView] = {}
        for v in views:
            self[v.function_id]
            uniq.setdefault(v.function_id, v)
        if not uniq:
            raise ViewError("empty view set")
        keep = []
        for fid, v in uniq.items():
            dominated = any(
                other != fid and (self.leq(other, fid) if below else self.leq(fid, other))
                for other in uniq
            )
            if not dominated:
                keep.append(v)
        return keep

    def inf_views(self, views: Iterable[PayloadView]) -> list[PayloadView]:
        return self._extremes(views, below=True)

    def sup_views(self, views: Iterable[PayloadView]) -> list[PayloadView]:
        return self._extremes(views, below=False)

    def encode(self) -> bytes:
        fs = sorted(self.functions.values(), key=lambda f: f.id)
        return enc.seq(f.encode() + enc.seq(enc.text(p) for p in sorted(f.parent_ids)) for f in fs)

    def digest(self) -> bytes:
        return enc.hash_bytes(self.encode())


IDENTITY = "identity"
NULL = "null"
DECREMENT = "decrement"


def default_family(party: str = "alice", with_decrement: bool = False) -> ViewFamily:
    """Six-function family: identity over four incomparable views over null."""
    pf = f"party:{party}"
    mids = [pf, "value-redact", "min-tx", "token-sum"]
    fs = [
        ViewFunction(IDENTITY, ViewKind.IDENTITY),
        ViewFunction(pf, ViewKind.PARTY_FILTER, (IDENTITY,), party=party),
        ViewFunction("value-redact", ViewKind.VALUE_REDACT, (IDENTITY,)),
        ViewFunction("min-tx", ViewKind.MIN_TX, (IDENTITY,)),
        ViewFunction("token-sum", ViewKind.TOKEN_SUM, (IDENTITY,)),
    ]
    if with_decrement:
        fs.append(ViewFunction(DECREMENT, ViewKind.DECREMENT, (IDENTITY,)))
        mids.append(DECREMENT)
    fs.append(ViewFunction(NULL, ViewKind.NULL, tuple(mids)))
    return ViewFamily(fs)


@dataclass(frozen=True, order=True)
class Credential:
    rank: int
    bits: bytes

    def encode(self) -> bytes:
        return enc.blob(self.bits) + enc.i64(self.rank)


class UnregisteredCredential(ViewError):
    pass


@dataclass
class ViewAssignment:
    """Psi: credential -> view function id, published at setup."""

    family: ViewFamily
    psi: dict[bytes, str]
    credentials: dict[bytes, Credential]

    def __init__(self, family: ViewFamily, table: Mapping[Credential, str]):
        self.family = family
        self.psi = {}
        self.credentials = {}
        for cred, fid in table.items():
            family[fid]
            self.psi[cred.bits] = fid
            self.credentials[cred.bits] = cred
        if not table:
            raise ViewError("empty view assignment")
        top = max(self.credentials.values()).rank
        for cred in self.credentials.values():
            if cred.rank == top and self.psi[cred.bits] != family.identity.id:
                raise ViewError("the highest credential must map to the identity view")
        self.top_rank = top

    def assign_view(self, kappa: Credential) -> ViewFunction:
        if self.credentials.get(kappa.bits) != kappa:
            raise UnregisteredCredential(kappa.bits.hex())
        return self.family[self.psi[kappa.bits]]

    def is_top(self, kappa: Credential) -> bool:
        return kappa.rank == self.top_rank

    def credential_leq(self, k1: Credential, k2: Credential) -> bool:
        return self.family.leq(self.assign_view(k1), self.assign_view(k2))

    def encode(self) -> bytes:
        items = sorted(self.credentials.values())
        return enc.seq(c.encode() + enc.text(self.psi[c.bits]) for c in items)
