"""Simulated cryptographic primitives with honest functional contracts.

Nothing here is computationally hiding against code that inspects objects.
Signatures are HMAC tags checked by a verify key that privately holds the
signing secret (an ideal signature functionality), and sealing is a SHAKE-256
keystream. What the protocol layer is allowed to learn is controlled by which
operations it calls; reads of raw ciphertext bytes outside ``fe_decrypt``
are counted by ``AUDIT`` so tests can assert honest code never makes them.
"""
from __future__ import annotations

import hashlib
import hmac
import random
from dataclasses import dataclass, field

from . import encoding as enc
from .encoding import hash_bytes
from .views import Payload, PayloadView, ViewFamily, ViewFunction

__all__ = [
    "hash_bytes", "CryptoError", "NotAddressee", "InstanceMismatch", "InvalidKey",
    "SigningKey", "VerifyKey", "Signature", "sign", "verify_sig",
    "EncryptionKey", "DecryptionKey", "PKECipherText", "pke_encrypt", "pke_decrypt",
    "PlayerKeys", "generate_player_keys",
    "PublicParams", "FEInstance", "FunctionKey", "FECipherText",
    "fe_setup", "fe_keygen", "fe_encrypt", "fe_decrypt", "fe_verify_key", "fe_verify_ct",
    "AUDIT", "DigestRegistry", "is_valid_privacy_adversary",
]


class CryptoError(Exception):
    pass


class NotAddressee(CryptoError):
    pass


class InstanceMismatch(CryptoError):
    pass


class InvalidKey(CryptoError):
    pass


def _mac(secret: bytes, msg: bytes) -> bytes:
    return hmac.new(secret, msg, hashlib.sha256).digest()


def _stream(secret: bytes, nonce: bytes, n: int) -> bytes:
    return hashlib.shake_256(secret + nonce).digest(n)


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


# -- signatures ---------------------------------------------------------------

@dataclass(frozen=True)
class Signature:
    signer: int
    digest: bytes
    tag: bytes

    def encode(self) -> bytes:
        return enc.u32(self.signer) + enc.blob(self.digest) + enc.blob(self.tag)

    @classmethod
    def read(cls, r: enc.Reader) -> "Signature":
        return cls(r.u32(), r.blob(), r.blob())


@dataclass(frozen=True)
class VerifyKey:
    owner: int
    key_id: bytes
    _secret: bytes = field(repr=False, compare=False)

    def verify(self, msg: bytes, sig: Signature) -> bool:
        if not isinstance(sig, Signature) or sig.signer != self.owner:
            return False
        if sig.digest != hash_bytes(msg):
            return False
        return hmac.compare_digest(_mac(self._secret, sig.digest), sig.tag)

    def encode(self) -> bytes:
        return enc.u32(self.owner) + enc.blob(self.key_id)


@dataclass(frozen=True)
class SigningKey:
    owner: int
    secret: bytes = field(repr=False)

    @property
    def verify_key(self) -> VerifyKey:
        return VerifyKey(self.owner, hash_bytes(b"vk" + self.secret)[:16], self.secret)

    def sign(self, msg: bytes) -> Signature:
        d = hash_bytes(msg)
        return Signature(self.owner, d, _mac(self.secret, d))


def sign(msg: bytes, sk: SigningKey) -> Signature:
    return sk.sign(msg)


def verify_sig(msg: bytes, sig: Signature, vk: VerifyKey) -> bool:
    return vk.verify(msg, sig)


# -- public-key encryption ---------------------------------------------------

@dataclass(frozen=True)
class EncryptionKey:
    owner: int
    _secret: bytes = field(repr=False, compare=False)


@dataclass(frozen=True)
class DecryptionKey:
    owner: int
    secret: bytes = field(repr=False)

    @property
    def encryption_key(self) -> EncryptionKey:
        return EncryptionKey(self.owner, self.secret)


@dataclass(frozen=True)
class PKECipherText:
    recipient: int
    nonce: bytes
    sealed: bytes
    mac: bytes

    def encode(self) -> bytes:
        return enc.u32(self.recipient) + enc.blob(self.nonce) + enc.blob(self.sealed) + enc.blob(self.mac)

    @classmethod
    def read(cls, r: enc.Reader) -> "PKECipherText":
        return cls(r.u32(), r.blob(), r.blob(), r.blob())


def pke_encrypt(ek: EncryptionKey, plaintext: bytes, nonce: bytes) -> PKECipherText:
    sealed = _xor(plaintext, _stream(ek._secret, nonce, len(plaintext)))
    return PKECipherText(ek.owner, nonce, sealed, _mac(ek._secret, nonce + sealed)[:16])


def pke_decrypt(dk: DecryptionKey, ct: PKECipherText) -> bytes:
    if ct.recipient != dk.owner:
        raise NotAddressee(f"envelope for player {ct.recipient}, not {dk.owner}")
    if not hmac.compare_digest(_mac(dk.secret, ct.nonce + ct.sealed)[:16], ct.mac):
        raise CryptoError("envelope authentication failed")
    return _xor(ct.sealed, _stream(dk.secret, ct.nonce, len(ct.sealed)))


@dataclass(frozen=True)
class PlayerKeys:
    signing: SigningKey
    decryption: DecryptionKey

    @property
    def owner(self) -> int:
        return self.signing.owner

    @property
    def verify_key(self) -> VerifyKey:
        return self.signing.verify_key

    @property
    def encryption_key(self) -> EncryptionKey:
        return self.decryption.encryption_key


def generate_player_keys(owner: int, rng: random.Random) -> PlayerKeys:
    return PlayerKeys(SigningKey(owner, rng.randbytes(32)), DecryptionKey(owner, rng.randbytes(32)))


# -- functional encryption -----------------------------------------------------

@dataclass
class Audit:
    sealed_reads: int = 0

    def reset(self) -> None:
        self.sealed_reads = 0


AUDIT = Audit()


@dataclass(frozen=True)
class PublicParams:
    instance_id: bytes
    epoch: int
    authority: VerifyKey

    def encode(self) -> bytes:
        return enc.blob(self.instance_id) + enc.u64(self.epoch) + self.authority.encode()


@dataclass(frozen=True)
class MasterSecret:
    data_key: bytes
    signer: SigningKey


@dataclass(frozen=True)
class FEInstance:
    pp: PublicParams
    msk: MasterSecret = field(repr=False)


@dataclass(frozen=True)
class FunctionKey:
    function_id: str
    pp: PublicParams
    auth_tag: Signature
    wrapped_secret: bytes = field(repr=False)

    def encode(self) -> bytes:
        return (enc.text(self.function_id) + enc.blob(self.pp.instance_id) + enc.u64(self.pp.epoch)
                + self.auth_tag.encode() + enc.blob(self.wrapped_secret))

    @classmethod
    def decode(cls, data: bytes, pp: PublicParams) -> "FunctionKey":
        """Decode against the public parameters named in the carrying block."""
        r = enc.Reader(data)
        fid, iid, epoch = r.text(), r.blob(), r.u64()
        tag, wrapped = Signature.read(r), r.blob()
        r.done()
        if iid != pp.instance_id or epoch != pp.epoch:
            # key names another instance; keep its own identity so checks fail
            pp = PublicParams(iid, epoch, pp.authority)
        return cls(fid, pp, tag, wrapped)


@dataclass(frozen=True)
class FECipherText:
    pp: PublicParams
    nonce: bytes
    _sealed: bytes = field(repr=False)
    binding: Signature
    _cache: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    @property
    def sealed(self) -> bytes:
        AUDIT.sealed_reads += 1
        return self._sealed

    def encode(self) -> bytes:
        return enc.blob(self.pp.instance_id) + enc.blob(self.nonce) + enc.blob(self._sealed) + self.binding.encode()


def fe_setup(epoch: int, authority: SigningKey, rng: random.Random) -> FEInstance:
    pp = PublicParams(rng.randbytes(16), epoch, authority.verify_key)
    return FEInstance(pp, MasterSecret(rng.randbytes(32), authority))


def _key_statement(pp: PublicParams, function_id: str, wrapped: bytes) -> bytes:
    return b"sk" + pp.encode() + enc.text(function_id) + hash_bytes(wrapped)


def _payload_key(msk: MasterSecret) -> bytes:
    # what function keys carry; the master secret itself never leaves the instance
    return hash_bytes(b"payload-key" + msk.data_key)


def fe_keygen(inst: FEInstance, f: ViewFunction, family: ViewFamily) -> FunctionKey:
    fid = family._own(f).id
    wrapped = _payload_key(inst.msk)
    tag = inst.msk.signer.sign(_key_statement(inst.pp, fid, wrapped))
    return FunctionKey(fid, inst.pp, tag, wrapped)


def fe_encrypt(inst: FEInstance, payload: Payload, rng: random.Random) -> FECipherText:
    nonce = rng.randbytes(12)
    plain = payload.encode()
    sealed = _xor(plain, _stream(_payload_key(inst.msk), inst.pp.instance_id + nonce, len(plain)))
    binding = inst.msk.signer.sign(b"ct" + inst.pp.encode() + hash_bytes(nonce + sealed))
    return FECipherText(inst.pp, nonce, sealed, binding)


def _key_authentic(key: FunctionKey) -> bool:
    return key.pp.authority.verify(_key_statement(key.pp, key.function_id, key.wrapped_secret), key.auth_tag)


def fe_verify_key(pp: PublicParams, f: ViewFunction, key: FunctionKey) -> bool:
    try:
        return key.pp == pp and key.function_id == f.id and _key_authentic(key)
    except (AttributeError, TypeError):
        return False


def fe_verify_ct(pp: PublicParams, ct: FECipherText) -> bool:
    try:
        if ct.pp != pp:
            return False
        return pp.authority.verify(b"ct" + pp.encode() + hash_bytes(ct.nonce + ct._sealed), ct.binding)
    except (AttributeError, TypeError):
        return False


def fe_decrypt(key: FunctionKey, ct: FECipherText, family: ViewFamily) -> PayloadView:
    """Return exactly ``f(txs)`` for the key's function ``f``."""
    if key.pp != ct.pp:
        raise InstanceMismatch("key and ciphertext belong to different instances")
    if not _key_authentic(key):
        raise InvalidKey(f"authentication tag invalid for {key.function_id!r}")
    payload = ct._cache.get(key.wrapped_secret)
    if payload is None:
        plain = _xor(ct._sealed, _stream(key.wrapped_secret, ct.pp.instance_id + ct.nonce, len(ct._sealed)))
        try:
            payload = Payload.decode(plain)
        except (ValueError, UnicodeDecodeError) as exc:
            raise CryptoError("ciphertext did not open under this key") from exc
        ct._cache[key.wrapped_secret] = payload
    return family.apply(key.function_id, payload)


class DigestRegistry:
    """Records every hashed input and fails loudly on a collision."""

    def __init__(self):
        self._seen: dict[bytes, bytes] = {}

    def hash(self, data: bytes) -> bytes:
        d = hash_bytes(data)
        prev = self._seen.setdefault(d, data)
        if prev != data:
            raise CryptoError(f"digest collision on {d.hex()}")
        return d

    def __len__(self) -> int:
        return len(self._seen)


def is_valid_privacy_adversary(functions, messages, family: ViewFamily, per_function: bool = False) -> bool:
    """Validity predicate for a message-privacy adversary's query transcript.

    The default compares every ``f_i1(m_j1)`` with every ``f_i2(m_j2)`` by
    value. ``per_function=True`` gives the usual weaker form where only
    evaluations of the same function must agree across messages.
    """
    evals = [[family.apply(f, m) for m in messages] for f in functions]
    if per_function:
        return all(all((v.tag, v.value) == (row[0].tag, row[0].value) for v in row) for row in evals if row)
    flat = [(v.tag, v.value) for row in evals for v in row]
    return all(x == flat[0] for x in flat)
