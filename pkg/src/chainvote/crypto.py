"""Cryptographic primitives: voter signatures, CA blind signatures, commitments.

Voter keys are Ed25519 (32-byte public keys, 64-byte signatures). The CA
signs with Chaum-style RSA blind signatures over a full-domain hash of the
message, so unblinding is a single modular multiplication and the unblinded
signature equals what the CA would have produced directly. Commitments are
``SHA-256(len(choice) || choice || opening)`` with a 32-byte random opening.
"""

from __future__ import annotations

import hashlib
import hmac
import random
import secrets
from dataclasses import dataclass, field

import gmpy2
from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .encoding import Reader, encode_fields
from .errors import MalformedBlindedMessage, MessageTooLong, UnblindFailure

PUBLIC_KEY_SIZE = 32
SIGNATURE_SIZE = 64
DIGEST_SIZE = 32
OPENING_SIZE = 32
DEFAULT_CA_BITS = 2048
PUBLIC_EXPONENT = 65537

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def derive_seed(seed: bytes | int | str, label: str) -> bytes:
    """Derive an independent 32-byte sub-seed for ``label``."""
    if isinstance(seed, int):
        seed = seed.to_bytes(16, "big", signed=True)
    elif isinstance(seed, str):
        seed = seed.encode()
    return digest(encode_fields(b"chainvote-seed", seed, label.encode()))


def seeded_rng(seed: bytes | int | str, label: str) -> random.Random:
    return random.Random(int.from_bytes(derive_seed(seed, label), "big"))


def system_rng() -> random.Random:
    return secrets.SystemRandom()


def random_bytes(rng: random.Random | None, n: int) -> bytes:
    if rng is None:
        return secrets.token_bytes(n)
    return rng.getrandbits(8 * n).to_bytes(n, "big")


# -- voter signatures -------------------------------------------------------


@dataclass(frozen=True)
class SigningKeyPair:
    public: bytes
    private: bytes = field(repr=False)


def generate_voter_keys(rng_seed: bytes | None = None) -> SigningKeyPair:
    """Ed25519 keypair; deterministic when a 32-byte seed is supplied."""
    if rng_seed is None:
        rng_seed = secrets.token_bytes(32)
    if len(rng_seed) != 32:
        raise ValueError("voter key seed must be 32 bytes")
    sk = Ed25519PrivateKey.from_private_bytes(rng_seed)
    return SigningKeyPair(public=sk.public_key().public_bytes(_RAW, _RAW_PUB), private=rng_seed)


def sign(private: bytes, message: bytes) -> bytes:
    if not message:
        raise ValueError("refusing to sign an empty message")
    return Ed25519PrivateKey.from_private_bytes(private).sign(message)


def verify(public: bytes, message: bytes, signature: bytes) -> bool:
    if len(public) != PUBLIC_KEY_SIZE or len(signature) != SIGNATURE_SIZE:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public).verify(signature, message)
    except (InvalidSignature, ValueError):
        return False
    return True


# -- CA blind signatures ----------------------------------------------------


@dataclass(frozen=True)
class CAPublicKey:
    n: int
    e: int = PUBLIC_EXPONENT

    @property
    def size(self) -> int:
        """Modulus length in bytes; also the length of every CA signature."""
        return (self.n.bit_length() + 7) // 8

    def to_bytes(self) -> bytes:
        return encode_fields(self.n.to_bytes(self.size, "big"), self.e.to_bytes(4, "big"))

    @classmethod
    def from_bytes(cls, data: bytes) -> CAPublicKey:
        r = Reader(data)
        n = int.from_bytes(r.field(), "big")
        e = int.from_bytes(r.field(), "big")
        r.done()
        return cls(n=n, e=e)

    def fingerprint(self) -> str:
        return digest(self.to_bytes()).hex()[:16]


@dataclass(frozen=True, repr=False)
class CAPrivateKey:
    public: CAPublicKey
    d: int
    p: int
    q: int

    def _crt(self, m: int) -> int:
        p, q = gmpy2.mpz(self.p), gmpy2.mpz(self.q)
        sp = gmpy2.powmod(m, self.d % (self.p - 1), p)
        sq = gmpy2.powmod(m, self.d % (self.q - 1), q)
        h = (gmpy2.invert(q, p) * (sp - sq)) % p
        return int(sq + h * q)

    def to_bytes(self) -> bytes:
        size = self.public.size
        return encode_fields(
            self.public.to_bytes(),
            self.p.to_bytes(size, "big"),
            self.q.to_bytes(size, "big"),
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> CAPrivateKey:
        r = Reader(data)
        public = CAPublicKey.from_bytes(r.field())
        p = int.from_bytes(r.field(), "big")
        q = int.from_bytes(r.field(), "big")
        r.done()
        if p * q != public.n:
            raise ValueError("CA private key factors do not match modulus")
        d = pow(public.e, -1, (p - 1) * (q - 1))
        return cls(public=public, d=d, p=p, q=q)


@dataclass(frozen=True)
class CAKeyPair:
    public: CAPublicKey
    private: CAPrivateKey = field(repr=False)


def _random_prime(rng: random.Random, bits: int, e: int) -> int:
    while True:
        cand = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if gmpy2.is_prime(cand, 40) and gmpy2.gcd(e, cand - 1) == 1:
            return cand


def generate_ca_keys(seed: bytes | None = None, bits: int = DEFAULT_CA_BITS) -> CAKeyPair:
    """RSA keypair for blind signing; deterministic for a fixed seed."""
    if bits < 512 or bits % 2:
        raise ValueError("CA modulus must be an even number of bits >= 512")
    rng = random.Random(int.from_bytes(seed, "big")) if seed is not None else system_rng()
    e = PUBLIC_EXPONENT
    while True:
        p = _random_prime(rng, bits // 2, e)
        q = _random_prime(rng, bits // 2, e)
        if p != q and (p * q).bit_length() == bits:
            break
    if p < q:
        p, q = q, p
    public = CAPublicKey(n=p * q, e=e)
    d = pow(e, -1, (p - 1) * (q - 1))
    return CAKeyPair(public=public, private=CAPrivateKey(public=public, d=d, p=p, q=q))


def _fdh(message: bytes, pk: CAPublicKey) -> int:
    # MGF1-style expansion to the full modulus width, reduced mod n
    out = b""
    counter = 0
    while len(out) < pk.size:
        out += digest(b"chainvote-fdh" + counter.to_bytes(4, "big") + message)
        counter += 1
    return int.from_bytes(out[: pk.size], "big") % pk.n


@dataclass(frozen=True)
class BlindingState:
    message: bytes
    blinded_message: bytes
    unblinding_factor: bytes = field(repr=False)


def blind(message: bytes, ca_public: CAPublicKey, rng: random.Random | None = None) -> BlindingState:
    if len(message) > ca_public.size:
        raise MessageTooLong(f"{len(message)} bytes exceeds the {ca_public.size}-byte modulus bound")
    rng = rng or system_rng()
    n = ca_public.n
    while True:
        r = rng.randrange(2, n - 1)
        if gmpy2.gcd(r, n) == 1:
            break
    blinded = (_fdh(message, ca_public) * int(gmpy2.powmod(r, ca_public.e, n))) % n
    return BlindingState(
        message=message,
        blinded_message=blinded.to_bytes(ca_public.size, "big"),
        unblinding_factor=r.to_bytes(ca_public.size, "big"),
    )


def blind_sign(ca_private: CAPrivateKey, blinded_message: bytes) -> bytes:
    pk = ca_private.public
    if len(blinded_message) != pk.size:
        raise MalformedBlindedMessage(f"expected {pk.size} bytes, got {len(blinded_message)}")
    m = int.from_bytes(blinded_message, "big")
    if not 0 < m < pk.n:
        raise MalformedBlindedMessage("blinded message is not a residue mod n")
    return ca_private._crt(m).to_bytes(pk.size, "big")


def unblind(blind_sig: bytes, state: BlindingState, ca_public: CAPublicKey) -> bytes:
    if len(blind_sig) != ca_public.size:
        raise UnblindFailure("blind signature has the wrong length")
    n = ca_public.n
    s_blind = int.from_bytes(blind_sig, "big")
    r = int.from_bytes(state.unblinding_factor, "big")
    try:
        r_inv = int(gmpy2.invert(r, n))
    except ZeroDivisionError as exc:
        raise UnblindFailure("unblinding factor not invertible") from exc
    sig = ((s_blind * r_inv) % n).to_bytes(ca_public.size, "big")
    if not verify_ca(ca_public, state.message, sig):
        raise UnblindFailure("unblinded signature does not verify")
    return sig


def ca_sign(ca_private: CAPrivateKey, message: bytes) -> bytes:
    """Sign without blinding; the reference result for unblinded signatures."""
    pk = ca_private.public
    return ca_private._crt(_fdh(message, pk)).to_bytes(pk.size, "big")


def verify_ca(ca_public: CAPublicKey, message: bytes, signature: bytes) -> bool:
    if len(signature) != ca_public.size:
        return False
    s = int.from_bytes(signature, "big")
    if s >= ca_public.n:
        return False
    return int(gmpy2.powmod(s, ca_public.e, ca_public.n)) == _fdh(message, ca_public)


# -- commitments ------------------------------------------------------------


def new_opening(rng: random.Random | None = None) -> bytes:
    return random_bytes(rng, OPENING_SIZE)


def commit(choice: bytes, opening: bytes) -> bytes:
    if len(opening) != OPENING_SIZE:
        raise ValueError("opening must be 32 bytes")
    return digest(len(choice).to_bytes(4, "big") + choice + opening)


def verify_commitment(dc: bytes, choice: bytes, opening: bytes) -> bool:
    if len(opening) != OPENING_SIZE:
        return False
    return hmac.compare_digest(commit(choice, opening), dc)
