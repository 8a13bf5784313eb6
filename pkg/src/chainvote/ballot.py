"""Wire messages: choices, eligibility tokens, ballots, alterations, openings."""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Protocol, Union

from . import crypto
from .crypto import CAPublicKey, SigningKeyPair
from .encoding import Reader, encode_fields, u32
from .errors import ChainFormatError, InvalidChoice, TokenInvalid, TokenMismatch, UnknownVID

VID_SIZE = 32
MAX_PROTEST_BYTES = 256

_CANDIDATE = b"\x00"
_PROTEST = b"\x01"


@dataclass(frozen=True)
class Candidate:
    index: int

    def encode(self) -> bytes:
        return encode_fields(_CANDIDATE, u32(self.index))

    def __str__(self) -> str:
        return str(self.index)


@dataclass(frozen=True)
class Protest:
    """An intentionally invalid vote: logged, never tallied for a candidate."""

    text: str

    def encode(self) -> bytes:
        return encode_fields(_PROTEST, self.text.encode("utf-8"))

    def __str__(self) -> str:
        return f"protest:{self.text}"


Choice = Union[Candidate, Protest]


def decode_choice(data: bytes) -> Choice:
    r = Reader(data)
    kind = r.field()
    if kind == _CANDIDATE:
        choice: Choice = Candidate(r.int(4))
    elif kind == _PROTEST:
        try:
            choice = Protest(r.field().decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ChainFormatError("protest text is not utf-8") from exc
    else:
        raise ChainFormatError(f"unknown choice kind {kind!r}")
    r.done()
    return choice


def parse_choice(text: str) -> Choice:
    """Parse ``"2"`` or ``"protest:some text"``."""
    if text.startswith("protest:"):
        return Protest(text[len("protest:") :])
    try:
        index = int(text)
    except ValueError:
        raise InvalidChoice(f"not a candidate index or protest: {text!r}") from None
    if index < 0:
        raise InvalidChoice(f"negative candidate index {index}")
    return Candidate(index)


def check_choice(choice: Choice, n_candidates: int) -> None:
    if isinstance(choice, Candidate):
        if not 0 <= choice.index < n_candidates:
            raise InvalidChoice(f"candidate {choice.index} out of range (0..{n_candidates - 1})")
    elif isinstance(choice, Protest):
        if len(choice.text.encode("utf-8")) > MAX_PROTEST_BYTES:
            raise InvalidChoice(f"protest text longer than {MAX_PROTEST_BYTES} bytes")
    else:
        raise InvalidChoice(f"not a choice: {choice!r}")


def vid_from_int(n: int) -> bytes:
    return n.to_bytes(VID_SIZE, "big")


def new_vid(rng: random.Random | None = None) -> bytes:
    return crypto.random_bytes(rng, VID_SIZE)


def short(data: bytes) -> str:
    """Short hex label for logs; small integer VIDs print as decimal."""
    if len(data) == VID_SIZE and data[:-2] == bytes(VID_SIZE - 2):
        return str(int.from_bytes(data, "big"))
    return data.hex()[:12]


# -- eligibility tokens and ballots -----------------------------------------


def token_message(voter_pub: bytes, dc: bytes) -> bytes:
    return encode_fields(voter_pub, dc)


@dataclass(frozen=True)
class EligibilityToken:
    """CA signature over ``(voter_pub, dc)``; the pair travels with it."""

    voter_pub: bytes
    dc: bytes
    signature: bytes

    def verify(self, ca_public: CAPublicKey) -> bool:
        return crypto.verify_ca(ca_public, token_message(self.voter_pub, self.dc), self.signature)


@dataclass(frozen=True)
class Ballot:
    voter_pub: bytes
    dc: bytes
    token: EligibilityToken

    kind = "ballot"

    def encode(self) -> bytes:
        return encode_fields(b"B", self.voter_pub, self.dc, self.token.signature)

    def token_valid(self, ca_public: CAPublicKey) -> bool:
        return (
            self.token.voter_pub == self.voter_pub
            and self.token.dc == self.dc
            and self.token.verify(ca_public)
        )

    @property
    def commitment(self) -> bytes:
        return self.dc

    def __str__(self) -> str:
        return f"ballot owner={short(self.voter_pub)} dc={short(self.dc)}"


def alteration_message(cancelled_vid: bytes, voter_pub: bytes, dc_new: bytes) -> bytes:
    return encode_fields(b"alter", cancelled_vid, voter_pub, dc_new)


@dataclass(frozen=True)
class AlterationBallot:
    cancelled_vid: bytes
    voter_pub: bytes
    dc_new: bytes
    signature: bytes

    kind = "alteration"

    def encode(self) -> bytes:
        return encode_fields(b"A", self.cancelled_vid, self.voter_pub, self.dc_new, self.signature)

    def verify(self, public: bytes | None = None) -> bool:
        key = self.voter_pub if public is None else public
        msg = alteration_message(self.cancelled_vid, self.voter_pub, self.dc_new)
        return crypto.verify(key, msg, self.signature)

    @property
    def commitment(self) -> bytes:
        return self.dc_new

    def __str__(self) -> str:
        return f"alteration owner={short(self.voter_pub)} cancels={short(self.cancelled_vid)}"


Payload = Union[Ballot, AlterationBallot]


def decode_payload(data: bytes) -> Payload:
    r = Reader(data)
    tag = r.field()
    if tag == b"B":
        pub, dc, sig = r.field(), r.field(), r.field()
        r.done()
        return Ballot(pub, dc, EligibilityToken(pub, dc, sig))
    if tag == b"A":
        cancelled, pub, dc, sig = r.field(), r.field(), r.field(), r.field()
        r.done()
        return AlterationBallot(cancelled, pub, dc, sig)
    raise ChainFormatError(f"unknown payload tag {tag!r}")


def prepare_commitment(
    choice: Choice, n_candidates: int, rng: random.Random | None = None
) -> tuple[bytes, bytes]:
    check_choice(choice, n_candidates)
    opening = crypto.new_opening(rng)
    return crypto.commit(choice.encode(), opening), opening


def build_ballot(voter_pub: bytes, dc: bytes, token: EligibilityToken, ca_public: CAPublicKey) -> Ballot:
    if (token.voter_pub, token.dc) != (voter_pub, dc):
        raise TokenMismatch("token was issued for a different public key or commitment")
    if not token.verify(ca_public):
        raise TokenInvalid("token signature does not verify under the CA key")
    return Ballot(voter_pub, dc, token)


def build_alteration_ballot(
    voter_keys: SigningKeyPair,
    cancelled_vid: bytes,
    new_choice: Choice,
    n_candidates: int,
    rng: random.Random | None = None,
) -> tuple[AlterationBallot, bytes]:
    dc_new, opening = prepare_commitment(new_choice, n_candidates, rng)
    sig = crypto.sign(voter_keys.private, alteration_message(cancelled_vid, voter_keys.public, dc_new))
    return AlterationBallot(cancelled_vid, voter_keys.public, dc_new, sig), opening


# -- openings ---------------------------------------------------------------


def opening_signed_message(vid: bytes, opening: bytes, choice: Choice) -> bytes:
    return encode_fields(b"open", vid, opening, choice.encode())


@dataclass(frozen=True)
class OpeningMessage:
    vid: bytes
    opening: bytes
    choice: Choice
    signature: bytes

    def encode(self) -> bytes:
        return encode_fields(self.vid, self.opening, self.choice.encode(), self.signature)

    @classmethod
    def decode(cls, data: bytes) -> OpeningMessage:
        r = Reader(data)
        vid, opening, choice, sig = r.field(), r.field(), decode_choice(r.field()), r.field()
        r.done()
        return cls(vid, opening, choice, sig)

    def signed_by(self, public: bytes) -> bool:
        msg = opening_signed_message(self.vid, self.opening, self.choice)
        return crypto.verify(public, msg, self.signature)

    def matches(self, dc: bytes) -> bool:
        return crypto.verify_commitment(dc, self.choice.encode(), self.opening)


def build_opening_message(
    voter_keys: SigningKeyPair, vid: bytes, choice: Choice, opening: bytes
) -> OpeningMessage:
    sig = crypto.sign(voter_keys.private, opening_signed_message(vid, opening, choice))
    return OpeningMessage(vid, opening, choice, sig)


class VoteLookup(Protocol):
    def get(self, vid: bytes): ...


def verify_opening(msg: OpeningMessage, ledger: VoteLookup) -> bool:
    """True iff the vote owner signed ``msg`` and it opens the vote's commitment."""
    entry = ledger.get(msg.vid)
    if entry is None:
        raise UnknownVID(short(msg.vid))
    payload = entry.payload
    return msg.signed_by(payload.voter_pub) and msg.matches(payload.commitment)
