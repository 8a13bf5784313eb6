"""Permissioned ballot-box chain: genesis, vote admission, blocks, seal state.

Chain file layout (all fields length-prefixed, see :mod:`chainvote.encoding`)::

    "CVCHAIN1" | genesis config | block count | block ... | head hash | seal annex

The seal annex records node-local unseal timestamps. It is not covered by
any block hash.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from . import ballot as _ballot
from .ballot import AlterationBallot, Ballot, Payload, decode_payload, short
from .crypto import DIGEST_SIZE, PUBLIC_KEY_SIZE, SIGNATURE_SIZE, CAPublicKey, digest
from .encoding import Reader, encode_fields, field as _field, u32, u64
from .errors import (
    BadParent,
    ChainFormatError,
    ElectionStillOpen,
    InvalidConfig,
    StaleValidation,
    UnknownVID,
)

MAGIC = b"CVCHAIN1"
MAX_VOTES_PER_BLOCK = 100


class Reason(str, enum.Enum):
    """Why a vote was refused, or what ``verify_chain`` found wrong."""

    AFTER_DEADLINE = "AfterDeadline"
    MALFORMED = "Malformed"
    DUPLICATE_VID = "DuplicateVID"
    BAD_TOKEN = "BadToken"
    DUPLICATE_VOTER = "DuplicateVoter"
    ALTERATION_FORBIDDEN = "AlterationForbidden"
    BAD_SIGNATURE = "BadSignature"
    BROKEN_LINK = "BrokenLink"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ElectionConfig:
    candidates: tuple[str, ...]
    ca_public: CAPublicKey
    election_end_time: int
    count_end_time: int
    cancel_ballots: bool

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))

    @classmethod
    def from_phases(
        cls,
        candidates: Sequence[str],
        ca_public: CAPublicKey,
        length_phase_one: int,
        length_phase_two: int,
        cancel_ballots: bool,
        start: int = 0,
    ) -> ElectionConfig:
        """Genesis parameters: voting ends ``length_phase_one`` ticks after start."""
        if length_phase_one <= 0 or length_phase_two <= 0:
            raise InvalidConfig("phase lengths must be positive")
        end = start + length_phase_one
        return cls(tuple(candidates), ca_public, end, end + length_phase_two, cancel_ballots)

    def check(self) -> None:
        if not self.candidates:
            raise InvalidConfig("candidate list is empty")
        if any(not name for name in self.candidates):
            raise InvalidConfig("candidate names must be non-empty")
        if len(set(self.candidates)) != len(self.candidates):
            raise InvalidConfig("candidate names must be unique")
        if self.election_end_time < 0:
            raise InvalidConfig("election end time must be non-negative")
        if not self.election_end_time < self.count_end_time:
            raise InvalidConfig("election end time must precede count end time")

    def encode(self) -> bytes:
        names = encode_fields(*(c.encode("utf-8") for c in self.candidates))
        return encode_fields(
            names,
            self.ca_public.to_bytes(),
            u64(self.election_end_time),
            u64(self.count_end_time),
            b"\x01" if self.cancel_ballots else b"\x00",
        )

    @classmethod
    def decode(cls, data: bytes) -> ElectionConfig:
        r = Reader(data)
        names_r = Reader(r.field())
        names = []
        while not names_r.at_end():
            names.append(names_r.field().decode("utf-8"))
        ca = CAPublicKey.from_bytes(r.field())
        end, count_end = r.int(8), r.int(8)
        cancel = r.fixed(1)
        r.done()
        if cancel not in (b"\x00", b"\x01"):
            raise ChainFormatError("cancel flag must be 0 or 1")
        return cls(tuple(names), ca, end, count_end, cancel == b"\x01")


@dataclass(frozen=True)
class GenesisBlock:
    config: ElectionConfig

    @cached_property
    def hash(self) -> bytes:
        return digest(encode_fields(b"genesis", self.config.encode()))


@dataclass(frozen=True)
class VoteEntry:
    vid: bytes
    payload: Payload
    accepted_at: int

    def encode(self) -> bytes:
        return encode_fields(self.vid, self.payload.encode(), u64(self.accepted_at))

    @classmethod
    def decode(cls, data: bytes) -> VoteEntry:
        r = Reader(data)
        vid, payload, at = r.field(), decode_payload(r.field()), r.int(8)
        r.done()
        return cls(vid, payload, at)


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: bytes
    votes: tuple[VoteEntry, ...]
    proposer: str

    def content(self) -> bytes:
        return encode_fields(
            u64(self.height),
            self.prev_hash,
            u32(len(self.votes)),
            *(v.encode() for v in self.votes),
            self.proposer.encode("utf-8"),
        )

    @cached_property
    def hash(self) -> bytes:
        return digest(encode_fields(b"block", self.content()))

    @classmethod
    def decode(cls, data: bytes) -> Block:
        r = Reader(data)
        height = r.int(8)
        prev = r.field()
        n = r.int(4)
        votes = tuple(VoteEntry.decode(r.field()) for _ in range(n))
        proposer = r.field().decode("utf-8")
        r.done()
        return cls(height, prev, votes, proposer)


class VoteIndex:
    """VIDs and plain-ballot owners seen so far; the state admission checks run against."""

    def __init__(self):
        self.vids: dict[bytes, VoteEntry] = {}
        self.ballot_owners: dict[bytes, bytes] = {}

    def admit(self, entry: VoteEntry) -> None:
        self.vids.setdefault(entry.vid, entry)
        if isinstance(entry.payload, Ballot):
            self.ballot_owners.setdefault(entry.payload.voter_pub, entry.vid)

    def discard(self, entry: VoteEntry) -> None:
        if self.vids.get(entry.vid) is entry:
            del self.vids[entry.vid]
        if isinstance(entry.payload, Ballot) and self.ballot_owners.get(entry.payload.voter_pub) == entry.vid:
            del self.ballot_owners[entry.payload.voter_pub]

    def __contains__(self, vid: bytes) -> bool:
        return vid in self.vids

    def __len__(self) -> int:
        return len(self.vids)


def _well_formed(payload: Payload, vid: bytes) -> bool:
    if len(vid) != _ballot.VID_SIZE or len(payload.voter_pub) != PUBLIC_KEY_SIZE:
        return False
    if isinstance(payload, Ballot):
        return len(payload.dc) == DIGEST_SIZE
    if isinstance(payload, AlterationBallot):
        return (
            len(payload.dc_new) == DIGEST_SIZE
            and len(payload.cancelled_vid) == _ballot.VID_SIZE
            and len(payload.signature) == SIGNATURE_SIZE
        )
    return False


def check_vote(
    config: ElectionConfig,
    payload: Payload,
    vid: bytes,
    now: int,
    indexes: Sequence[VoteIndex],
    check_crypto: bool = True,
) -> Reason | None:
    """Admission rule shared by live validation and chain auditing."""
    if now >= config.election_end_time:
        return Reason.AFTER_DEADLINE
    if not _well_formed(payload, vid):
        return Reason.MALFORMED
    if any(vid in idx for idx in indexes):
        return Reason.DUPLICATE_VID
    if isinstance(payload, Ballot):
        if check_crypto and not payload.token_valid(config.ca_public):
            return Reason.BAD_TOKEN
        if any(payload.voter_pub in idx.ballot_owners for idx in indexes):
            return Reason.DUPLICATE_VOTER
        return None
    if not config.cancel_ballots:
        return Reason.ALTERATION_FORBIDDEN
    if check_crypto and not payload.verify():
        return Reason.BAD_SIGNATURE
    return None


class Chain:
    """A node's replica: genesis, blocks and the node-local seal state."""

    def __init__(self, genesis: GenesisBlock | ElectionConfig):
        if isinstance(genesis, ElectionConfig):
            genesis = GenesisBlock(genesis)
        self.genesis = genesis
        self.blocks: list[Block] = []
        self.index = VoteIndex()
        self.unsealed: dict[bytes, int] = {}
        self.early_reveals: dict[bytes, int] = {}  # early openings seen after the vote was already unsealed
        self.claimed_head: bytes | None = None

    @property
    def config(self) -> ElectionConfig:
        return self.genesis.config

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def head_hash(self) -> bytes:
        return self.blocks[-1].hash if self.blocks else self.genesis.hash

    def get(self, vid: bytes) -> VoteEntry | None:
        return self.index.vids.get(vid)

    def __contains__(self, vid: bytes) -> bool:
        return vid in self.index

    def entries(self) -> Iterator[VoteEntry]:
        for block in self.blocks:
            yield from block.votes

    def validate_vote(
        self, payload: Payload, vid: bytes, now: int, pending: VoteIndex | None = None
    ) -> Reason | None:
        """``None`` when the vote is admissible, otherwise the first failing reason."""
        indexes = (self.index,) if pending is None else (self.index, pending)
        return check_vote(self.config, payload, vid, now, indexes)

    def _check_block_votes(self, votes: Iterable[VoteEntry], now: int | None, check_crypto: bool) -> None:
        staged = VoteIndex()
        for entry in votes:
            if now is not None and entry.accepted_at > now:
                raise StaleValidation(f"vote {short(entry.vid)} accepted in the future")
            reason = check_vote(
                self.config, entry.payload, entry.vid, entry.accepted_at, (self.index, staged), check_crypto
            )
            if reason is not None:
                raise StaleValidation(f"vote {short(entry.vid)}: {reason}")
            staged.admit(entry)

    def _push(self, block: Block) -> None:
        self.blocks.append(block)
        for entry in block.votes:
            self.index.admit(entry)

    def append_block(self, votes: Sequence[VoteEntry], proposer: str, now: int) -> Block:
        if len(votes) > MAX_VOTES_PER_BLOCK:
            raise ValueError(f"at most {MAX_VOTES_PER_BLOCK} votes per block")
        self._check_block_votes(votes, now, True)
        block = Block(self.height + 1, self.head_hash, tuple(votes), proposer)
        self._push(block)
        return block

    def add_block(self, block: Block, check_crypto: bool = True) -> None:
        """Validate and append a block produced elsewhere."""
        if block.height != self.height + 1 or block.prev_hash != self.head_hash:
            raise BadParent(f"block {block.height} does not extend height {self.height}")
        if len(block.votes) > MAX_VOTES_PER_BLOCK:
            raise StaleValidation("oversized block")
        self._check_block_votes(block.votes, None, check_crypto)
        self._push(block)

    @classmethod
    def from_blocks(
        cls, genesis: GenesisBlock, blocks: Iterable[Block], trusted: frozenset | set = frozenset()
    ) -> Chain:
        """Rebuild a validated chain; signature checks skipped for ``trusted`` block hashes."""
        chain = cls(genesis)
        for block in blocks:
            chain.add_block(block, check_crypto=block.hash not in trusted)
        return chain

    # -- seal state -------------------------------------------------------

    def _require(self, vid: bytes) -> VoteEntry:
        entry = self.get(vid)
        if entry is None:
            raise UnknownVID(short(vid))
        return entry

    def retrieve_vote(self, vid: bytes, now: int) -> tuple[Payload, bool]:
        """Counting-phase read: unseals on first retrieval and stamps the time."""
        if now <= self.config.election_end_time:
            raise ElectionStillOpen(f"now={now} <= election end {self.config.election_end_time}")
        entry = self._require(vid)
        first = vid not in self.unsealed
        if first:
            self.unsealed[vid] = now
        return entry.payload, first

    def mark_revealed(self, vid: bytes, now: int) -> bool:
        """Record that the vote's opening became public at ``now`` (any phase).

        The unseal timestamp is still written at most once. If the vote was
        already unsealed on time and this reveal predates the election end,
        the reveal is kept in ``early_reveals`` instead.
        """
        self._require(vid)
        if vid not in self.unsealed:
            self.unsealed[vid] = now
            return True
        end = self.config.election_end_time
        if now < end <= self.unsealed[vid] and vid not in self.early_reveals:
            self.early_reveals[vid] = now
            return True
        return False

    def revealed_before_end(self, vid: bytes) -> int | None:
        """Earliest known time the vote was exposed before the election end, if any."""
        t = self.unsealed.get(vid)
        if t is not None and t < self.config.election_end_time:
            return t
        return self.early_reveals.get(vid)

    def return_sealed(self, vid: bytes) -> bool:
        self._require(vid)
        return vid not in self.unsealed

    def return_time_unsealed(self, vid: bytes) -> int | None:
        self._require(vid)
        return self.unsealed.get(vid)

    # -- serialization ----------------------------------------------------

    def encode(self) -> bytes:
        """Consensus bytes: genesis, blocks, head hash (no seal state)."""
        parts = [_field(MAGIC), _field(self.config.encode()), _field(u32(self.height))]
        parts += [_field(b.content()) for b in self.blocks]
        parts.append(_field(self.head_hash))
        return b"".join(parts)

    def encode_file(self) -> bytes:
        annex = b""
        for table in (self.unsealed, self.early_reveals):
            rows = [encode_fields(vid, u64(t)) for vid, t in sorted(table.items())]
            annex += encode_fields(u32(len(rows)), *rows)
        return self.encode() + _field(annex)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.encode_file())

    @classmethod
    def decode_file(cls, data: bytes) -> Chain:
        """Decode without validating; use :func:`verify_chain` on the result."""
        r = Reader(data)
        if r.field() != MAGIC:
            raise ChainFormatError("not a chain file")
        chain = cls(ElectionConfig.decode(r.field()))
        n = r.int(4)
        for _ in range(n):
            block = Block.decode(r.field())
            chain.blocks.append(block)
            for entry in block.votes:
                chain.index.admit(entry)
        chain.claimed_head = r.fixed(DIGEST_SIZE)
        if not r.at_end():
            annex = Reader(r.field())
            for table in (chain.unsealed, chain.early_reveals):
                for _ in range(annex.int(4)):
                    item = Reader(annex.field())
                    vid, t = item.field(), item.int(8)
                    item.done()
                    table[vid] = t
            annex.done()
        r.done()
        return chain

    @classmethod
    def load(cls, path: str | Path) -> Chain:
        return cls.decode_file(Path(path).read_bytes())


def init_chain(config: ElectionConfig) -> Chain:
    config.check()
    return Chain(GenesisBlock(config))


@dataclass(frozen=True)
class Violation:
    kind: Reason
    height: int
    vid: bytes | None = None
    detail: str = ""

    def __str__(self) -> str:
        where = f"block={self.height}"
        if self.vid is not None:
            where += f" vid={self.vid.hex()}"
        return f"{self.kind} {where} {self.detail}".rstrip()


def verify_chain(chain: Chain) -> list[Violation]:
    """Re-check every link and every vote from genesis; violations in chain order."""
    report: list[Violation] = []
    config = chain.config
    try:
        config.check()
    except InvalidConfig as exc:
        report.append(Violation(Reason.MALFORMED, 0, detail=f"genesis: {exc}"))
    state = VoteIndex()
    prev = chain.genesis.hash
    for i, block in enumerate(chain.blocks, 1):
        if block.height != i or block.prev_hash != prev:
            report.append(Violation(Reason.BROKEN_LINK, i, detail="prev_hash/height mismatch"))
        if len(block.votes) > MAX_VOTES_PER_BLOCK:
            report.append(Violation(Reason.MALFORMED, i, detail="oversized block"))
        for entry in block.votes:
            reason = check_vote(config, entry.payload, entry.vid, entry.accepted_at, (state,))
            if reason is None:
                state.admit(entry)
            else:
                report.append(Violation(reason, i, entry.vid))
        prev = block.hash
    if chain.claimed_head is not None and chain.claimed_head != prev:
        report.append(Violation(Reason.BROKEN_LINK, chain.height + 1, detail="head hash mismatch"))
    return report


def verify_chain_bytes(data: bytes) -> tuple[Chain | None, list[Violation]]:
    try:
        chain = Chain.decode_file(data)
    except (ChainFormatError, ValueError) as exc:
        return None, [Violation(Reason.MALFORMED, 0, detail=str(exc))]
    return chain, verify_chain(chain)
