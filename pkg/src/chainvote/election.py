"""Phase gating, alteration-chain resolution, counting and challenges."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from .ballot import AlterationBallot, Ballot, Candidate, OpeningMessage, Protest
from .errors import ChainFormatError, ElectionStillOpen, UnknownVID
from .ledger import Chain, ElectionConfig


class Phase(str, enum.Enum):
    VOTING = "voting"  # registration (preparation) runs concurrently
    COUNTING = "counting"
    CLOSED = "closed"


def phase_at(config: ElectionConfig, now: int) -> Phase:
    if now < config.election_end_time:
        return Phase.VOTING
    if now < config.count_end_time:
        return Phase.COUNTING
    return Phase.CLOSED


@dataclass(frozen=True)
class PhaseClock:
    config: ElectionConfig
    now: int

    @property
    def phase(self) -> Phase:
        return phase_at(self.config, self.now)


class ExclusionReason(str, enum.Enum):
    NEVER_OPENED = "NeverOpened"
    OPENED_EARLY = "OpenedEarly"
    BAD_OPENING = "BadOpening"
    ORPHAN_ALTERATION = "OrphanAlteration"
    NOT_OWNER = "NotOwner"
    SUPERSEDED = "Superseded"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Resolution:
    standing: dict[bytes, bytes]  # vid -> owner public key, chain order
    excluded: dict[bytes, ExclusionReason]
    links: dict[bytes, list[bytes]]  # owner -> alteration chain ending at the standing vid

    def alteration_chain(self, owner: bytes) -> list[bytes]:
        return list(self.links.get(owner, ()))


def resolve_chains(chain: Chain) -> Resolution:
    """Walk votes in chain order and keep one standing vote per owner.

    An alteration must cancel its owner's current terminal vote, which must
    already be on the chain.
    """
    terminal: dict[bytes, bytes] = {}  # owner -> current standing vid
    links: dict[bytes, list[bytes]] = {}
    owner_of: dict[bytes, bytes] = {}
    excluded: dict[bytes, ExclusionReason] = {}
    for entry in chain.entries():
        payload = entry.payload
        owner = payload.voter_pub
        if entry.vid in owner_of or entry.vid in excluded:
            continue  # duplicate VID; verify_chain reports it
        if isinstance(payload, Ballot):
            if owner in links:
                excluded[entry.vid] = ExclusionReason.NOT_OWNER
                continue
            terminal[owner] = entry.vid
            links[owner] = [entry.vid]
            owner_of[entry.vid] = owner
            continue
        target = payload.cancelled_vid
        target_owner = owner_of.get(target)
        if target_owner is None:
            excluded[entry.vid] = ExclusionReason.ORPHAN_ALTERATION
        elif target_owner != owner:
            excluded[entry.vid] = ExclusionReason.NOT_OWNER
        elif terminal.get(owner) != target:
            excluded[entry.vid] = ExclusionReason.ORPHAN_ALTERATION
        else:
            excluded[target] = ExclusionReason.SUPERSEDED
            terminal[owner] = entry.vid
            links[owner].append(entry.vid)
            owner_of[entry.vid] = owner
    standing_vids = set(terminal.values())
    standing = {e.vid: e.payload.voter_pub for e in chain.entries() if e.vid in standing_vids}
    return Resolution(standing=standing, excluded=excluded, links=links)


@dataclass
class TallyResult:
    candidates: tuple[str, ...]
    per_candidate: dict[int, int]
    protest_count: int = 0
    protests: list[tuple[bytes, str]] = field(default_factory=list)
    excluded: list[tuple[bytes, ExclusionReason]] = field(default_factory=list)
    counted: dict[bytes, int | str] = field(default_factory=dict)

    def counted_total(self) -> int:
        return sum(self.per_candidate.values()) + self.protest_count

    def to_kv(self) -> str:
        lines = []
        for i, name in enumerate(self.candidates):
            lines.append(f"candidate.{i}.name={name}")
            lines.append(f"candidate.{i}.count={self.per_candidate.get(i, 0)}")
        lines.append(f"protest_count={self.protest_count}")
        for vid, choice in self.counted.items():
            lines.append(f"counted={vid.hex()}:{choice}")
        for vid, text in self.protests:
            lines.append(f"protest={vid.hex()}:{text}")
        for vid, reason in self.excluded:
            lines.append(f"excluded={vid.hex()}:{reason}")
        return "".join(line + "\n" for line in lines)

    def to_text(self) -> str:
        width = max(len(c) for c in (*self.candidates, "protest"))
        lines = [f"{name:<{width}}  {self.per_candidate.get(i, 0)}" for i, name in enumerate(self.candidates)]
        lines.append(f"{'protest':<{width}}  {self.protest_count}")
        counts: dict[str, int] = {}
        for _, reason in self.excluded:
            counts[reason.value] = counts.get(reason.value, 0) + 1
        if counts:
            lines.append("excluded: " + ", ".join(f"{k}={v}" for k, v in sorted(counts.items())))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> TallyResult:
        names: dict[int, str] = {}
        counts: dict[int, int] = {}
        result = cls((), {})
        try:
            for raw in text.splitlines():
                if not raw.strip():
                    continue
                key, _, value = raw.partition("=")
                if key.startswith("candidate."):
                    _, idx, attr = key.split(".")
                    if attr == "name":
                        names[int(idx)] = value
                    elif attr == "count":
                        counts[int(idx)] = int(value)
                    else:
                        raise ValueError(key)
                elif key == "protest_count":
                    result.protest_count = int(value)
                elif key == "protest":
                    vid, _, txt = value.partition(":")
                    result.protests.append((bytes.fromhex(vid), txt))
                elif key == "counted":
                    vid, _, choice = value.partition(":")
                    result.counted[bytes.fromhex(vid)] = int(choice) if choice.isdigit() else choice
                elif key == "excluded":
                    vid, _, reason = value.partition(":")
                    result.excluded.append((bytes.fromhex(vid), ExclusionReason(reason)))
                else:
                    raise ValueError(key)
        except ValueError as exc:
            raise ChainFormatError(f"bad tally line: {exc}") from exc
        result.candidates = tuple(names[i] for i in sorted(names))
        result.per_candidate = {i: counts.get(i, 0) for i in range(len(result.candidates))}
        return result

    def comparable(self) -> tuple:
        return (
            self.candidates,
            tuple(sorted(self.per_candidate.items())),
            self.protest_count,
            tuple(self.protests),
            tuple(self.excluded),
            tuple(self.counted.items()),
        )


def _openings_by_vid(openings: Iterable[OpeningMessage]) -> dict[bytes, list[OpeningMessage]]:
    out: dict[bytes, list[OpeningMessage]] = {}
    for msg in openings:
        out.setdefault(msg.vid, []).append(msg)
    return out


def count(chain: Chain, openings: Iterable[OpeningMessage], now: int) -> TallyResult:
    """Tally the standing votes; pure in (chain, openings, now)."""
    config = chain.config
    if now < config.election_end_time:
        raise ElectionStillOpen(f"now={now} < election end {config.election_end_time}")
    resolution = resolve_chains(chain)
    by_vid = _openings_by_vid(openings)
    result = TallyResult(config.candidates, {i: 0 for i in range(len(config.candidates))})
    reasons = dict(resolution.excluded)
    for vid, owner in resolution.standing.items():
        if chain.revealed_before_end(vid) is not None:
            reasons[vid] = ExclusionReason.OPENED_EARLY
            continue
        candidates = by_vid.get(vid)
        if not candidates:
            reasons[vid] = ExclusionReason.NEVER_OPENED
            continue
        dc = chain.get(vid).payload.commitment
        signed = [m for m in candidates if m.signed_by(owner)]
        valid = [m for m in signed if m.matches(dc)]
        if not signed:
            reasons[vid] = ExclusionReason.NOT_OWNER
            continue
        if not valid:
            reasons[vid] = ExclusionReason.BAD_OPENING
            continue
        choice = valid[0].choice
        if isinstance(choice, Protest):
            result.protest_count += 1
            result.protests.append((vid, choice.text))
            result.counted[vid] = str(choice)
        elif isinstance(choice, Candidate) and choice.index < len(config.candidates):
            result.per_candidate[choice.index] += 1
            result.counted[vid] = choice.index
        else:
            reasons[vid] = ExclusionReason.BAD_OPENING
    result.excluded = [(e.vid, reasons[e.vid]) for e in chain.entries() if e.vid in reasons]
    return result


@dataclass(frozen=True)
class ChallengeResult:
    vid: bytes
    sealed: bool
    unsealed_at: int | None
    standing: bool
    reason: ExclusionReason | None

    def to_kv(self) -> str:
        unsealed = "" if self.unsealed_at is None else str(self.unsealed_at)
        reason = "" if self.reason is None else self.reason.value
        return (
            f"vid={self.vid.hex()}\nsealed={str(self.sealed).lower()}\n"
            f"unsealed_at={unsealed}\nstanding={str(self.standing).lower()}\nreason={reason}\n"
        )


def challenge(chain: Chain, vid: bytes, openings: Iterable[OpeningMessage] = ()) -> ChallengeResult:
    """Seal state plus count outcome for one vote; ``standing`` means it was counted."""
    if vid not in chain:
        raise UnknownVID(vid.hex())
    tally = count(chain, openings, chain.config.election_end_time)
    reasons = dict(tally.excluded)
    return ChallengeResult(
        vid=vid,
        sealed=chain.return_sealed(vid),
        unsealed_at=chain.return_time_unsealed(vid),
        standing=vid in tally.counted,
        reason=reasons.get(vid),
    )


def dump_openings(openings: Iterable[OpeningMessage]) -> str:
    return "".join(m.encode().hex() + "\n" for m in openings)


def load_openings(text: str) -> list[OpeningMessage]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(OpeningMessage.decode(bytes.fromhex(line)))
        except ValueError as exc:
            raise ChainFormatError(f"openings line {lineno}: {exc}") from exc
    return out
