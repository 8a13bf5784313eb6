"""Auditor: re-verify a chain from genesis and recount it against a published tally."""

from __future__ import annotations

from dataclasses import dataclass, field

from .ballot import OpeningMessage
from .election import TallyResult, count
from .errors import ChainFormatError
from .ledger import Chain, Violation, verify_chain_bytes

TALLY_MISMATCH = "TallyMismatch"


@dataclass
class AuditReport:
    violations: list[Violation] = field(default_factory=list)
    recount: TallyResult | None = None
    failure: str | None = None
    vid: bytes | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failure is None

    def to_kv(self) -> str:
        lines = [f"ok={str(self.ok).lower()}"]
        if not self.ok:
            lines.append(f"failure={self.failure}")
            lines.append(f"vid={self.vid.hex() if self.vid else ''}")
            if self.detail:
                lines.append(f"detail={self.detail}")
        lines.append(f"violations={len(self.violations)}")
        return "".join(line + "\n" for line in lines)


def _status(tally: TallyResult) -> dict[bytes, str]:
    out = {vid: f"counted:{choice}" for vid, choice in tally.counted.items()}
    out.update((vid, f"excluded:{reason}") for vid, reason in tally.excluded)
    return out


def first_divergence(chain: Chain, recount: TallyResult, claimed: TallyResult) -> tuple[bytes | None, str] | None:
    """First VID (chain order) whose outcome differs, else a totals-level difference, else ``None``."""
    mine, theirs = _status(recount), _status(claimed)
    for entry in chain.entries():
        if mine.get(entry.vid) != theirs.get(entry.vid):
            return entry.vid, f"recount {mine.get(entry.vid)} vs published {theirs.get(entry.vid)}"
    extra = [vid for vid in theirs if vid not in mine]
    if extra:
        return extra[0], "published tally lists a vid that is not on chain"
    if recount.candidates != claimed.candidates:
        return None, "candidate list differs"
    for i in range(len(recount.candidates)):
        a, b = recount.per_candidate.get(i, 0), claimed.per_candidate.get(i, 0)
        if a != b:
            return None, f"candidate {i} count {a} vs published {b}"
    if recount.protest_count != claimed.protest_count or recount.protests != claimed.protests:
        return None, f"protest count {recount.protest_count} vs published {claimed.protest_count}"
    return None


def audit(chain_bytes: bytes, openings: list[OpeningMessage], tally_text: str) -> AuditReport:
    chain, violations = verify_chain_bytes(chain_bytes)
    report = AuditReport(violations=violations)
    if violations:
        v = violations[0]
        report.failure, report.vid, report.detail = str(v.kind), v.vid, f"block {v.height} {v.detail}".strip()
        return report
    assert chain is not None
    report.recount = count(chain, openings, chain.config.election_end_time)
    try:
        claimed = TallyResult.from_kv(tally_text)
    except ChainFormatError as exc:
        report.failure, report.detail = TALLY_MISMATCH, f"unreadable tally: {exc}"
        return report
    diff = first_divergence(chain, report.recount, claimed)
    if diff is not None:
        report.failure, (report.vid, report.detail) = TALLY_MISMATCH, diff
    return report
