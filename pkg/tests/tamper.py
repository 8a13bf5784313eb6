"""Single-byte tampering of published election artifacts."""

from __future__ import annotations

import re
from dataclasses import dataclass

from chainvote.ledger import Chain


@dataclass(frozen=True)
class Variant:
    name: str
    chain: bytes
    tally: str
    expected: str  # first failure class the auditor must report


def _flip(data: bytes, at: int) -> bytes:
    b = bytearray(data)
    b[at] ^= 0x01
    return bytes(b)


def _bump_digit(text: str, pattern: str) -> str:
    """Change the digit captured by ``pattern`` (first match) to a different digit."""
    m = re.search(pattern, text, flags=re.M)
    if m is None:
        raise ValueError(f"pattern {pattern!r} not found")
    i = m.start(1)
    digit = "1" if text[i] != "1" else "2"
    return text[:i] + digit + text[i + 1 :]


def variants(chain_bytes: bytes, tally_text: str, n_token: int = 4, n_link: int = 3) -> list[Variant]:
    chain = Chain.decode_file(chain_bytes)
    out: list[Variant] = []

    ballots = [e for e in chain.entries() if e.payload.kind == "ballot"]
    for entry in ballots[:n_token]:
        sig = entry.payload.token.signature
        at = chain_bytes.find(sig)
        assert at >= 0 and chain_bytes.find(sig, at + 1) < 0
        out.append(Variant(f"token:{entry.vid.hex()[:8]}", _flip(chain_bytes, at + len(sig) // 2), tally_text, "BadToken"))

    for block in chain.blocks[1 : 1 + n_link]:
        at = chain_bytes.find(block.prev_hash)
        assert at >= 0
        out.append(Variant(f"link:block{block.height}", _flip(chain_bytes, at + 7), tally_text, "BrokenLink"))

    edits = [
        ("tally:candidate-count", r"^candidate\.0\.count=(\d)"),
        ("tally:counted-choice", r"^counted=[0-9a-f]{64}:(\d)$"),
        ("tally:protest-count", r"^protest_count=(\d)"),
    ]
    for name, pattern in edits:
        out.append(Variant(name, chain_bytes, _bump_digit(tally_text, pattern), "TallyMismatch"))
    return out
