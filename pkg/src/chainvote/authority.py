"""The central authority: voter registry, authentication and token issuance."""

from __future__ import annotations

import hashlib
import hmac
import random
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable

from . import crypto
from .crypto import CAKeyPair
from .errors import (
    AlreadyIssued,
    BadCredential,
    DuplicateIdentity,
    NotEligible,
    ScenarioError,
    SessionExpired,
)

CredentialCheck = Callable[[str], bool]


def hash_credential(credential: str, rng: random.Random | None = None) -> str:
    salt = crypto.random_bytes(rng, 16)
    h = hashlib.sha256(salt + credential.encode()).hexdigest()
    return f"sha256:{salt.hex()}:{h}"


@dataclass(frozen=True)
class SaltedHash:
    """Default credential check: salted SHA-256 compare."""

    stored: str

    def __call__(self, credential: str) -> bool:
        try:
            scheme, salt, expected = self.stored.split(":")
        except ValueError:
            return False
        if scheme != "sha256":
            return False
        h = hashlib.sha256(bytes.fromhex(salt) + credential.encode()).hexdigest()
        return hmac.compare_digest(h, expected)


@dataclass
class RegistryEntry:
    check: CredentialCheck
    token_issued: bool = False


@dataclass
class VoterRegistry:
    entries: dict[str, RegistryEntry] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def issued_count(self) -> int:
        return sum(e.token_issued for e in self.entries.values())

    def dumps(self) -> str:
        lines = []
        for identity, entry in self.entries.items():
            if not isinstance(entry.check, SaltedHash):
                raise TypeError(f"credential check for {identity!r} is not persistable")
            lines.append(f"{identity}\t{entry.check.stored}\t{int(entry.token_issued)}")
        return "".join(line + "\n" for line in lines)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def loads(cls, text: str) -> VoterRegistry:
        reg = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3 or parts[2] not in ("0", "1"):
                raise ScenarioError("expected 'identity<TAB>credential-hash<TAB>0|1'", lineno)
            identity, stored, issued = parts
            if identity in reg.entries:
                raise DuplicateIdentity(identity)
            reg.entries[identity] = RegistryEntry(SaltedHash(stored), issued == "1")
        return reg

    @classmethod
    def load(cls, path: str | Path) -> VoterRegistry:
        return cls.loads(Path(path).read_text())


def load_registry(
    entries: Iterable[tuple[str, str | CredentialCheck]], rng: random.Random | None = None
) -> VoterRegistry:
    """Build a registry from ``(identity, credential)`` pairs.

    A string credential is stored salted and hashed; a callable is used
    as-is as the credential check.
    """
    reg = VoterRegistry()
    for identity, cred in entries:
        if identity in reg.entries:
            raise DuplicateIdentity(identity)
        check = cred if callable(cred) else SaltedHash(hash_credential(cred, rng))
        reg.entries[identity] = RegistryEntry(check)
    return reg


@dataclass(frozen=True)
class AuthSession:
    voter_identity: str
    expires_at: int
    session_id: int


@dataclass(frozen=True)
class IssuanceRecord:
    """Everything the CA learns during one issuance."""

    identity: str
    blinded_message: bytes
    tick: int


class CentralAuthority:
    """Registrar that blind-signs exactly one eligibility token per voter.

    Sessions are single-use and expire at ``session_deadline`` (normally the
    end of the voting phase).
    """

    def __init__(self, keys: CAKeyPair, registry: VoterRegistry, session_deadline: int | None = None):
        self.keys = keys
        self.registry = registry
        self.session_deadline = session_deadline
        self.transcript: list[IssuanceRecord] = []
        self._sessions: dict[int, AuthSession] = {}
        self._next_session = 0
        self._lock = threading.Lock()

    @property
    def public(self) -> crypto.CAPublicKey:
        return self.keys.public

    def authenticate(self, identity: str, credential: str, now: int = 0, ttl: int | None = None) -> AuthSession:
        entry = self.registry.entries.get(identity)
        if entry is None:
            raise NotEligible(identity)
        if not entry.check(credential):
            raise BadCredential(identity)
        expires = self.session_deadline
        if ttl is not None:
            expires = now + ttl if expires is None else min(expires, now + ttl)
        if expires is None:
            expires = now + 1
        with self._lock:
            session = AuthSession(identity, expires, self._next_session)
            self._next_session += 1
            self._sessions[session.session_id] = session
        return session

    def issue_token(self, session: AuthSession, blinded_message: bytes, now: int = 0) -> bytes:
        with self._lock:
            if self._sessions.get(session.session_id) != session or now >= session.expires_at:
                raise SessionExpired(session.voter_identity)
            entry = self.registry.entries[session.voter_identity]
            if entry.token_issued:
                raise AlreadyIssued(session.voter_identity)
            blind_sig = crypto.blind_sign(self.keys.private, blinded_message)
            entry.token_issued = True
            del self._sessions[session.session_id]
            self.transcript.append(IssuanceRecord(session.voter_identity, blinded_message, now))
        return blind_sig

    def registry_report(self) -> tuple[int, int]:
        with self._lock:
            return len(self.registry), self.registry.issued_count()
