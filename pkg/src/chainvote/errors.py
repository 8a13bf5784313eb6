"""Exception hierarchy shared by every chainvote module."""


class VotingError(Exception):
    """Base class for protocol and harness errors."""


# crypto
class MessageTooLong(VotingError):
    pass


class MalformedBlindedMessage(VotingError):
    pass


class UnblindFailure(VotingError):
    pass


# ballots
class InvalidChoice(VotingError):
    pass


class TokenMismatch(VotingError):
    """The eligibility token certifies a different (public key, commitment) pair."""


class TokenInvalid(VotingError):
    """The eligibility token does not carry a valid CA signature."""


class UnknownVID(VotingError):
    pass


# central authority
class DuplicateIdentity(VotingError):
    pass


class NotEligible(VotingError):
    pass


class BadCredential(VotingError):
    pass


class AlreadyIssued(VotingError):
    pass


class SessionExpired(VotingError):
    pass


# ledger
class InvalidConfig(VotingError):
    pass


class ChainFormatError(VotingError):
    """Raised when chain bytes cannot be decoded."""


class StaleValidation(VotingError):
    pass


class BadParent(VotingError):
    pass


class ElectionStillOpen(VotingError):
    pass


# simulation / harness
class UnknownNode(VotingError):
    pass


class BadTick(VotingError):
    pass


class AdmissionDenied(VotingError):
    pass


class ScenarioError(VotingError):
    """A scenario, config or topology file failed to parse."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class PhaseViolation(VotingError):
    pass
