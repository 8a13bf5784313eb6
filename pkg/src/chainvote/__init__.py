"""Blind-token e-voting on a simulated permissioned chain."""

from .audit import AuditReport, audit
from .authority import CentralAuthority, VoterRegistry, load_registry
from .ballot import (
    AlterationBallot,
    Ballot,
    Candidate,
    EligibilityToken,
    OpeningMessage,
    Protest,
    build_alteration_ballot,
    build_ballot,
    build_opening_message,
    prepare_commitment,
)
from .election import ExclusionReason, TallyResult, challenge, count, resolve_chains
from .ledger import Chain, ElectionConfig, Reason, init_chain, verify_chain
from .netsim import SimNetwork, Topology
from .runner import run_election, write_artifacts
from .scenario import ElectionParams, parse_scenario, random_scenario

__all__ = [
    "AlterationBallot",
    "AuditReport",
    "Ballot",
    "Candidate",
    "CentralAuthority",
    "Chain",
    "EligibilityToken",
    "ElectionConfig",
    "ElectionParams",
    "ExclusionReason",
    "OpeningMessage",
    "Protest",
    "Reason",
    "SimNetwork",
    "TallyResult",
    "Topology",
    "VoterRegistry",
    "audit",
    "build_alteration_ballot",
    "build_ballot",
    "build_opening_message",
    "challenge",
    "count",
    "init_chain",
    "load_registry",
    "parse_scenario",
    "prepare_commitment",
    "random_scenario",
    "resolve_chains",
    "run_election",
    "verify_chain",
    "write_artifacts",
]
