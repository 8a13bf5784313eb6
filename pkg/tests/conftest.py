from __future__ import annotations

import random
from dataclasses import dataclass, field

import pytest

from chainvote import crypto
from chainvote.ballot import (
    Candidate,
    EligibilityToken,
    build_alteration_ballot,
    build_ballot,
    build_opening_message,
    prepare_commitment,
    token_message,
    vid_from_int,
)
from chainvote.ledger import Chain, ElectionConfig, VoteEntry, init_chain

TEST_CA_BITS = 1024


@pytest.fixture(scope="session")
def ca_keys():
    return crypto.generate_ca_keys(crypto.derive_seed(1, "test-ca"), TEST_CA_BITS)


@pytest.fixture(scope="session")
def other_ca_keys():
    return crypto.generate_ca_keys(crypto.derive_seed(2, "test-ca"), TEST_CA_BITS)


def issue_token(ca_keys, voter_pub: bytes, dc: bytes, rng: random.Random) -> EligibilityToken:
    state = crypto.blind(token_message(voter_pub, dc), ca_keys.public, rng)
    sig = crypto.unblind(crypto.blind_sign(ca_keys.private, state.blinded_message), state, ca_keys.public)
    return EligibilityToken(voter_pub, dc, sig)


@dataclass
class FixtureVoter:
    keys: crypto.SigningKeyPair
    secrets: dict[bytes, tuple[object, bytes]] = field(default_factory=dict)


class ElectionFixture:
    """Builds hand-crafted chains: one vote per block, VIDs given as integers."""

    def __init__(self, ca_keys, candidates=("A", "B", "C"), end=100, count_end=200, cancel=True, seed=0):
        self.ca = ca_keys
        self.config = ElectionConfig(tuple(candidates), ca_keys.public, end, count_end, cancel)
        self.chain: Chain = init_chain(self.config)
        self.rng = random.Random(seed)
        self.voters: dict[str, FixtureVoter] = {}
        self.now = 1

    def voter(self, name: str) -> FixtureVoter:
        if name not in self.voters:
            seed = crypto.derive_seed(name, "fixture-voter")
            self.voters[name] = FixtureVoter(crypto.generate_voter_keys(seed))
        return self.voters[name]

    def _push(self, vid: bytes, payload) -> None:
        self.chain.append_block([VoteEntry(vid, payload, self.now)], "n0", self.now)
        self.now += 1

    def ballot(self, name: str, vid: int, choice: int | object = 0):
        v = self.voter(name)
        choice = Candidate(choice) if isinstance(choice, int) else choice
        dc, opening = prepare_commitment(choice, len(self.config.candidates), self.rng)
        token = issue_token(self.ca, v.keys.public, dc, self.rng)
        payload = build_ballot(v.keys.public, dc, token, self.ca.public)
        v.secrets[vid_from_int(vid)] = (choice, opening)
        self._push(vid_from_int(vid), payload)
        return payload

    def alter(self, name: str, vid: int, cancels: int, choice: int | object = 0):
        v = self.voter(name)
        choice = Candidate(choice) if isinstance(choice, int) else choice
        alt, opening = build_alteration_ballot(
            v.keys, vid_from_int(cancels), choice, len(self.config.candidates), self.rng
        )
        v.secrets[vid_from_int(vid)] = (choice, opening)
        self._push(vid_from_int(vid), alt)
        return alt

    def opening(self, name: str, vid: int):
        v = self.voter(name)
        choice, opening = v.secrets[vid_from_int(vid)]
        return build_opening_message(v.keys, vid_from_int(vid), choice, opening)

    def all_openings(self):
        return [
            build_opening_message(v.keys, vid, choice, opening)
            for v in self.voters.values()
            for vid, (choice, opening) in v.secrets.items()
        ]


@pytest.fixture
def election(ca_keys):
    return ElectionFixture(ca_keys)


def pytest_terminal_summary(terminalreporter):
    from criteria import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
