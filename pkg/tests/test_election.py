from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainvote.ballot import Candidate, Protest, build_opening_message, vid_from_int
from chainvote.election import (
    ExclusionReason,
    Phase,
    TallyResult,
    challenge,
    count,
    dump_openings,
    load_openings,
    phase_at,
    resolve_chains,
)
from chainvote.errors import ElectionStillOpen, UnknownVID
from chainvote.ledger import Block, VoteEntry

from conftest import ElectionFixture

V = vid_from_int
X = ExclusionReason


def _unseal_all(fx, at=150):
    for entry in fx.chain.entries():
        fx.chain.retrieve_vote(entry.vid, at)


def test_phases(election):
    cfg = election.config
    assert phase_at(cfg, 0) == Phase.VOTING
    assert phase_at(cfg, 99) == Phase.VOTING
    assert phase_at(cfg, 100) == Phase.COUNTING
    assert phase_at(cfg, 199) == Phase.COUNTING
    assert phase_at(cfg, 200) == Phase.CLOSED


def test_alteration_chain_22_29_45(election):
    election.ballot("vi", 22, 0)
    election.alter("vi", 29, 22, 1)
    election.alter("vi", 45, 29, 2)
    res = resolve_chains(election.chain)
    assert set(res.standing) == {V(45)}
    assert res.excluded == {V(22): X.SUPERSEDED, V(29): X.SUPERSEDED}
    assert res.alteration_chain(election.voter("vi").keys.public) == [V(22), V(29), V(45)]

    _unseal_all(election)
    tally = count(election.chain, election.all_openings(), 150)
    assert tally.per_candidate == {0: 0, 1: 0, 2: 1}
    assert tally.counted == {V(45): 2}


def test_single_ballot(election):
    election.ballot("a", 7)
    res = resolve_chains(election.chain)
    assert set(res.standing) == {V(7)} and res.excluded == {}


def test_orphan_alteration_on_five_vote_fixture(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    election.ballot("c", 3, 2)
    election.alter("a", 4, 1, 1)
    election.alter("b", 5, 99, 0)
    res = resolve_chains(election.chain)
    # frozen from a hand walk of the five votes in chain order
    assert list(res.standing) == [V(2), V(3), V(4)]
    assert res.excluded == {V(1): X.SUPERSEDED, V(5): X.ORPHAN_ALTERATION}


def test_alteration_of_superseded_vote_is_orphan(election):
    election.ballot("a", 22, 0)
    election.alter("a", 29, 22, 1)
    election.alter("a", 30, 22, 2)
    res = resolve_chains(election.chain)
    assert set(res.standing) == {V(29)}
    assert res.excluded[V(30)] == X.ORPHAN_ALTERATION


def test_alteration_of_someone_elses_vote(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    election.alter("b", 3, 1, 2)
    res = resolve_chains(election.chain)
    assert set(res.standing) == {V(1), V(2)}
    assert res.excluded == {V(3): X.NOT_OWNER}


def test_alteration_before_target_is_orphan(election):
    election.alter("a", 5, 6, 0)
    election.ballot("a", 6, 1)
    res = resolve_chains(election.chain)
    assert set(res.standing) == {V(6)}
    assert res.excluded == {V(5): X.ORPHAN_ALTERATION}


def test_duplicate_ballot_in_raw_chain(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    # splice in a second plain ballot from "a" without admission checks
    first = election.chain.get(V(1)).payload
    raw = Block(election.chain.height + 1, election.chain.head_hash, (VoteEntry(V(3), first, 9),), "n0")
    election.chain.blocks.append(raw)
    res = resolve_chains(election.chain)
    assert res.excluded == {V(3): X.NOT_OWNER}


def test_count_three_voters(election):
    for name, vid, choice in (("a", 1, 0), ("b", 2, 1), ("c", 3, 0)):
        election.ballot(name, vid, choice)
    _unseal_all(election)
    tally = count(election.chain, election.all_openings(), 150)
    assert tally.per_candidate == {0: 2, 1: 1, 2: 0}
    assert tally.excluded == [] and tally.protest_count == 0


def test_count_empty(election):
    tally = count(election.chain, [], 100)
    assert tally.per_candidate == {0: 0, 1: 0, 2: 0}
    assert tally.excluded == [] and tally.counted_total() == 0


def test_count_before_deadline_errors(election):
    election.ballot("a", 1)
    for now in (0, 50, 99):
        with pytest.raises(ElectionStillOpen):
            count(election.chain, election.all_openings(), now)


def test_opened_early_and_never_opened(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    election.ballot("c", 3, 2)
    election.chain.mark_revealed(V(1), 90)
    election.chain.retrieve_vote(V(2), 150)
    openings = [election.opening("a", 1), election.opening("b", 2)]
    tally = count(election.chain, openings, 150)
    assert tally.per_candidate == {0: 0, 1: 1, 2: 0}
    assert dict(tally.excluded) == {V(1): X.OPENED_EARLY, V(3): X.NEVER_OPENED}


def test_bad_and_foreign_openings(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    _unseal_all(election)
    a_keys = election.voter("a").keys
    choice, opening = election.voter("a").secrets[V(1)]
    bad = build_opening_message(a_keys, V(1), Candidate(2), opening)
    foreign = build_opening_message(a_keys, V(2), *election.voter("b").secrets[V(2)])
    tally = count(election.chain, [bad, foreign], 150)
    assert dict(tally.excluded) == {V(1): X.BAD_OPENING, V(2): X.NOT_OWNER}
    # an honest opening alongside a bad one still counts
    tally = count(election.chain, [bad, build_opening_message(a_keys, V(1), choice, opening)], 150)
    assert tally.counted == {V(1): 0}


def test_protest_votes(election):
    election.ballot("a", 1, Protest("none of them"))
    election.ballot("b", 2, 1)
    _unseal_all(election)
    tally = count(election.chain, election.all_openings(), 150)
    assert tally.protest_count == 1
    assert tally.protests == [(V(1), "none of them")]
    assert tally.counted_total() == 2


def test_count_is_pure(election):
    election.ballot("a", 1, 0)
    _unseal_all(election)
    before = election.chain.encode_file()
    t1 = count(election.chain, election.all_openings(), 150)
    t2 = count(election.chain, election.all_openings(), 150)
    assert t1 == t2
    assert election.chain.encode_file() == before


def test_challenge(election):
    election.ballot("a", 1, 0)
    election.ballot("b", 2, 1)
    election.chain.mark_revealed(V(1), 90)
    election.chain.retrieve_vote(V(2), 150)
    openings = election.all_openings()
    early = challenge(election.chain, V(1), openings)
    assert (early.sealed, early.unsealed_at, early.standing, early.reason) == (False, 90, False, X.OPENED_EARLY)
    ok = challenge(election.chain, V(2), openings)
    assert (ok.sealed, ok.unsealed_at, ok.standing, ok.reason) == (False, 150, True, None)
    assert "standing=true" in ok.to_kv()
    assert "reason=OpenedEarly" in early.to_kv()
    with pytest.raises(UnknownVID):
        challenge(election.chain, V(3), openings)


def test_tally_kv_round_trip(election):
    election.ballot("a", 1, Protest("x"))
    election.ballot("b", 2, 1)
    election.ballot("c", 3, 2)
    election.chain.retrieve_vote(V(1), 150)
    election.chain.retrieve_vote(V(2), 150)
    tally = count(election.chain, election.all_openings(), 150)
    back = TallyResult.from_kv(tally.to_kv())
    assert back.comparable() == tally.comparable()
    assert "protest" in tally.to_text()


def test_openings_file_round_trip(election):
    election.ballot("a", 1, Protest("p q"))
    election.ballot("b", 2, 1)
    openings = election.all_openings()
    assert load_openings(dump_openings(openings)) == openings


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=4), st.integers(0, 2))
def test_forgiveness_last_choice_counts(ca_keys, choices, bystander):
    fx = ElectionFixture(ca_keys, seed=len(choices))
    fx.ballot("v", 10, choices[0])
    fx.ballot("w", 11, bystander)
    prev = 10
    for i, choice in enumerate(choices[1:], start=12):
        fx.alter("v", i, prev, choice)
        prev = i
    _unseal_all(fx)
    tally = count(fx.chain, fx.all_openings(), 150)
    assert tally.counted[V(prev)] == choices[-1]
    assert sum(tally.per_candidate.values()) == 2
    for vid in tally.counted:
        assert challenge(fx.chain, vid, fx.all_openings()).standing
