from __future__ import annotations

import random

import pytest

from chainvote import crypto
from chainvote.ballot import token_message
from chainvote.cli import main
from chainvote.ledger import Chain

from tamper import variants

CFG = "candidates = Alice,Bob\nphase1 = 100\nphase2 = 100\ncancel = true\nca_bits = 1024\nnodes = 2\n"
VOTERS = [("alice", "pw-a"), ("bob", "pw-b"), ("carol", "pw-c")]
SCENARIO = """\
t=1 actor=alice action=register credential=pw-a choice=0
t=2 actor=bob action=register credential=pw-b choice=1
t=3 actor=carol action=register credential=pw-c choice=1
t=5 actor=alice action=vote node=n0
t=6 actor=bob action=vote node=n1 vid=7
t=7 actor=carol action=vote node=n0
t=30 actor=carol action=open node=n1
t=120 actor=alice action=open
t=121 actor=bob action=open node=n1
"""


def _kv(text: str) -> dict[str, str]:
    return dict(line.split("=", 1) for line in text.splitlines() if "=" in line)


@pytest.fixture(scope="module")
def election_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("election")
    (d / "e.cfg").write_text(CFG)
    (d / "voters.txt").write_text("".join(f"{i} {c}\n" for i, c in VOTERS))
    (d / "scenario.txt").write_text(SCENARIO)
    assert main(["ca", "load", "--voters", str(d / "voters.txt"), "--registry", str(d / "reg.txt"),
                 "--ca-key", str(d / "ca.key"), "--ca-bits", "1024"]) == 0
    return d


@pytest.fixture(scope="module")
def run_dir(election_dir):
    d = election_dir
    code = main(["run", "--config", str(d / "e.cfg"), "--registry", str(d / "reg.txt"),
                 "--scenario", str(d / "scenario.txt"), "--seed", "3", "--out", str(d / "out")])
    assert code == 0
    return d / "out"


def test_init(tmp_path, capsys):
    out = tmp_path / "chain.bin"
    code = main(["init", "--candidates", "A,B,C", "--phase1", "100", "--phase2", "100", "--cancel",
                 "--ca-bits", "1024", "--out", str(out), "--format", "kv"])
    assert code == 0
    kv = _kv(capsys.readouterr().out)
    assert (kv["election_end_time"], kv["count_end_time"], kv["cancel"]) == ("100", "200", "true")
    chain = Chain.load(out)
    assert chain.height == 0 and chain.config.candidates == ("A", "B", "C")


def test_init_rejects_bad_input(tmp_path, capsys):
    base = ["init", "--phase2", "100", "--ca-bits", "1024", "--out", str(tmp_path / "c.bin")]
    assert main(base + ["--candidates", "A", "--phase1", "0"]) == 2
    assert "InvalidConfig" in capsys.readouterr().err
    assert main(base + ["--phase1", "10"]) != 0
    assert not (tmp_path / "c.bin").exists()


def test_run_demo(tmp_path, capsys):
    assert main(["run", "--demo", "--out", str(tmp_path / "demo")]) == 0
    text = capsys.readouterr().out
    assert "Alice" in text and "protest" in text
    assert (tmp_path / "demo" / "chain.bin").exists()


def test_run_writes_artifacts_and_excludes_early_opening(run_dir, capsys):
    for name in ("chain.bin", "transcript.log", "tally.kv", "tally.txt", "openings.txt", "ca_transcript.txt"):
        assert (run_dir / name).exists()
    assert main(["count", "--chain", str(run_dir / "chain.bin"), "--openings", str(run_dir / "openings.txt"),
                 "--format", "kv"]) == 0
    kv = _kv(capsys.readouterr().out)
    assert (kv["candidate.0.count"], kv["candidate.1.count"]) == ("1", "1")


def test_late_vote_is_rejected_not_fatal(election_dir, tmp_path):
    d = election_dir
    (tmp_path / "late.txt").write_text(SCENARIO + "t=150 actor=dave action=vote forge=1\n")
    code = main(["run", "--config", str(d / "e.cfg"), "--registry", str(d / "reg.txt"),
                 "--scenario", str(tmp_path / "late.txt"), "--out", str(tmp_path / "out")])
    assert code == 0
    assert "reason=AfterDeadline" in (tmp_path / "out" / "transcript.log").read_text()


def test_run_errors(election_dir, tmp_path, capsys):
    d = election_dir
    args = ["run", "--config", str(d / "e.cfg"), "--registry", str(d / "reg.txt"), "--out", str(tmp_path / "o")]
    (tmp_path / "broken.txt").write_text("t=1 actor=a action=vote\nthis is not a scenario\n")
    assert main(args + ["--scenario", str(tmp_path / "broken.txt")]) == 2
    assert "line 2" in capsys.readouterr().err
    (tmp_path / "phase.txt").write_text("t=500 actor=alice action=vote\n")
    assert main(args + ["--scenario", str(tmp_path / "phase.txt")]) == 3
    assert main(["run", "--config", str(d / "e.cfg")]) == 2


def test_count_before_deadline_is_phase_error(run_dir, capsys):
    assert main(["count", "--chain", str(run_dir / "chain.bin"), "--now", "50"]) == 3
    assert "ElectionStillOpen" in capsys.readouterr().err


def test_audit_passes_on_run_output(run_dir, capsys):
    assert main(["audit", "--chain", str(run_dir / "chain.bin")]) == 0
    assert capsys.readouterr().out.startswith("audit ok")


def test_audit_catches_tampering(run_dir, tmp_path, capsys):
    chain = (run_dir / "chain.bin").read_bytes()
    tally = (run_dir / "tally.kv").read_text()
    found = variants(chain, tally, n_token=2, n_link=1)
    assert {v.expected for v in found} == {"BadToken", "BrokenLink", "TallyMismatch"}
    for v in found:
        (tmp_path / "chain.bin").write_bytes(v.chain)
        (tmp_path / "tally.kv").write_text(v.tally)
        code = main(["audit", "--chain", str(tmp_path / "chain.bin"), "--openings", str(run_dir / "openings.txt"),
                     "--format", "kv"])
        kv = _kv(capsys.readouterr().out)
        assert code == 5, v.name
        assert kv["failure"] == v.expected, v.name


def test_audit_text_names_failure(run_dir, tmp_path, capsys):
    (tmp_path / "chain.bin").write_bytes((run_dir / "chain.bin").read_bytes())
    (tmp_path / "tally.kv").write_text((run_dir / "tally.kv").read_text().replace("count=1", "count=2", 1))
    assert main(["audit", "--chain", str(tmp_path / "chain.bin"), "--openings", str(run_dir / "openings.txt")]) == 5
    assert capsys.readouterr().out.startswith("audit FAILED: TallyMismatch")


def test_challenge(run_dir, capsys):
    chain, openings = str(run_dir / "chain.bin"), str(run_dir / "openings.txt")
    assert main(["challenge", "--chain", chain, "--vid", "7", "--openings", openings]) == 0
    kv = _kv(capsys.readouterr().out)
    assert (kv["sealed"], kv["standing"]) == ("false", "true")

    c = Chain.load(chain)
    # carol opened during voting
    early = next(e.vid for e in c.entries() if c.revealed_before_end(e.vid) is not None)
    assert main(["challenge", "--chain", chain, "--vid", early.hex(), "--openings", openings]) == 0
    kv = _kv(capsys.readouterr().out)
    assert kv["reason"] == "OpenedEarly" and kv["standing"] == "false"

    assert main(["challenge", "--chain", chain, "--vid", "99"]) == 6
    assert main(["challenge", "--chain", chain, "--vid", "zz"]) == 6


def test_ca_flow(election_dir, tmp_path, capsys):
    d = election_dir
    reg = tmp_path / "reg.txt"
    reg.write_text((d / "reg.txt").read_text())
    assert main(["ca", "auth", "--registry", str(reg), "--identity", "alice", "--credential", "pw-a"]) == 0
    assert main(["ca", "auth", "--registry", str(reg), "--identity", "alice", "--credential", "nope"]) == 1
    capsys.readouterr()

    key = crypto.CAPrivateKey.from_bytes(bytes.fromhex((d / "ca.key").read_text().strip()))
    voter = crypto.generate_voter_keys(bytes(32))
    msg = token_message(voter.public, bytes(32))
    state = crypto.blind(msg, key.public, random.Random(0))
    issue = ["ca", "issue", "--registry", str(reg), "--ca-key", str(d / "ca.key"), "--identity", "alice",
             "--credential", "pw-a", "--blinded", state.blinded_message.hex(), "--format", "kv"]
    assert main(issue) == 0
    kv = _kv(capsys.readouterr().out)
    sig = crypto.unblind(bytes.fromhex(kv["blind_signature"]), state, key.public)
    assert crypto.verify_ca(key.public, msg, sig)
    assert "pw-a" not in reg.read_text()

    assert main(issue) == 1
    assert _kv(capsys.readouterr().out)["error"] == "AlreadyIssued"


def test_chain_inspect_and_verify(run_dir, tmp_path, capsys):
    chain = str(run_dir / "chain.bin")
    assert main(["chain", "inspect", "--chain", chain]) == 0
    out = capsys.readouterr().out
    assert "height=" in out and "kind=ballot" in out
    assert main(["chain", "verify", "--chain", chain]) == 0
    capsys.readouterr()
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"garbage")
    assert main(["chain", "verify", "--chain", str(bad)]) == 5
    assert "Malformed" in capsys.readouterr().out


def test_help_exits_zero():
    assert main(["--help"]) == 0
