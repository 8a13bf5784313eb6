from __future__ import annotations

import random

import pytest

from chainvote.errors import ScenarioError
from chainvote.scenario import ElectionParams, RunManifest, format_scenario, parse_scenario, random_scenario


def test_parse_basic():
    actions = parse_scenario(
        "# comment\n"
        "t=5 actor=bob action=vote node=n1\n"
        't=1 actor=alice action=register credential=pw choice="protest:no thanks"\n'
    )
    assert [(a.tick, a.actor, a.action) for a in actions] == [(1, "alice", "register"), (5, "bob", "vote")]
    assert actions[0].args == {"credential": "pw", "choice": "protest:no thanks"}
    assert actions[1].line == 2


@pytest.mark.parametrize(
    "text, line",
    [
        ("t=1 actor=a action=vote\nt=x actor=a action=vote\n", 2),
        ("t=1 actor=a action=dance\n", 1),
        ("\n\nt=1 action=vote\n", 3),
        ("t=1 actor=a action=vote colour=red\n", 1),
        ("t=1 actor=a action=vote t=2\n", 1),
        ("t=1 actor=a action=vote stray\n", 1),
        ('t=1 actor=a action=vote choice="open\n', 1),
        ("t=-1 actor=a action=vote\n", 1),
    ],
)
def test_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == line


def test_format_round_trip():
    _, actions, _ = random_scenario(random.Random(3), 30, 3, 100, 200, nodes=["n0", "n1"], invalid_rate=0.5)
    again = parse_scenario(format_scenario(actions))
    assert [(a.tick, a.actor, a.action, a.args) for a in again] == [(a.tick, a.actor, a.action, a.args) for a in actions]


def test_random_scenario_is_seeded():
    a = random_scenario(random.Random(9), 40, 4, 100, 200)
    b = random_scenario(random.Random(9), 40, 4, 100, 200)
    assert format_scenario(a[1]) == format_scenario(b[1]) and a[2] == b[2]
    registry, actions, _ = a
    assert len(registry) == 40
    assert all(a.tick < 200 for a in actions)


def test_params_and_manifest_loading(tmp_path):
    (tmp_path / "topo.txt").write_text("a: b:2\nb: c\n")
    (tmp_path / "drops.txt").write_text("partition 3 9 a|b,c\n")
    cfg = tmp_path / "e.cfg"
    cfg.write_text("candidates = X, Y\nphase1 = 50\nphase2 = 40\ncancel = no\ntopology = topo.txt\ndrops = drops.txt\n")
    params = ElectionParams.load(cfg)
    assert (params.candidates, params.phase1, params.phase2, params.cancel) == (["X", "Y"], 50, 40, False)
    assert params.topology.nodes == ["a", "b", "c"]
    assert len(params.drops) == 1

    (tmp_path / "reg.txt").write_text("")
    (tmp_path / "s.txt").write_text("")
    man = tmp_path / "m.txt"
    man.write_text("config = e.cfg\nregistry = reg.txt\nscenario = s.txt\nseed = 4\n")
    m = RunManifest.load(man)
    assert m.seed == 4 and m.out == tmp_path / "out"

    man.write_text("config = e.cfg\nregistry = missing.txt\nscenario = s.txt\n")
    with pytest.raises(ScenarioError):
        RunManifest.load(man)


def test_params_errors(tmp_path):
    cfg = tmp_path / "e.cfg"
    cfg.write_text("candidates = X\nphase1 = 5\n")
    with pytest.raises(ScenarioError):
        ElectionParams.load(cfg)
    cfg.write_text("candidates = X\nphase1 = 5\nphase2 = 5\ncancel = maybe\n")
    with pytest.raises(ScenarioError):
        ElectionParams.load(cfg)
