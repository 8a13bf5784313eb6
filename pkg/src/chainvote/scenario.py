"""Scenario, config and manifest files.

A scenario is one action per line::

    t=12 actor=alice action=register credential=pw choice=1
    t=20 actor=alice action=vote node=n2
    t=40 actor=alice action=alter choice="protest:none of the above"
    t=130 actor=alice action=open
"""

from __future__ import annotations

import random
import shlex
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ScenarioError
from .netsim import DropWindow, Topology, expand_drops, parse_drops

ACTIONS = {
    "register": {"credential", "choice"},
    "vote": {"node", "forge", "vid", "choice"},
    "alter": {"choice", "node", "target", "badsig", "vid"},
    "open": {"node", "bad", "forger", "vid"},
}


@dataclass(frozen=True)
class Action:
    tick: int
    actor: str
    action: str
    args: dict[str, str] = field(default_factory=dict)
    line: int = 0

    def flag(self, name: str) -> bool:
        return self.args.get(name, "0") not in ("0", "false", "")

    def render(self) -> str:
        parts = [f"t={self.tick}", f"actor={self.actor}", f"action={self.action}"]
        parts += [f"{k}={shlex.quote(v)}" for k, v in self.args.items()]
        return " ".join(parts)


def parse_scenario(text: str) -> list[Action]:
    actions = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno) from None
        fields: dict[str, str] = {}
        for tok in tokens:
            key, sep, value = tok.partition("=")
            if not sep or not key:
                raise ScenarioError(f"expected key=value, got {tok!r}", lineno)
            if key in fields:
                raise ScenarioError(f"repeated key {key!r}", lineno)
            fields[key] = value
        try:
            tick = int(fields.pop("t"))
            actor = fields.pop("actor")
            action = fields.pop("action")
        except KeyError as exc:
            raise ScenarioError(f"missing {exc.args[0]!r}", lineno) from None
        except ValueError:
            raise ScenarioError("tick must be an integer", lineno) from None
        if tick < 0:
            raise ScenarioError("tick must be non-negative", lineno)
        if not actor:
            raise ScenarioError("empty actor", lineno)
        if action not in ACTIONS:
            raise ScenarioError(f"unknown action {action!r}", lineno)
        unknown = set(fields) - ACTIONS[action]
        if unknown:
            raise ScenarioError(f"unknown argument(s) for {action}: {', '.join(sorted(unknown))}", lineno)
        actions.append(Action(tick, actor, action, fields, lineno))
    actions.sort(key=lambda a: (a.tick, a.line))
    return actions


def format_scenario(actions: list[Action]) -> str:
    return "".join(a.render() + "\n" for a in actions)


def parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ScenarioError("expected key=value", lineno)
        out[key.strip()] = value.strip()
    return out


def _bool(value: str) -> bool:
    if value.lower() in ("1", "true", "yes", "on"):
        return True
    if value.lower() in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"not a boolean: {value!r}")


@dataclass
class ElectionParams:
    """Everything an election run needs besides voters and a seed."""

    candidates: list[str]
    phase1: int
    phase2: int
    cancel: bool = True
    ca_bits: int = 2048
    topology: Topology = field(default_factory=Topology.single)
    drops: list[DropWindow] = field(default_factory=list)

    @classmethod
    def load(cls, path: str | Path) -> ElectionParams:
        path = Path(path)
        kv = parse_kv(path.read_text())
        try:
            candidates = [c.strip() for c in kv["candidates"].split(",") if c.strip()]
            params = cls(
                candidates=candidates,
                phase1=int(kv["phase1"]),
                phase2=int(kv["phase2"]),
                cancel=_bool(kv.get("cancel", "true")),
                ca_bits=int(kv.get("ca_bits", "2048")),
            )
            if "topology" in kv:
                params.topology = Topology.parse((path.parent / kv["topology"]).read_text())
            elif "nodes" in kv:
                params.topology = Topology.ring(int(kv["nodes"]))
            if "drops" in kv:
                params.drops = expand_drops(parse_drops((path.parent / kv["drops"]).read_text()), params.topology)
        except KeyError as exc:
            raise ScenarioError(f"config missing {exc.args[0]!r}") from None
        except (ValueError, OSError) as exc:
            raise ScenarioError(f"config: {exc}") from None
        return params


@dataclass
class RunManifest:
    config: Path
    registry: Path
    scenario: Path
    seed: int
    out: Path

    @classmethod
    def load(cls, path: str | Path) -> RunManifest:
        path = Path(path)
        kv = parse_kv(path.read_text())
        try:
            m = cls(
                config=path.parent / kv["config"],
                registry=path.parent / kv["registry"],
                scenario=path.parent / kv["scenario"],
                seed=int(kv.get("seed", "0")),
                out=path.parent / kv.get("out", "out"),
            )
        except KeyError as exc:
            raise ScenarioError(f"manifest missing {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ScenarioError(f"manifest: {exc}") from None
        m.check()
        return m

    def check(self) -> None:
        for p in (self.config, self.registry, self.scenario):
            if not p.is_file():
                raise ScenarioError(f"no such file: {p}")


# -- random scenarios -------------------------------------------------------

INVALID_KINDS = (
    "forged_vote",
    "double_vote",
    "double_register",
    "orphan_alter",
    "foreign_alter",
    "badsig_alter",
    "late_vote",
    "bad_open",
    "forged_open",
    "early_open",
    "unregistered",
    "bad_credential",
    "bad_choice",
)


def random_scenario(
    rng: random.Random,
    n_voters: int,
    n_candidates: int,
    end: int,
    count_end: int,
    nodes: list[str] | None = None,
    invalid_rate: float = 0.05,
    max_alterations: int = 3,
    protest_rate: float = 0.03,
    abstain_rate: float = 0.05,
) -> tuple[list[tuple[str, str]], list[Action], list[str]]:
    """Generate voters, actions and the list of injected invalid kinds.

    Honest voters register, vote, alter up to ``max_alterations`` times and
    open once after the deadline. Each voter independently draws an invalid
    action with probability ``invalid_rate``.
    """
    nodes = nodes or ["n0"]
    voters = [f"v{i:03d}" for i in range(n_voters)]
    registry = [(v, f"pw-{v}") for v in voters]
    actions: list[Action] = []
    injected: list[str] = []
    line = 0

    def add(tick, actor, action, **args):
        nonlocal line
        line += 1
        actions.append(Action(tick, actor, action, {k: str(v) for k, v in args.items()}, line))

    def choice() -> str:
        if rng.random() < protest_rate:
            return f"protest:p{rng.randrange(100)}"
        return str(rng.randrange(n_candidates))

    vote_window = max(4, end * 6 // 10)
    open_lo, open_hi = end + 1, max(end + 2, end + (count_end - end) // 2)
    for v in voters:
        reg_t = rng.randrange(0, max(1, end // 4))
        vote_t = rng.randrange(reg_t + 1, max(reg_t + 2, vote_window))
        add(reg_t, v, "register", credential=f"pw-{v}", choice=choice())
        add(vote_t, v, "vote", node=rng.choice(nodes))
        t = vote_t
        for _ in range(rng.randint(0, max_alterations)):
            t = rng.randrange(t + 1, max(t + 2, end - 1))
            if t >= end - 1:
                break
            add(t, v, "alter", choice=choice(), node=rng.choice(nodes))
        last = t
        if rng.random() >= abstain_rate:
            add(rng.randrange(open_lo, open_hi), v, "open", node=rng.choice(nodes))
        if rng.random() < invalid_rate:
            kind = rng.choice(INVALID_KINDS)
            injected.append(kind)
            node = rng.choice(nodes)
            if kind == "forged_vote":
                add(rng.randrange(0, end - 1), f"x-{v}", "vote", forge=1, choice=choice(), node=node)
            elif kind == "double_vote":
                add(rng.randrange(vote_t + 1, end) if vote_t + 1 < end else end - 1, v, "vote", node=node)
            elif kind == "double_register":
                add(rng.randrange(reg_t + 1, end), v, "register", credential=f"pw-{v}", choice=choice())
            elif kind in ("orphan_alter", "foreign_alter", "badsig_alter"):
                at = min(last + 1, end - 1)
                args = {"choice": choice(), "node": node}
                if kind == "orphan_alter":
                    args["target"] = "prev"
                elif kind == "foreign_alter":
                    others = [o for o in voters if o != v] or [v]
                    args["target"] = "actor:" + rng.choice(others)
                else:
                    args["badsig"] = 1
                add(at, v, "alter", **args)
            elif kind == "late_vote":
                add(rng.randrange(end, open_hi), f"late-{v}", "vote", forge=1, choice=choice(), node=node)
            elif kind == "bad_open":
                add(rng.randrange(open_lo, open_hi), v, "open", bad=1, node=node)
            elif kind == "forged_open":
                add(rng.randrange(open_lo, open_hi), v, "open", forger=rng.choice(voters), node=node)
            elif kind == "early_open":
                add(rng.randrange(last + 1, end) if last + 1 < end else end - 1, v, "open", node=node)
            elif kind == "unregistered":
                add(reg_t, f"u-{v}", "register", credential="nope", choice=choice())
            elif kind == "bad_credential":
                add(reg_t, v, "register", credential="wrong", choice=choice())
            elif kind == "bad_choice":
                add(min(last + 1, end - 1), v, "alter", choice=str(n_candidates + 3), node=node)
    actions.sort(key=lambda a: (a.tick, a.line))
    return registry, actions, injected
