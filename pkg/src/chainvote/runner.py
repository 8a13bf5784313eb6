"""End-to-end election runs: voter clients, the CA and the simulated network."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto
from .authority import CentralAuthority, VoterRegistry, load_registry
from .ballot import (
    Ballot,
    Candidate,
    Choice,
    EligibilityToken,
    build_alteration_ballot,
    build_ballot,
    build_opening_message,
    check_choice,
    new_vid,
    parse_choice,
    prepare_commitment,
    token_message,
    vid_from_int,
)
from .crypto import SigningKeyPair, derive_seed, seeded_rng
from .election import TallyResult, dump_openings
from .errors import (
    AlreadyIssued,
    BadCredential,
    InvalidChoice,
    NotEligible,
    PhaseViolation,
    ScenarioError,
    SessionExpired,
)
from .ledger import Chain, ElectionConfig
from .netsim import SimNetwork, Transcript, VoteMessage
from .scenario import Action, ElectionParams

SETTLE_TICKS = 5_000


@dataclass
class VoterClient:
    """Client-side secrets of one actor; never shared with the CA or the network."""

    actor: str
    keys: SigningKeyPair | None = None
    dc: bytes | None = None
    opening: bytes | None = None
    choice: Choice | None = None
    token: EligibilityToken | None = None
    current: bytes | None = None
    history: list[bytes] = field(default_factory=list)
    secrets: dict[bytes, tuple[Choice, bytes]] = field(default_factory=dict)
    key_attempts: int = 0


@dataclass
class RunResult:
    config: ElectionConfig
    chain: Chain
    tally: TallyResult
    transcript: Transcript
    network: SimNetwork
    authority: CentralAuthority
    clients: dict[str, VoterClient]
    converged: bool
    settled: bool

    def openings(self):
        return self.network.nodes[self.network.topology.nodes[0]].all_openings()


def _flip(data: bytes, bit: int = 0) -> bytes:
    b = bytearray(data)
    b[bit // 8 % len(b)] ^= 1 << (bit % 8)
    return bytes(b)


class ElectionRun:
    """Drives scripted actions against a CA and a :class:`SimNetwork`."""

    def __init__(self, params: ElectionParams, registry: VoterRegistry, seed: int | str | bytes):
        self.params = params
        self.seed = seed
        ca_keys = crypto.generate_ca_keys(derive_seed(seed, "ca"), params.ca_bits)
        self.config = ElectionConfig.from_phases(
            params.candidates, ca_keys.public, params.phase1, params.phase2, params.cancel
        )
        self.config.check()
        self.authority = CentralAuthority(ca_keys, registry, session_deadline=self.config.election_end_time)
        self.transcript = Transcript()
        self.network = SimNetwork(self.config, params.topology, seed, params.drops, self.transcript)
        self.clients: dict[str, VoterClient] = {}

    @property
    def n_candidates(self) -> int:
        return len(self.config.candidates)

    def _client(self, actor: str) -> VoterClient:
        return self.clients.setdefault(actor, VoterClient(actor))

    def _new_keys(self, client: VoterClient) -> SigningKeyPair:
        client.key_attempts += 1
        return crypto.generate_voter_keys(derive_seed(self.seed, f"voter:{client.actor}:{client.key_attempts}"))

    def _log(self, action: Action, event: str, **fields) -> None:
        self.transcript.log(action.tick, "client", event, actor=action.actor, line=action.line, **fields)

    def _node(self, action: Action) -> str:
        return action.args.get("node", self.network.topology.nodes[0])

    def _vid(self, action: Action, rng: random.Random) -> bytes:
        if "vid" in action.args:
            return vid_from_int(int(action.args["vid"]))
        return new_vid(rng)

    def _choice(self, action: Action) -> Choice:
        choice = parse_choice(action.args.get("choice", "0"))
        check_choice(choice, self.n_candidates)
        return choice

    def do_register(self, action: Action, rng: random.Random) -> None:
        client = self._client(action.actor)
        try:
            session = self.authority.authenticate(action.actor, action.args.get("credential", ""), action.tick)
            choice = self._choice(action)
        except (NotEligible, BadCredential, InvalidChoice) as exc:
            self._log(action, "register-fail", reason=type(exc).__name__)
            return
        keys = self._new_keys(client)
        dc, opening = prepare_commitment(choice, self.n_candidates, rng)
        state = crypto.blind(token_message(keys.public, dc), self.authority.public, rng)
        try:
            blind_sig = self.authority.issue_token(session, state.blinded_message, action.tick)
        except (AlreadyIssued, SessionExpired) as exc:
            self._log(action, "register-fail", reason=type(exc).__name__)
            return
        sig = crypto.unblind(blind_sig, state, self.authority.public)
        client.keys, client.dc, client.opening, client.choice = keys, dc, opening, choice
        client.token = EligibilityToken(keys.public, dc, sig)
        self._log(action, "token-issued")

    def do_vote(self, action: Action, rng: random.Random) -> None:
        client = self._client(action.actor)
        forge = action.flag("forge")
        if client.token is None:
            if not forge:
                self._log(action, "client-error", reason="NoToken")
                return
            try:
                choice = self._choice(action)
            except InvalidChoice:
                choice = Candidate(0)
            client.keys = client.keys or self._new_keys(client)
            client.choice = choice
            client.dc, client.opening = prepare_commitment(choice, self.n_candidates, rng)
            fake = crypto.random_bytes(rng, self.config.ca_public.size)
            token = EligibilityToken(client.keys.public, client.dc, fake)
        else:
            token = client.token
            if forge:
                token = EligibilityToken(token.voter_pub, token.dc, _flip(token.signature, rng.randrange(64)))
        if forge:
            ballot = Ballot(client.keys.public, client.dc, token)
        else:
            ballot = build_ballot(client.keys.public, client.dc, token, self.config.ca_public)
        vid = self._vid(action, rng)
        client.secrets[vid] = (client.choice, client.opening)
        if client.current is None:
            client.current = vid
            client.history.append(vid)
        self._log(action, "submit", kind="ballot", vid=vid.hex())
        self.network.inject(self._node(action), VoteMessage(vid, ballot), action.tick)

    def _target(self, client: VoterClient, ref: str | None, rng: random.Random) -> tuple[bytes, bool]:
        if ref is None or ref == "current":
            return client.current, True
        if ref == "prev":
            if len(client.history) >= 2:
                return client.history[-2], False
            return new_vid(rng), False
        if ref.startswith("actor:"):
            other = self.clients.get(ref[len("actor:") :])
            if other is not None and other.current is not None:
                return other.current, other is client
            return new_vid(rng), False
        if ref.startswith("vid:"):
            return vid_from_int(int(ref[len("vid:") :])), False
        raise ScenarioError(f"bad alter target {ref!r}", None)

    def do_alter(self, action: Action, rng: random.Random) -> None:
        client = self._client(action.actor)
        if client.keys is None or client.current is None:
            self._log(action, "client-error", reason="NoVote")
            return
        try:
            choice = self._choice(action)
        except InvalidChoice:
            self._log(action, "client-error", reason="InvalidChoice")
            return
        target, honest = self._target(client, action.args.get("target"), rng)
        alt, opening = build_alteration_ballot(client.keys, target, choice, self.n_candidates, rng)
        if action.flag("badsig"):
            alt = type(alt)(alt.cancelled_vid, alt.voter_pub, alt.dc_new, _flip(alt.signature, rng.randrange(512)))
            honest = False
        vid = self._vid(action, rng)
        client.secrets[vid] = (choice, opening)
        if honest:
            client.current = vid
            client.history.append(vid)
        self._log(action, "submit", kind="alteration", vid=vid.hex(), target=target.hex())
        self.network.inject(self._node(action), VoteMessage(vid, alt), action.tick)

    def do_open(self, action: Action, rng: random.Random) -> None:
        client = self._client(action.actor)
        vid = vid_from_int(int(action.args["vid"])) if "vid" in action.args else client.current
        if client.keys is None or vid not in client.secrets:
            self._log(action, "client-error", reason="NoVote")
            return
        choice, opening = client.secrets[vid]
        if action.flag("bad"):
            opening = crypto.random_bytes(rng, crypto.OPENING_SIZE)
        signer = client.keys
        if "forger" in action.args:
            other = self.clients.get(action.args["forger"])
            signer = other.keys if other is not None and other.keys is not None else self._new_keys(client)
        msg = build_opening_message(signer, vid, choice, opening)
        self._log(action, "open", vid=vid.hex())
        self.network.inject(self._node(action), msg, action.tick)

    def check_actions(self, actions: list[Action]) -> None:
        for a in actions:
            node = a.args.get("node")
            if node is not None and node not in self.network.nodes:
                raise ScenarioError(f"unknown node {node!r}", a.line)
            if a.tick >= self.config.count_end_time:
                raise PhaseViolation(f"line {a.line}: tick {a.tick} is after the count end")
            if "vid" in a.args and not a.args["vid"].isdigit():
                raise ScenarioError("vid must be a non-negative integer", a.line)

    def run(self, actions: list[Action]) -> RunResult:
        self.check_actions(actions)
        by_tick: dict[int, list[Action]] = {}
        for a in actions:
            by_tick.setdefault(a.tick, []).append(a)
        handlers = {
            "register": self.do_register,
            "vote": self.do_vote,
            "alter": self.do_alter,
            "open": self.do_open,
        }
        net = self.network
        while net.clock < self.config.count_end_time:
            for a in by_tick.get(net.clock, ()):
                handlers[a.action](a, seeded_rng(self.seed, f"action:{a.line}"))
            net.step()
        settled = net.settle(SETTLE_TICKS)
        converged = net.converged()
        first = net.nodes[net.topology.nodes[0]]
        issued = self.authority.registry_report()
        self.transcript.log(net.clock, "ca", "report", eligible=issued[0], issued=issued[1])
        return RunResult(
            config=self.config,
            chain=first.chain,
            tally=first.tally(net.clock),
            transcript=self.transcript,
            network=net,
            authority=self.authority,
            clients=self.clients,
            converged=converged,
            settled=settled,
        )


def run_election(
    actions: list[Action],
    params: ElectionParams,
    registry: VoterRegistry | list[tuple[str, str]],
    seed: int | str | bytes = 0,
) -> RunResult:
    """Run a scripted election; deterministic for a fixed seed."""
    if not isinstance(registry, VoterRegistry):
        registry = load_registry(registry, seeded_rng(seed, "registry"))
    return ElectionRun(params, registry, seed).run(actions)


def write_artifacts(result: RunResult, out: str | Path) -> dict[str, Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "chain": out / "chain.bin",
        "transcript": out / "transcript.log",
        "tally": out / "tally.kv",
        "tally_text": out / "tally.txt",
        "openings": out / "openings.txt",
        "registry": out / "registry.txt",
        "ca_transcript": out / "ca_transcript.txt",
    }
    result.chain.save(paths["chain"])
    paths["transcript"].write_text(result.transcript.text())
    paths["tally"].write_text(result.tally.to_kv())
    paths["tally_text"].write_text(result.tally.to_text())
    paths["openings"].write_text(dump_openings(result.openings()))
    result.authority.registry.save(paths["registry"])
    paths["ca_transcript"].write_text(
        "".join(f"{r.tick}\t{r.identity}\t{r.blinded_message.hex()}\n" for r in result.authority.transcript)
    )
    return paths
