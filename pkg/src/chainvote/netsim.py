"""Deterministic discrete-event simulation of the peer network.

Every node validates what it receives, relays valid votes and openings to
its neighbours, and takes its turn as proposer in a round-robin
proof-of-authority schedule. Competing chains are resolved by length, then
by lowest head hash. When a dropped link comes back up, both ends exchange
their full state.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

from .ballot import EligibilityToken, OpeningMessage, Payload
from .crypto import seeded_rng
from .election import TallyResult, count
from .errors import AdmissionDenied, BadParent, BadTick, ScenarioError, StaleValidation, UnknownNode
from .ledger import Block, Chain, ElectionConfig, GenesisBlock, MAX_VOTES_PER_BLOCK, VoteEntry, VoteIndex


class Transcript:
    """Append-only event log, one ``key=value`` line per event."""

    def __init__(self):
        self.lines: list[str] = []

    def log(self, tick: int, node: str, event: str, **fields) -> None:
        parts = [f"tick={tick}", f"node={node}", f"event={event}"]
        parts += [f"{k}={v}" for k, v in fields.items() if v is not None]
        self.lines.append(" ".join(parts))

    def text(self) -> str:
        return "".join(line + "\n" for line in self.lines)

    def events(self, event: str | None = None, node: str | None = None) -> list[dict[str, str]]:
        out = []
        for line in self.lines:
            rec = dict(part.split("=", 1) for part in line.split(" "))
            if (event is None or rec["event"] == event) and (node is None or rec["node"] == node):
                out.append(rec)
        return out


# -- topology ---------------------------------------------------------------


@dataclass
class Topology:
    nodes: list[str]
    edges: dict[tuple[str, str], int] = field(default_factory=dict)

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def add_edge(self, a: str, b: str, delay: int = 1) -> None:
        if a == b:
            raise ValueError("self loops are not allowed")
        if delay < 1:
            raise ValueError("edge delay must be at least one tick")
        for n in (a, b):
            if n not in self.nodes:
                self.nodes.append(n)
        self.edges[self._key(a, b)] = delay

    def neighbors(self, node: str) -> list[tuple[str, int]]:
        out = []
        for (a, b), d in self.edges.items():
            if a == node:
                out.append((b, d))
            elif b == node:
                out.append((a, d))
        return sorted(out)

    def delay(self, a: str, b: str) -> int:
        return self.edges[self._key(a, b)]

    def is_connected(self) -> bool:
        if not self.nodes:
            return True
        seen = {self.nodes[0]}
        todo = deque([self.nodes[0]])
        while todo:
            for m, _ in self.neighbors(todo.popleft()):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        return len(seen) == len(self.nodes)

    @classmethod
    def single(cls) -> Topology:
        return cls(["n0"])

    @classmethod
    def ring(cls, n: int, delay: int = 1) -> Topology:
        topo = cls([f"n{i}" for i in range(n)])
        if n == 2:
            topo.add_edge("n0", "n1", delay)
        elif n > 2:
            for i in range(n):
                topo.add_edge(f"n{i}", f"n{(i + 1) % n}", delay)
        return topo

    @classmethod
    def random_connected(
        cls, n: int, rng: random.Random, max_delay: int = 3, extra_edges: float = 0.3
    ) -> Topology:
        """Random spanning tree plus extra edges, delays uniform in 1..max_delay."""
        topo = cls([f"n{i}" for i in range(n)])
        order = list(range(n))
        rng.shuffle(order)
        for i in range(1, n):
            parent = order[rng.randrange(i)]
            topo.add_edge(f"n{order[i]}", f"n{parent}", rng.randint(1, max_delay))
        for i in range(n):
            for j in range(i + 1, n):
                if cls._key(f"n{i}", f"n{j}") not in topo.edges and rng.random() < extra_edges:
                    topo.add_edge(f"n{i}", f"n{j}", rng.randint(1, max_delay))
        return topo

    def dumps(self) -> str:
        lines = []
        for node in self.nodes:
            nbrs = " ".join(f"{m}:{d}" for m, d in self.neighbors(node))
            lines.append(f"{node}: {nbrs}".rstrip())
        return "".join(line + "\n" for line in lines)

    @classmethod
    def parse(cls, text: str) -> Topology:
        """Adjacency list: ``node: neighbour[:delay] ...`` per line."""
        topo = cls([])
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            node, sep, rest = line.partition(":")
            node = node.strip()
            if not sep or not node:
                raise ScenarioError("expected 'node: neighbour[:delay] ...'", lineno)
            if node not in topo.nodes:
                topo.nodes.append(node)
            for item in rest.split():
                name, _, d = item.partition(":")
                try:
                    delay = int(d) if d else 1
                    existing = topo.edges.get(cls._key(node, name))
                    if existing is not None and existing != delay:
                        raise ValueError(f"conflicting delays for {node}-{name}")
                    topo.add_edge(node, name, delay)
                except ValueError as exc:
                    raise ScenarioError(str(exc), lineno) from None
        if not topo.nodes:
            raise ScenarioError("topology has no nodes")
        return topo


@dataclass(frozen=True)
class DropWindow:
    """Link ``a``-``b`` is down for ticks in ``[start, end)``."""

    start: int
    end: int
    a: str
    b: str

    def covers(self, a: str, b: str, tick: int) -> bool:
        return self.start <= tick < self.end and {a, b} == {self.a, self.b}


def partition(topology: Topology, groups: Sequence[Iterable[str]], start: int, end: int) -> list[DropWindow]:
    """Drop windows that cut every edge between different groups."""
    side = {n: i for i, g in enumerate(groups) for n in g}
    return [
        DropWindow(start, end, a, b)
        for (a, b) in topology.edges
        if side.get(a) is not None and side.get(b) is not None and side[a] != side[b]
    ]


def parse_drops(text: str) -> list[DropWindow]:
    """Lines ``start end a b`` or ``partition start end a,b|c,d`` (the latter needs a topology)."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "partition":
                start, end = int(parts[1]), int(parts[2])
                groups = [g.split(",") for g in " ".join(parts[3:]).replace(" ", "").split("|")]
                out.append(("partition", start, end, groups))
            else:
                start, end = int(parts[0]), int(parts[1])
                out.append(DropWindow(start, end, parts[2], parts[3]))
        except (IndexError, ValueError):
            raise ScenarioError("expected 'start end a b' or 'partition start end a,b|c,d'", lineno) from None
    return out


def expand_drops(items: Iterable, topology: Topology) -> list[DropWindow]:
    windows = []
    for item in items:
        if isinstance(item, DropWindow):
            windows.append(item)
        else:
            _, start, end, groups = item
            windows.extend(partition(topology, groups, start, end))
    return windows


# -- messages and nodes -----------------------------------------------------


@dataclass(frozen=True)
class VoteMessage:
    vid: bytes
    payload: Payload


@dataclass(frozen=True)
class ChainMessage:
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class SyncMessage:
    blocks: tuple[Block, ...]
    openings: tuple[OpeningGossip, ...]


@dataclass(frozen=True)
class OpeningGossip:
    """A relayed opening with the tick it was first published to the network."""

    opening: OpeningMessage
    published_at: int


Message = Union[VoteMessage, OpeningMessage, OpeningGossip, ChainMessage, SyncMessage]


class SimNode:
    def __init__(self, node_id: str, genesis: GenesisBlock):
        self.node_id = node_id
        self.chain = Chain(genesis)
        self.pool: dict[bytes, VoteEntry] = {}
        self.pool_index = VoteIndex()
        self.seen_votes: set[bytes] = set()
        self.seen_openings: dict[bytes, int] = {}  # encoded opening -> earliest stamp seen
        self.openings: dict[bytes, list[OpeningMessage]] = {}
        self.published: dict[bytes, int] = {}  # encoded opening -> publication tick
        self.pending_openings: list[tuple[OpeningMessage, int]] = []
        self.valid_blocks: set[bytes] = set()

    def all_openings(self) -> list[OpeningMessage]:
        return [m for msgs in self.openings.values() for m in msgs]

    def tally(self, now: int) -> TallyResult:
        return count(self.chain, self.all_openings(), now)


class SimNetwork:
    def __init__(
        self,
        config: ElectionConfig,
        topology: Topology | None = None,
        seed: int | bytes | str = 0,
        drops: Iterable = (),
        transcript: Transcript | None = None,
        credentials: dict[str, EligibilityToken] | None = None,
    ):
        config.check()
        self.config = config
        self.topology = topology or Topology.single()
        self.genesis = GenesisBlock(config)
        if credentials is not None:
            for node_id in self.topology.nodes:
                token = credentials.get(node_id)
                if token is None or not token.verify(config.ca_public):
                    raise AdmissionDenied(f"{node_id} has no valid eligibility token")
        self.nodes = {n: SimNode(n, self.genesis) for n in self.topology.nodes}
        order = list(self.topology.nodes)
        seeded_rng(seed, "proposer-order").shuffle(order)
        self.proposer_order = order
        self.drops = expand_drops(drops, self.topology)
        self.transcript = transcript if transcript is not None else Transcript()
        self.clock = 0
        self._queue: list[tuple[int, int, str, str | None, Message]] = []
        self._seq = 0

    # -- message plumbing -------------------------------------------------

    def _push(self, tick: int, dst: str, src: str | None, msg: Message) -> None:
        heapq.heappush(self._queue, (tick, self._seq, dst, src, msg))
        self._seq += 1

    def _link_down(self, a: str, b: str, tick: int) -> bool:
        return any(w.covers(a, b, tick) for w in self.drops)

    def _send(self, src: str, dst: str, msg: Message) -> None:
        if self._link_down(src, dst, self.clock):
            return
        self._push(self.clock + self.topology.delay(src, dst), dst, src, msg)

    def _broadcast(self, src: str, msg: Message, exclude: str | None = None) -> None:
        for nbr, _ in self.topology.neighbors(src):
            if nbr != exclude:
                self._send(src, nbr, msg)

    def inject(self, node_id: str, message: Message, at_tick: int | None = None) -> None:
        if node_id not in self.nodes:
            raise UnknownNode(node_id)
        tick = self.clock if at_tick is None else at_tick
        if tick < self.clock:
            raise BadTick(f"tick {tick} is in the past (now {self.clock})")
        self._push(tick, node_id, None, message)

    # -- node handlers ----------------------------------------------------

    def _on_vote(self, node: SimNode, msg: VoteMessage, src: str | None) -> None:
        t = self.clock
        if msg.vid in node.seen_votes:
            if src is None:
                self.transcript.log(t, node.node_id, "reject", vid=msg.vid.hex(), reason="DuplicateVID")
            return
        node.seen_votes.add(msg.vid)
        reason = node.chain.validate_vote(msg.payload, msg.vid, t, node.pool_index)
        if reason is not None:
            self.transcript.log(t, node.node_id, "reject", vid=msg.vid.hex(), kind=msg.payload.kind, reason=reason)
            return
        entry = VoteEntry(msg.vid, msg.payload, t)
        node.pool[msg.vid] = entry
        node.pool_index.admit(entry)
        self.transcript.log(t, node.node_id, "accept", vid=msg.vid.hex(), kind=msg.payload.kind)
        self._broadcast(node.node_id, msg, exclude=src)

    def _on_opening(self, node: SimNode, msg: OpeningMessage, published: int) -> None:
        # identical openings can be published more than once; the earliest publication decides
        key = msg.encode()
        earliest = node.seen_openings.get(key)
        if earliest is not None and published >= earliest:
            return
        node.seen_openings[key] = published
        # judged by publication time so every node reaches the same verdict
        if published >= self.config.count_end_time:
            self.transcript.log(self.clock, node.node_id, "reject-opening", vid=msg.vid.hex(), reason="CountingClosed")
            return
        self._try_opening(node, msg, published)

    def _try_opening(self, node: SimNode, msg: OpeningMessage, published: int) -> bool:
        """Verify and record an opening; ``False`` if its vote is not on chain yet."""
        entry = node.chain.get(msg.vid)
        if entry is None:
            node.pending_openings.append((msg, published))
            return False
        owner = entry.payload.voter_pub
        if not msg.signed_by(owner):
            self.transcript.log(self.clock, node.node_id, "reject-opening", vid=msg.vid.hex(), reason="NotOwner")
            return True
        if not msg.matches(entry.payload.commitment):
            self.transcript.log(self.clock, node.node_id, "reject-opening", vid=msg.vid.hex(), reason="BadOpening")
            return True
        key = msg.encode()
        known = node.published.get(key)
        if known is not None and known <= published:
            return True
        if known is None:
            node.openings.setdefault(msg.vid, []).append(msg)
        node.published[key] = published
        self.transcript.log(self.clock, node.node_id, "open-ok", vid=msg.vid.hex(), published=published)
        if published < self.config.election_end_time and node.chain.mark_revealed(msg.vid, published):
            self.transcript.log(self.clock, node.node_id, "reveal-early", vid=msg.vid.hex(), at=published)
        self._broadcast(node.node_id, OpeningGossip(msg, published))
        return True

    def _retry_pending(self, node: SimNode) -> None:
        if not node.pending_openings:
            return
        pending, node.pending_openings = node.pending_openings, []
        for msg, published in pending:
            self._try_opening(node, msg, published)

    def _better(self, blocks: Sequence[Block], chain: Chain) -> bool:
        if len(blocks) != chain.height:
            return len(blocks) > chain.height
        return bool(blocks) and blocks[-1].hash < chain.head_hash

    def _on_chain(self, node: SimNode, blocks: tuple[Block, ...], src: str | None) -> bool:
        if not blocks or blocks[-1].hash == node.chain.head_hash or not self._better(blocks, node.chain):
            return False
        t = self.clock
        bad = next((b for b in blocks if b.proposer not in self.nodes), None)
        if bad is not None:
            self.transcript.log(t, node.node_id, "reject-chain", height=bad.height, reason="UnknownProposer")
            return False
        try:
            new = Chain.from_blocks(self.genesis, blocks, trusted=node.valid_blocks)
        except (BadParent, StaleValidation) as exc:
            self.transcript.log(t, node.node_id, "reject-chain", height=len(blocks), reason=type(exc).__name__)
            return False
        old = node.chain
        node.valid_blocks.update(b.hash for b in blocks)
        new.unsealed = old.unsealed
        new.early_reveals = old.early_reveals
        node.chain = new
        dropped = [e for e in old.entries() if e.vid not in new]
        self.transcript.log(
            t, node.node_id, "adopt", height=new.height, head=new.head_hash.hex()[:16], reorg=len(dropped) or None
        )
        self._rebuild_pool(node, dropped)
        self._retry_pending(node)
        self._broadcast(node.node_id, ChainMessage(blocks), exclude=src)
        return True

    def _rebuild_pool(self, node: SimNode, returned: list[VoteEntry]) -> None:
        candidates = returned + list(node.pool.values())
        node.pool = {}
        node.pool_index = VoteIndex()
        for entry in candidates:
            if entry.vid in node.chain or entry.vid in node.pool:
                continue
            reason = node.chain.validate_vote(entry.payload, entry.vid, entry.accepted_at, node.pool_index)
            if reason is not None:
                self.transcript.log(self.clock, node.node_id, "evict", vid=entry.vid.hex(), reason=reason)
                continue
            node.pool[entry.vid] = entry
            node.pool_index.admit(entry)

    def _sync(self, a: str, b: str) -> None:
        node = self.nodes[a]
        gossip = tuple(OpeningGossip(m, node.published[m.encode()]) for m in node.all_openings())
        self._send(a, b, SyncMessage(tuple(node.chain.blocks), gossip))

    def _deliver(self, dst: str, src: str | None, msg: Message) -> None:
        node = self.nodes[dst]
        if isinstance(msg, VoteMessage):
            self._on_vote(node, msg, src)
        elif isinstance(msg, OpeningMessage):
            self._on_opening(node, msg, self.clock)
        elif isinstance(msg, OpeningGossip):
            self._on_opening(node, msg.opening, msg.published_at)
        elif isinstance(msg, ChainMessage):
            self._on_chain(node, msg.blocks, src)
        elif isinstance(msg, SyncMessage):
            self._on_chain(node, msg.blocks, src)
            for gossip in msg.openings:
                self._on_opening(node, gossip.opening, gossip.published_at)

    def _propose(self, node: SimNode) -> None:
        entries = list(node.pool.values())[:MAX_VOTES_PER_BLOCK]
        block = node.chain.append_block(entries, node.node_id, self.clock)
        node.valid_blocks.add(block.hash)
        for entry in entries:
            del node.pool[entry.vid]
            node.pool_index.discard(entry)
        self.transcript.log(
            self.clock,
            node.node_id,
            "block",
            height=block.height,
            votes=len(entries),
            head=block.hash.hex()[:16],
        )
        self._retry_pending(node)
        self._broadcast(node.node_id, ChainMessage(tuple(node.chain.blocks)))

    # -- scheduler --------------------------------------------------------

    def proposer_at(self, tick: int) -> str:
        return self.proposer_order[tick % len(self.proposer_order)]

    def step(self) -> None:
        t = self.clock
        for w in self.drops:
            if w.end == t:
                self._sync(w.a, w.b)
                self._sync(w.b, w.a)
        while self._queue and self._queue[0][0] <= t:
            _, _, dst, src, msg = heapq.heappop(self._queue)
            self._deliver(dst, src, msg)
        end = self.config.election_end_time
        if t > end:
            for node in self.nodes.values():
                for vid, msgs in node.openings.items():
                    if vid in node.chain and vid not in node.chain.unsealed:
                        # stamped from publication, not arrival, so every node records the same time
                        at = max(end + 1, min(node.published[m.encode()] for m in msgs))
                        node.chain.retrieve_vote(vid, at)
                        self.transcript.log(t, node.node_id, "unseal", vid=vid.hex(), at=at)
        proposer = self.nodes[self.proposer_at(t)]
        if proposer.pool:
            self._propose(proposer)
        self.clock = t + 1

    def run_until(self, tick: int) -> None:
        while self.clock < tick:
            self.step()

    def quiescent(self) -> bool:
        pending_heal = any(w.end >= self.clock for w in self.drops)
        return not self._queue and not pending_heal and not any(n.pool for n in self.nodes.values())

    def settle(self, max_ticks: int = 10_000) -> bool:
        """Run to quiescence, then one full proposer rotation. ``False`` on timeout."""
        limit = self.clock + max_ticks
        while not self.quiescent():
            if self.clock >= limit:
                return False
            self.step()
        self.run_until(self.clock + len(self.nodes))
        return self.quiescent()

    # -- observation ------------------------------------------------------

    def tallies(self, now: int | None = None) -> dict[str, TallyResult]:
        now = self.clock if now is None else now
        return {n: node.tally(now) for n, node in self.nodes.items()}

    def converged(self) -> bool:
        nodes = list(self.nodes.values())
        first = nodes[0].chain.encode()
        if any(n.chain.encode() != first for n in nodes[1:]):
            return False
        if self.clock >= self.config.election_end_time:
            tallies = [t.comparable() for t in self.tallies().values()]
            return all(t == tallies[0] for t in tallies)
        return True

    def node(self, node_id: str) -> SimNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(node_id) from None

