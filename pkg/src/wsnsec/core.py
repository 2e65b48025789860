"""Virtual time, topology, radio, clocks and energy for the simulator.

A run is one single-threaded event loop.  Events pop in ``(fire_time,
sequence)`` order with the sequence number assigned at scheduling time, so a
given scenario and seed always replays the same trace.
"""

from collections import defaultdict
from dataclasses import dataclass, field, replace
from enum import Enum
import hashlib
import heapq
import itertools
import math
import random

BROADCAST = -1

DEFAULT_HEADER_BITS = 128
DEFAULT_TTL = 32
DEFAULT_TX_COST_PER_BIT = 1000
DEFAULT_RX_COST_PER_BIT = 500


class TopologyError(ValueError):
    pass


class SchedulingError(ValueError):
    pass


class PacketKind(str, Enum):
    Data = "Data"
    Hello = "Hello"
    NeighborList = "NeighborList"
    Gradient = "Gradient"
    Rreq = "Rreq"
    Rrep = "Rrep"
    FRq = "FRq"
    FRp = "FRp"
    Probe = "Probe"
    ProbeQuery = "ProbeQuery"
    ProbeReply = "ProbeReply"
    FurtherProbe = "FurtherProbe"
    Notification = "Notification"
    CoopDetectRequest = "CoopDetectRequest"
    Announce = "Announce"
    KeyDisclosure = "KeyDisclosure"
    BroadcastClaim = "BroadcastClaim"
    NeighborConfirm = "NeighborConfirm"
    CounterResync = "CounterResync"


# packets an adversary treats as forwardable payload rather than routing control
DATA_PLANE = frozenset({PacketKind.Data, PacketKind.Probe, PacketKind.FurtherProbe})


@dataclass(frozen=True)
class Packet:
    uid: int
    kind: PacketKind
    src: int
    dst: int
    next_hop: int = BROADCAST
    payload: bytes = b""
    tag: bytes | None = None
    counter: int | None = None
    ttl: int = DEFAULT_TTL
    info: dict = field(default_factory=dict, compare=False)
    header_bits: int = DEFAULT_HEADER_BITS

    @property
    def size_bits(self) -> int:
        # routing fields in ``info`` ride inside the fixed header
        return self.header_bits + 8 * len(self.payload)

    def hop(self, next_hop: int, **changes) -> "Packet":
        """Copy for the next transmission: new next hop, one less TTL."""
        return replace(self, next_hop=next_hop, ttl=self.ttl - 1, **changes)


# -- topology ---------------------------------------------------------------

@dataclass
class Topology:
    mode: str
    adjacency: dict
    radio_range: float | None = None
    positions: dict | None = None

    @property
    def nodes(self) -> list:
        return sorted(self.adjacency)

    def __len__(self):
        return len(self.adjacency)

    def neighbors(self, node: int) -> frozenset:
        return self.adjacency[node]

    def edges(self):
        return sorted((u, v) for u in self.adjacency for v in self.adjacency[u] if u < v)

    def hop_distances(self, source: int, excluded=()) -> dict:
        """BFS hop counts from ``source`` over nodes not in ``excluded``."""
        dist = {source: 0}
        frontier = [source]
        while frontier:
            nxt = []
            for u in frontier:
                for v in sorted(self.adjacency[u]):
                    if v not in dist and v not in excluded:
                        dist[v] = dist[u] + 1
                        nxt.append(v)
            frontier = nxt
        return dist

    def within(self, node: int, distance: float) -> set:
        """Nodes within euclidean ``distance`` (unit-disk) of ``node``."""
        x0, y0 = self.positions[node]
        return {v for v, (x, y) in self.positions.items()
                if v != node and math.hypot(x - x0, y - y0) <= distance}


def _check_dense(ids):
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise TopologyError(f"duplicate node id(s): {dup}")
    if sorted(ids) != list(range(len(ids))):
        raise TopologyError("node ids must be dense 0..N-1")


def unit_disk(positions: dict, radio_range: float) -> Topology:
    ids = sorted(positions)
    adj = {i: set() for i in ids}
    for a, b in itertools.combinations(ids, 2):
        (xa, ya), (xb, yb) = positions[a], positions[b]
        if math.hypot(xa - xb, ya - yb) <= radio_range:
            adj[a].add(b)
            adj[b].add(a)
    return Topology("unit-disk", {i: frozenset(s) for i, s in adj.items()},
                    radio_range, dict(positions))


def grid_positions(rows: int, cols: int, spacing: float = 1.0) -> dict:
    """Row-major grid: node ``r * cols + c`` sits at ``(c, r) * spacing``."""
    return {r * cols + c: (c * spacing, r * spacing) for r in range(rows) for c in range(cols)}


def build_topology(spec: dict) -> Topology:
    """Build adjacency from a topology spec.

    Accepted forms::

        {"mode": "explicit", "nodes": [0, 1, 2], "edges": [[0, 1], [1, 2]]}
        {"mode": "unit-disk", "radio_range": 1.5, "positions": [[0, 0], [1, 0]]}
        {"mode": "grid", "rows": 3, "cols": 4, "spacing": 1.0, "radio_range": 1.5}

    Explicit topologies may also carry ``positions`` (used only for
    range-boosted transmitters).
    """
    mode = spec.get("mode", "explicit")
    if mode == "explicit":
        ids = [int(i) for i in spec["nodes"]]
        _check_dense(ids)
        adj = {i: set() for i in ids}
        for u, v in spec.get("edges", []):
            if u not in adj or v not in adj:
                raise TopologyError(f"edge ({u}, {v}) references an unknown node id")
            if u == v:
                raise TopologyError(f"self-loop on node {u}")
            adj[u].add(v)
            adj[v].add(u)
        positions = None
        if spec.get("positions") is not None:
            positions = {i: tuple(p) for i, p in enumerate(spec["positions"])}
        return Topology("explicit", {i: frozenset(s) for i, s in adj.items()},
                        spec.get("radio_range"), positions)
    if mode == "unit-disk":
        raw = spec["positions"]
        if isinstance(raw, dict):
            ids = [int(k) for k in raw]
            _check_dense(ids)
            positions = {int(k): tuple(v) for k, v in raw.items()}
        else:
            positions = {i: tuple(p) for i, p in enumerate(raw)}
        return unit_disk(positions, float(spec["radio_range"]))
    if mode == "grid":
        positions = grid_positions(int(spec["rows"]), int(spec["cols"]), float(spec.get("spacing", 1.0)))
        topo = unit_disk(positions, float(spec["radio_range"]))
        return topo
    raise TopologyError(f"unknown topology mode {mode!r}")


# -- randomness -------------------------------------------------------------

def derive_seed(root_seed: int, name: str) -> int:
    digest = hashlib.sha256(f"{root_seed}/{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def stream(root_seed: int, name: str) -> random.Random:
    """Independent RNG stream; toggling one consumer never shifts another's draws."""
    return random.Random(derive_seed(root_seed, name))


# -- clocks and energy ------------------------------------------------------

class LooseClock:
    """Static per-node offsets drawn once, uniform in [-epsilon, +epsilon]."""

    def __init__(self, nodes, epsilon: int, rng: random.Random | None = None):
        self.epsilon = epsilon
        self.global_time = 0
        if epsilon == 0 or rng is None:
            self.offsets = {n: 0 for n in nodes}
        else:
            self.offsets = {n: rng.randint(-epsilon, epsilon) for n in sorted(nodes)}

    def local_time(self, node: int) -> int:
        return self.global_time + self.offsets[node]


class EnergyMeter:
    """Per-node accumulator in instruction-equivalent units."""

    def __init__(self, nodes, tx_cost_per_bit=DEFAULT_TX_COST_PER_BIT,
                 rx_cost_per_bit=DEFAULT_RX_COST_PER_BIT):
        self.tx_cost_per_bit = tx_cost_per_bit
        self.rx_cost_per_bit = rx_cost_per_bit
        self.by_cause = {n: {"transmit": 0, "receive": 0, "compute": 0} for n in nodes}
        self.issued = 0  # running sum of every charge, for conservation checks

    def charge(self, node: int, cause: str, amount: int):
        if node not in self.by_cause:
            raise KeyError(f"unknown node {node}")
        if amount < 0:
            raise ValueError("charge amount must be non-negative")
        if cause == "transmit":
            units = amount * self.tx_cost_per_bit
        elif cause == "receive":
            units = amount * self.rx_cost_per_bit
        elif cause == "compute":
            units = amount
        else:
            raise ValueError(f"unknown charge cause {cause!r}")
        self.by_cause[node][cause] += units
        self.issued += units
        return units

    def total(self, node: int | None = None, cause: str | None = None):
        nodes = [node] if node is not None else list(self.by_cause)
        causes = [cause] if cause else ("transmit", "receive", "compute")
        return sum(self.by_cause[n][c] for n in nodes for c in causes)

    def snapshot(self) -> dict:
        return {n: self.total(n) for n in self.by_cause}


# -- events -----------------------------------------------------------------

@dataclass(order=True)
class SimEvent:
    fire_time: int
    sequence: int
    action: str = field(compare=False)  # "deliver" or "timer"
    node: int = field(compare=False)
    packet: Packet | None = field(default=None, compare=False)
    sender: int | None = field(default=None, compare=False)
    token: object = field(default=None, compare=False)


class EventQueue:
    def __init__(self):
        self.now = 0
        self._heap = []
        self._seq = itertools.count()

    def __len__(self):
        return len(self._heap)

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.fire_time < self.now:
            raise SchedulingError(f"event at {event.fire_time} is before now={self.now}")
        event.sequence = next(self._seq)
        heapq.heappush(self._heap, (event.fire_time, event.sequence, event))
        return event

    def at(self, fire_time: int, action: str, node: int, packet=None, sender=None, token=None):
        return self.schedule(SimEvent(fire_time, 0, action, node, packet, sender, token))

    def advance(self) -> SimEvent | None:
        if not self._heap:
            return None
        _, _, event = heapq.heappop(self._heap)
        self.now = event.fire_time
        return event

    def peek_time(self):
        return self._heap[0][0] if self._heap else None


# -- data fate bookkeeping ----------------------------------------------------

LOSS_CAUSES = ("adversary_dropped", "channel_dropped", "ttl_expired", "no_route")


class DataLedger:
    """Per-uid fate of generated data packets."""

    def __init__(self):
        self.generated = {}  # uid -> (source, tick)
        self.delivered = {}  # uid -> tick of first arrival
        self.copies = defaultdict(int)
        self.losses = defaultdict(list)  # uid -> [(tick, cause, node)]

    def generate(self, uid, source, tick):
        self.generated[uid] = (source, tick)

    def deliver(self, uid, tick) -> bool:
        """Record an arrival; True only for the first copy of ``uid``."""
        self.copies[uid] += 1
        if uid in self.delivered:
            return False
        self.delivered[uid] = tick
        return True

    def lose(self, uid, cause, tick, node):
        if uid in self.generated:
            self.losses[uid].append((tick, cause, node))

    def outcome(self, uid) -> str:
        if uid in self.delivered:
            return "delivered"
        if self.losses.get(uid):
            return self.losses[uid][-1][1]
        return "unresolved"

    def tally(self) -> dict:
        counts = {"delivered": 0, **{c: 0 for c in LOSS_CAUSES}, "unresolved": 0}
        for uid in self.generated:
            counts[self.outcome(uid)] += 1
        return counts


# -- simulator ----------------------------------------------------------------

@dataclass
class RadioConfig:
    tx_cost_per_bit: int = DEFAULT_TX_COST_PER_BIT
    rx_cost_per_bit: int = DEFAULT_RX_COST_PER_BIT
    header_bits: int = DEFAULT_HEADER_BITS
    link_drop_q: float = 0.0
    hop_delay: int = 1


class Simulator:
    """Event loop plus the shared radio medium.

    Agents register per node and receive ``receive(packet, sender)`` and
    ``on_timer(token)`` callbacks.  A unicast frame is physically heard by
    every radio neighbour, but only the addressee and promiscuous agents are
    handed (and charged for) it.
    """

    def __init__(self, topology: Topology, radio: RadioConfig | None = None, seed: int = 0,
                 epsilon: int = 0, trace: bool = False):
        self.topology = topology
        self.radio = radio or RadioConfig()
        self.seed = seed
        self.queue = EventQueue()
        self.clock = LooseClock(topology.nodes, epsilon, stream(seed, "clock"))
        self.energy = EnergyMeter(topology.nodes, self.radio.tx_cost_per_bit, self.radio.rx_cost_per_bit)
        self.ledger = DataLedger()
        self.agents = {}
        self.trace_enabled = trace
        self.trace = []
        self.transmissions = []  # (tick, sender, kind, uid, size_bits, next_hop)
        self.events_processed = 0
        self._uids = itertools.count(1)
        self._channel_rng = stream(seed, "channel")
        self._boost = {}  # sender -> (kinds, extra receivers)
        self.deliveries = defaultdict(int)  # (node, kind) -> count handed to agents

    @property
    def now(self) -> int:
        return self.queue.now

    def next_uid(self) -> int:
        return next(self._uids)

    def add_agent(self, node: int, agent):
        if node not in self.topology.adjacency:
            raise KeyError(f"unknown node {node}")
        self.agents[node] = agent

    def local_time(self, node: int) -> int:
        self.clock.global_time = self.now
        return self.clock.local_time(node)

    def boost_range(self, sender: int, receivers, kinds, active_from: int = 0):
        self._boost[sender] = (frozenset(kinds), frozenset(receivers), active_from)

    def reach(self, sender: int, packet: Packet):
        receivers = self.topology.adjacency[sender]
        boost = self._boost.get(sender)
        if boost and packet.kind in boost[0] and self.now >= boost[2]:
            receivers = receivers | boost[1]
        return receivers

    def log(self, kind, src, dst, uid, note):
        if self.trace_enabled:
            self.trace.append(f"{self.now} {kind} {src} {dst} {uid} {note}")

    def transmit(self, sender: int, packet: Packet):
        now = self.queue.now
        self.energy.charge(sender, "transmit", packet.size_bits)
        self.transmissions.append((now, sender, packet.kind, packet.uid, packet.size_bits, packet.next_hop))
        if self.trace_enabled:
            nh = "*" if packet.next_hop == BROADCAST else packet.next_hop
            self.log(packet.kind.value, sender, nh, packet.uid, "tx")
        q = self.radio.link_drop_q
        fire = now + self.radio.hop_delay
        nh = packet.next_hop
        for r in sorted(self.reach(sender, packet)):
            agent = self.agents.get(r)
            if agent is None:
                continue
            addressed = nh == BROADCAST or nh == r
            if not addressed and not agent.promiscuous:
                continue
            if q > 0 and self._channel_rng.random() < q:
                if addressed and packet.kind == PacketKind.Data:
                    self.ledger.lose(packet.uid, "channel_dropped", now, r)
                self.log(packet.kind.value, sender, r, packet.uid, "lost")
                continue
            self.queue.at(fire, "deliver", r, packet, sender)

    def set_timer(self, node: int, delay: int, token):
        if delay < 0:
            raise SchedulingError("timer delay must be non-negative")
        self.queue.at(self.queue.now + delay, "timer", node, token=token)

    def dispatch(self, event: SimEvent):
        self.events_processed += 1
        agent = self.agents[event.node]
        if event.action == "deliver":
            packet = event.packet
            self.energy.charge(event.node, "receive", packet.size_bits)
            self.deliveries[(event.node, packet.kind)] += 1
            if self.trace_enabled:
                addressed = packet.next_hop in (BROADCAST, event.node)
                self.log(packet.kind.value, event.sender, event.node, packet.uid,
                         "rx" if addressed else "overhear")
            agent.receive(packet, event.sender)
        else:
            if self.trace_enabled:
                self.log("Timer", event.node, event.node, "-", _token_name(event.token))
            agent.on_timer(event.token)

    def run(self, until: int | None = None):
        """Process events until the queue drains or the next event is past ``until``."""
        queue = self.queue
        while queue._heap:
            if until is not None and queue._heap[0][0] > until:
                queue.now = max(queue.now, until)
                break
            self.dispatch(queue.advance())
        self.clock.global_time = queue.now


def _token_name(token):
    parts = token if isinstance(token, tuple) else (token,)
    out = []
    for t in parts:
        t = t.hex() if isinstance(t, bytes) else str(t)
        out.append("".join(t.split()))  # keep the note a single trace field
    return ":".join(out)


class Agent:
    """Per-node protocol logic; subclasses override the hooks."""

    promiscuous = False

    def __init__(self, sim: Simulator, node: int):
        self.sim = sim
        self.id = node
        self.adversary = None
        sim.add_agent(node, self)

    @property
    def now(self) -> int:
        return self.sim.queue.now

    def send(self, packet: Packet):
        self.sim.transmit(self.id, packet)

    def set_timer(self, delay: int, token):
        self.sim.set_timer(self.id, delay, token)

    def make_packet(self, kind: PacketKind, dst: int, next_hop: int = BROADCAST, payload: bytes = b"",
                    uid: int | None = None, **kw) -> Packet:
        return Packet(uid=self.sim.next_uid() if uid is None else uid, kind=kind, src=self.id,
                      dst=dst, next_hop=next_hop, payload=payload,
                      header_bits=self.sim.radio.header_bits, **kw)

    def compute(self, instructions: int):
        if instructions:
            self.sim.energy.charge(self.id, "compute", instructions)

    def receive(self, packet: Packet, sender: int):
        pass

    def on_timer(self, token):
        pass
