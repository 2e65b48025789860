"""Behaviour shared by every sensor node: bootstrap hellos, data origination,
base-station delivery and the optional authentication layers."""

from collections import Counter
from dataclasses import dataclass, field, fields, replace

from . import crypto, merkle, mutesla, snep
from .adversary import GroundTruth
from .core import BROADCAST, DEFAULT_TTL, Agent, Packet, PacketKind
from .neighbors import NeighborKnowledge


@dataclass
class NodeParams:
    # reactive routing
    route_ttl: int = 500
    rreq_timeout: int = 40
    rreq_retries: int = 2
    frp_timeout: int = 100
    data_ttl: int = DEFAULT_TTL
    # grayhole detection
    threshold_interval: int = 200
    probe_slack: int = 10
    probe_spacing: int = 5
    further_probes: int = 3
    rrep_wait: int = 10
    coop_round_timeout: int = 100
    # neighbourhood monitoring
    monitor_timeout: int = 8
    primary_extra: int = 8
    claim_wait: int = 3
    strike_limit: int = 3
    # bootstrap schedule
    hello_at: int = 0
    neighbor_list_at: int = 5
    gradient_at: int = 10
    confirm_at: int = 40
    relay_at: int = 45
    # compute cost charged per MAC/cipher/hash invocation
    crypto_op_instructions: int = 1000
    # authentication layers
    snep_window: int = snep.DEFAULT_WINDOW
    mutesla_interval: int = 20
    mutesla_lag: int = 2
    mutesla_chain: int = 64
    announce_period: int = 20

    @classmethod
    def names(cls):
        return {f.name for f in fields(cls)}


@dataclass
class RunContext:
    """State shared by all agents of one run (keys, ground truth, counters)."""
    params: NodeParams
    base_station: int
    truth: GroundTruth = field(default_factory=GroundTruth)
    counters: Counter = field(default_factory=Counter)
    detections: list = field(default_factory=list)  # (tick, initiator, suspect, flagged, round)
    probe_rounds: list = field(default_factory=list)  # (tick, initiator, suspect, {node: status})
    local_checks: list = field(default_factory=list)  # (tick, initiator, suspect, cn, outcome)
    frq_checks: list = field(default_factory=list)  # (tick, origin, b1, b2, verdict)
    promotions: list = field(default_factory=list)  # (tick, node, uid, bypassed)
    reroutes: list = field(default_factory=list)  # (tick, node, uid, bypassed)
    nms_blacklists: list = field(default_factory=list)  # (tick, node, blacklisted)
    decrypts: set = field(default_factory=set)  # (holder, key owner) successful cluster-key opens
    master: bytes = b"\x00" * crypto.KEY_LEN
    use_snep: bool = False
    use_mutesla: bool = False
    use_merkle: bool = False
    chain: object = None
    merkle_tree: object = None
    node_pks: dict = field(default_factory=dict)
    bootstrap: bool = False

    def node_master(self, node: int) -> bytes:
        return crypto.derive_key(self.master, f"node/{node}")

    def cluster_key(self, node: int) -> bytes:
        return crypto.derive_key(self.node_master(node), "cluster")


class SensorAgent(Agent):
    def __init__(self, sim, node: int, ctx: RunContext):
        super().__init__(sim, node)
        self.ctx = ctx
        self.params = ctx.params
        self.base = ctx.base_station
        self.knowledge = NeighborKnowledge(node)
        self.flooded = set()
        self.auth_state = None
        self.snep_session = None
        if ctx.use_mutesla and ctx.chain is not None and node != self.base:
            self.auth_state = mutesla.ReceiverAuthState.bootstrap(ctx.chain, sim.clock.epsilon)
        if ctx.use_snep:
            master = crypto.derive_key(ctx.master, f"snep/{node}")
            self.snep_session = snep.SnepSession.from_master(node, self.base, master, self.params.snep_window)
            self.snep_peers = {}

    @property
    def is_base(self) -> bool:
        return self.id == self.base

    def honest(self) -> bool:
        return self.adversary is None or self.adversary.participates(self.now)

    def crypto_op(self, n: int = 1):
        self.compute(n * self.params.crypto_op_instructions)

    # -- lifecycle ------------------------------------------------------------

    def start(self):
        """Schedule bootstrap timers; called once before the run starts."""
        p = self.params
        if self.ctx.bootstrap:
            self.set_timer(p.hello_at, ("hello",))
            self.set_timer(p.neighbor_list_at, ("nlist",))
        if self.is_base and self.ctx.use_mutesla and self.ctx.chain is not None:
            self.set_timer(p.announce_period, ("announce",))
            self.set_timer(p.mutesla_interval, ("disclose",))

    def on_timer(self, token):
        name = token[0]
        if name == "hello":
            self.send_hello()
        elif name == "nlist":
            self.send(self.make_packet(PacketKind.NeighborList, BROADCAST,
                                       payload=_encode_ids(self.knowledge.one_hop)))
        elif name == "announce":
            self.announce()
        elif name == "disclose":
            self.disclose()
        elif name == "emit":
            self.originate(token[2], token[1])
        else:
            self.handle_timer(token)

    def handle_timer(self, token):
        pass

    # -- receive dispatch ---------------------------------------------------------

    def receive(self, packet: Packet, sender: int):
        kind = packet.kind
        if kind == PacketKind.Hello:
            self.on_hello(packet, sender)
        elif kind == PacketKind.NeighborList:
            if sender in self.knowledge.one_hop:
                self.knowledge.two_hop[sender] = frozenset(_decode_ids(packet.payload))
        elif kind in (PacketKind.Announce, PacketKind.KeyDisclosure):
            self.on_auth_flood(packet, sender)
        else:
            self.handle(packet, sender)

    def handle(self, packet: Packet, sender: int):
        pass

    # -- hellos and key certificates ------------------------------------------------

    def send_hello(self):
        payload, info = b"", {}
        if self.ctx.use_merkle and self.ctx.merkle_tree is not None:
            pk = self.ctx.node_pks[self.id]
            path = self.ctx.merkle_tree.prove(self.id)
            payload = pk + b"".join(s.digest for s in path.siblings)
            info = {"pk": pk, "path": path}
        self.send(self.make_packet(PacketKind.Hello, BROADCAST, payload=payload, info=info))

    def on_hello(self, packet, sender):
        if self.ctx.use_merkle and self.ctx.merkle_tree is not None:
            self.crypto_op(len(packet.info["path"].siblings) + 1)
            ok = merkle.verify(self.ctx.merkle_tree.root, sender, packet.info["pk"], packet.info["path"],
                               self.ctx.merkle_tree.height)
            self.ctx.counters["merkle_verified" if ok else "merkle_rejected"] += 1
            if not ok:
                return
        self.knowledge.one_hop.add(sender)

    # -- data -----------------------------------------------------------------------

    def originate(self, payload: bytes, dst: int | None = None):
        tag = None
        if self.snep_session is not None and dst in (None, self.base) and not self.is_base:
            self.crypto_op(2)
            msg = snep.snep_send(self.snep_session, payload)
            payload, tag = msg.ciphertext, msg.tag
        dst = self.base if dst is None else dst
        pkt = self.make_packet(PacketKind.Data, dst, payload=payload, tag=tag, ttl=self.params.data_ttl)
        self.sim.ledger.generate(pkt.uid, self.id, self.now)
        self.ctx.counters["generated"] += 1
        self.sim.log("Data", self.id, dst, pkt.uid, "generate")
        if dst == self.id:
            self.accept_data(pkt)
            return pkt.uid
        self.route_data(pkt)
        return pkt.uid

    def route_data(self, packet: Packet):
        raise NotImplementedError

    def accept_data(self, packet: Packet):
        """Data reached its destination (normally the base station)."""
        if not self.sim.ledger.deliver(packet.uid, self.now):
            self.ctx.counters["duplicate_arrivals"] += 1
            return
        self.sim.log("Data", packet.src, self.id, packet.uid, "delivered")
        if self.ctx.use_snep and self.is_base and packet.tag is not None:
            session = self.snep_peers.get(packet.src)
            if session is None:
                master = crypto.derive_key(self.ctx.master, f"snep/{packet.src}")
                session = snep.SnepSession.from_master(self.id, packet.src, master, self.params.snep_window)
                self.snep_peers[packet.src] = session
            self.crypto_op(2)
            try:
                snep.snep_receive(session, snep.SnepMessage(packet.payload, packet.tag))
                self.ctx.counters["snep_accepted"] += 1
            except snep.SnepReject as exc:
                self.ctx.counters[f"snep_rejected_{exc.reason}"] += 1

    def lose(self, packet: Packet, cause: str):
        if packet.kind == PacketKind.Data:
            self.sim.ledger.lose(packet.uid, cause, self.now, self.id)
        self.sim.log(packet.kind.value, self.id, packet.dst, packet.uid, cause)

    # -- broadcast authentication -----------------------------------------------------

    def announce(self):
        chain = self.ctx.chain
        t = self.sim.local_time(self.id)
        i = chain.interval_of(t)
        if 1 <= i <= chain.n:
            self.crypto_op()
            pkt = mutesla.auth_broadcast(chain, b"announce-%d" % self.now, t, uid=self.sim.next_uid(), src=self.id)
            pkt = replace(pkt, header_bits=self.sim.radio.header_bits)
            self.flooded.add(pkt.uid)
            self.send(pkt)
            self.ctx.counters["mutesla_announced"] += 1
        if i < chain.n:
            self.set_timer(self.params.announce_period, ("announce",))

    def disclose(self):
        chain = self.ctx.chain
        i = chain.interval_of(self.sim.local_time(self.id)) - chain.disclosure_lag
        if 1 <= i <= chain.n:
            pkt = self.make_packet(PacketKind.KeyDisclosure, BROADCAST, payload=chain.keys[i], counter=i)
            self.flooded.add(pkt.uid)
            self.send(pkt)
        if i < chain.n:
            self.set_timer(chain.interval_len, ("disclose",))

    def on_auth_flood(self, packet, sender):
        if packet.uid in self.flooded:
            return
        self.flooded.add(packet.uid)
        self.send(packet.hop(BROADCAST))
        state = self.auth_state
        if state is None:
            return
        local_t = self.sim.local_time(self.id)
        if packet.kind == PacketKind.Announce:
            verdict = mutesla.receiver_accept(state, packet, packet.counter, local_t)
            self.ctx.counters[f"mutesla_{verdict}"] += 1
        else:
            self.crypto_op(max(1, packet.counter - state.last_auth_index))
            released = mutesla.receiver_verify_disclosure(
                state, mutesla.DisclosedKey(packet.counter, packet.payload))
            self.ctx.counters["mutesla_authenticated"] += len(released)


def _encode_ids(ids) -> bytes:
    return b"".join(merkle.encode_id(i) for i in sorted(ids))


def _decode_ids(raw: bytes) -> list:
    return [int.from_bytes(raw[k:k + 4], "big") for k in range(0, len(raw), 4)]
