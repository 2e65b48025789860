"""Single-path routing toward the base station with neighbourhood monitoring.

Each hop encrypts the data under the sender's cluster key, which all of the
sender's true neighbours hold, so the whole neighbourhood can overhear it.
The sender keeps a copy (primary monitor).  Nodes that hear the hop and are
also neighbours of the addressee keep a copy too (secondary monitors).  A
monitor clears its copy once it overhears the addressee forward the same
payload to a neighbour whose adjacency it could verify.  A secondary that
times out broadcasts a claim and forwards the packet itself; a primary that
times out strikes the addressee and reroutes.

Routes follow a hop-count gradient flooded from the base station.

Neighbour claims are checked once the gradient has settled: every node
attests the adjacencies it can confirm among its own neighbours (between
different gradient layers), and every node relays the attestations it heard
one hop further.
"""

from collections import Counter
from dataclasses import dataclass, field, replace
import logging

from . import crypto
from .agent import SensorAgent
from .core import BROADCAST, PacketKind
from .neighbors import NeighborKnowledge

log = logging.getLogger(__name__)

__all__ = ["NeighborKnowledge", "MonitorEntry", "GradientMixin", "NmsAgent",
           "next_hop_select", "holds_cluster_key"]

UNKNOWN = 1 << 30


def holds_cluster_key(topology, holder: int, owner: int) -> bool:
    """Cluster keys are provisioned to the owner's true radio neighbours."""
    return holder == owner or holder in topology.neighbors(owner)


def next_hop_select(my_hops: int, neighbor_hops: dict, blacklist=(), exclude=()):
    """Lowest-hop neighbour strictly closer to the base station; lowest id on ties."""
    best = None
    for n in sorted(neighbor_hops):
        h = neighbor_hops[n]
        if h >= my_hops or n in blacklist or n in exclude:
            continue
        if best is None or h < best[0]:
            best = (h, n)
    return None if best is None else best[1]


@dataclass
class MonitorEntry:
    uid: int
    payload: bytes
    watched: int
    deadline: int
    role: str  # "primary" or "secondary"
    src: int
    ttl: int
    excluded: set = field(default_factory=set)
    claimed: bool = False
    rivals: set = field(default_factory=set)
    version: int = 0


class GradientMixin:
    """Hop-count gradient learned from a flood started by the base station."""

    def init_gradient(self):
        self.hops = 0 if self.is_base else UNKNOWN
        self.neighbor_hops = {}
        self.blacklist = set()

    def start_gradient(self):
        if self.is_base:
            self.set_timer(self.params.gradient_at, ("gradient",))

    def advertise(self):
        hops = self.hops
        if self.adversary is not None:
            hops = self.adversary.gradient_advert(self.now, hops)
        self.send(self.make_packet(PacketKind.Gradient, BROADCAST, info={"hops": hops}))

    def on_gradient(self, packet, sender):
        if sender not in self.knowledge.one_hop:
            return
        advertised = packet.info["hops"]
        self.neighbor_hops[sender] = advertised
        if not self.is_base and advertised + 1 < self.hops:
            self.hops = advertised + 1
            self.advertise()

    def next_hop(self, exclude=()):
        return next_hop_select(self.hops, self.neighbor_hops, self.blacklist, exclude)


class NmsAgent(GradientMixin, SensorAgent):
    promiscuous = True

    def __init__(self, sim, node, ctx):
        super().__init__(sim, node, ctx)
        self.init_gradient()
        self.buffer = {}  # uid -> MonitorEntry
        self.strikes = Counter()
        self.transmitted = set()  # uids this node has put on the air
        self.echoed = set()
        self.heard_attestations = {}  # attester -> edges, as heard directly
        self.cluster_key = ctx.cluster_key(node)
        self._versions = 0

    def start(self):
        super().start()
        self.start_gradient()
        if self.ctx.bootstrap:
            self.set_timer(self.params.confirm_at, ("confirm",))
            self.set_timer(self.params.relay_at, ("relay",))

    # -- neighbour claim confirmation ------------------------------------------------

    def send_confirm(self):
        # only edges between different gradient layers can ever carry data
        hops = self.neighbor_hops
        edges = sorted((a, b) for a, b in self.knowledge.mutual_edges()
                       if hops.get(a, UNKNOWN) != hops.get(b, UNKNOWN))
        self.send(self.make_packet(PacketKind.NeighborConfirm, BROADCAST,
                                   payload=_encode_bundle({self.id: edges}), info={"relay": False}))

    def send_relay(self):
        # a listener can only use an edge whose claimer is its neighbour; keep
        # edges touching our own neighbourhood, which covers the usual geometry
        mine = self.knowledge.one_hop
        bundle = {}
        for attester, edges in self.heard_attestations.items():
            keep = [e for e in edges if self.id not in e and (e[0] in mine or e[1] in mine)]
            if keep:
                bundle[attester] = keep
        if bundle:
            self.send(self.make_packet(PacketKind.NeighborConfirm, BROADCAST,
                                       payload=_encode_bundle(bundle), info={"relay": True}))

    def on_confirm(self, packet, sender):
        if sender not in self.knowledge.one_hop:
            return
        for attester, edges in _decode_bundle(packet.payload).items():
            if not packet.info.get("relay"):
                if attester != sender:
                    continue
                self.heard_attestations[attester] = edges
            self.knowledge.attest(attester, sender, edges)

    # -- crypto ---------------------------------------------------------------------

    def _seal(self, uid, payload):
        self.crypto_op()
        return crypto.ctr_encrypt(self.cluster_key, uid, payload)

    def _open(self, packet, sender):
        owner = packet.info.get("ck", sender)
        if not holds_cluster_key(self.sim.topology, self.id, owner):
            self.ctx.counters["undecryptable_overhears"] += 1
            return None
        self.crypto_op()
        self.ctx.decrypts.add((self.id, owner))
        return crypto.ctr_decrypt(self.ctx.cluster_key(owner), packet.uid, packet.payload)

    # -- data path ------------------------------------------------------------------------

    def route_data(self, packet):
        self._forward(packet.uid, packet.payload, packet.src, packet.ttl + 1, exclude=set(), tag=packet.tag)

    def _forward(self, uid, plaintext, src, ttl, exclude, tag=None, lose_as="no_route"):
        """Encrypt under our cluster key and send to the gradient next hop."""
        v = self.next_hop(exclude)
        if v is None:
            self.sim.ledger.lose(uid, lose_as, self.now, self.id)
            self.sim.log("Data", self.id, "-", uid, "no_next_hop")
            self.ctx.counters["routing_failures"] += 1
            return None
        if ttl <= 1:
            self.sim.ledger.lose(uid, "ttl_expired", self.now, self.id)
            return None
        pkt = self.make_packet(PacketKind.Data, self.base, v, payload=self._seal(uid, plaintext),
                               uid=uid, ttl=ttl - 1, tag=tag, info={"ck": self.id, "src": src})
        self.transmitted.add(uid)
        self.send(pkt)
        if v != self.base:
            self._watch(uid, plaintext, v, "primary", src, ttl - 1, set(exclude) | {v},
                        self.params.monitor_timeout + self.params.primary_extra)
        return v

    def _watch(self, uid, payload, watched, role, src, ttl, excluded, timeout):
        self._versions += 1
        entry = MonitorEntry(uid, payload, watched, self.now + timeout, role, src, ttl, set(excluded),
                             version=self._versions)
        self.buffer[uid] = entry
        self.set_timer(timeout, ("monitor", uid, entry.version))

    def handle(self, packet, sender):
        kind = packet.kind
        if kind == PacketKind.Gradient:
            self.on_gradient(packet, sender)
        elif kind == PacketKind.NeighborConfirm:
            self.on_confirm(packet, sender)
        elif kind == PacketKind.Data:
            if packet.next_hop == self.id:
                self.on_data(packet, sender)
            else:
                self.on_overhear(packet, sender)
        elif kind == PacketKind.BroadcastClaim:
            self.on_claim(packet, sender)

    def on_data(self, packet, sender):
        plaintext = self._open(packet, sender)
        if plaintext is None:
            return
        if self.is_base:
            self.accept_data(replace(packet, payload=plaintext))
            return
        entry = self.buffer.get(packet.uid)
        if entry is not None and entry.role == "secondary":
            del self.buffer[packet.uid]  # we are the next hop now, not a watcher
        adv = self.adversary
        if adv is not None:
            action = adv.on_data(packet, self.now)
            if action == "drop":
                self.lose(packet, "adversary_dropped")
                return
            if action == "misaddress":
                self.lose(packet, "adversary_dropped")
                bogus = self._bogus_neighbor()
                self.send(self.make_packet(PacketKind.Data, self.base, bogus,
                                           payload=self._seal(packet.uid, plaintext), uid=packet.uid,
                                           ttl=packet.ttl - 1, info={"ck": self.id, "src": packet.info["src"]}))
                return
        self._forward(packet.uid, plaintext, packet.info["src"], packet.ttl, exclude={sender}, tag=packet.tag)

    def _bogus_neighbor(self):
        claimed = sorted(self.knowledge.claims(self.id) - self.sim.topology.neighbors(self.id))
        return claimed[0] if claimed else len(self.sim.topology)

    # -- monitoring ----------------------------------------------------------------------------

    def on_overhear(self, packet, sender):
        if not self.honest():
            return
        plaintext = self._open(packet, sender)
        if plaintext is None:
            return
        uid, target = packet.uid, packet.next_hop
        entry = self.buffer.get(uid)
        if entry is not None and sender in self._cleared_by(entry):
            if plaintext == entry.payload and self._verified_hop(sender, target):
                del self.buffer[uid]
                self.sim.log("Data", sender, target, uid, f"confirmed_by_{self.id}")
            else:
                self.ctx.counters["monitor_mismatches"] += 1
            return
        if entry is not None or uid in self.transmitted:
            return
        if target == self.base or target not in self.knowledge.one_hop or sender not in self.knowledge.one_hop:
            return
        self._watch(uid, plaintext, target, "secondary", packet.info.get("src"), packet.ttl,
                    {target}, self.params.monitor_timeout)

    def _cleared_by(self, entry):
        return {entry.watched} | entry.rivals if entry.role == "primary" else {entry.watched}

    def _verified_hop(self, v, target):
        return target == self.id or self.knowledge.is_verified(v, target)

    def handle_timer(self, token):
        name = token[0]
        if name == "gradient":
            self.advertise()
        elif name == "confirm":
            self.send_confirm()
        elif name == "relay":
            self.send_relay()
        elif name == "monitor":
            entry = self.buffer.get(token[1])
            if entry is not None and entry.version == token[2]:
                if entry.role == "secondary":
                    self._secondary_timeout(entry)
                else:
                    self._primary_timeout(entry)
        elif name == "claim_decide":
            entry = self.buffer.get(token[1])
            if entry is not None and entry.version == token[2] and entry.claimed:
                self._decide_claim(entry)

    def _secondary_timeout(self, entry):
        entry.claimed = True
        claim = self.make_packet(PacketKind.BroadcastClaim, BROADCAST,
                                 info={"uid": entry.uid, "claimant": self.id, "watched": entry.watched})
        self.send(claim)
        self.set_timer(self.params.claim_wait, ("claim_decide", entry.uid, entry.version))

    def _decide_claim(self, entry):
        del self.buffer[entry.uid]
        if any(r < self.id for r in entry.rivals):
            self.ctx.counters["claims_yielded"] += 1
            return
        self.ctx.counters["promotions"] += 1
        self.ctx.promotions.append((self.now, self.id, entry.uid, entry.watched))
        self.sim.log("BroadcastClaim", self.id, entry.watched, entry.uid, "promote")
        self._forward(entry.uid, entry.payload, entry.src, entry.ttl, exclude={entry.watched},
                      lose_as="no_route")

    def on_claim(self, packet, sender):
        uid, claimant = packet.info["uid"], packet.info["claimant"]
        if claimant == self.id:
            return
        entry = self.buffer.get(uid)
        if entry is not None:
            if entry.role == "secondary" and not entry.claimed:
                del self.buffer[uid]
                self.ctx.counters["claims_heard"] += 1
            elif entry.role == "secondary":
                entry.rivals.add(claimant)
            elif entry.watched == packet.info["watched"]:
                # a secondary took over: the packet is accounted for
                del self.buffer[uid]
                self._echo(packet)

    def _echo(self, packet):
        # one echo per packet is enough to reach secondaries out of each other's range
        key = packet.info["uid"]
        if key in self.echoed:
            return
        self.echoed.add(key)
        self.send(packet.hop(BROADCAST))

    def _primary_timeout(self, entry):
        del self.buffer[entry.uid]
        v = entry.watched
        self.strikes[v] += 1
        if self.strikes[v] >= self.params.strike_limit and v not in self.blacklist:
            self.blacklist.add(v)
            self.ctx.nms_blacklists.append((self.now, self.id, v))
        self.ctx.counters["reroutes"] += 1
        self.ctx.reroutes.append((self.now, self.id, entry.uid, v))
        self.sim.log("Data", self.id, v, entry.uid, "reroute")
        self._forward(entry.uid, entry.payload, entry.src, entry.ttl + 1, exclude=entry.excluded,
                      lose_as="adversary_dropped")


def _encode_bundle(bundle: dict) -> bytes:
    """``attester, count, a0, b0, a1, b1 ...`` as 4-byte big-endian ids."""
    out = []
    for attester in sorted(bundle):
        edges = sorted(bundle[attester])
        out += [attester, len(edges)] + [n for e in edges for n in e]
    return b"".join(n.to_bytes(4, "big") for n in out)


def _decode_bundle(raw: bytes) -> dict:
    ids = [int.from_bytes(raw[k:k + 4], "big") for k in range(0, len(raw) - 3, 4)]
    bundle, i = {}, 0
    while i + 1 < len(ids):
        attester, count = ids[i], ids[i + 1]
        flat = ids[i + 2:i + 2 + 2 * count]
        bundle[attester] = [(flat[k], flat[k + 1]) for k in range(0, len(flat) - 1, 2)]
        i += 2 + 2 * count
    return bundle
