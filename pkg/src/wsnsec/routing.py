"""On-demand route discovery (a reduced AODV) and the further-request check.

Only the parts the attacks and defences exercise are modelled: flooded
route requests with duplicate suppression, replies along the reverse path,
per-origin sequence numbers and expiring routes.  Route errors and
hello-based link sensing are left out.

A discovery may carry an ``avoid`` set; nodes in it neither relay the
request nor get installed as next hops, which gives the "route that does not
include X" the detection procedures rely on.
"""

from dataclasses import dataclass, field, replace
import logging

from .agent import SensorAgent
from .core import BROADCAST, Packet, PacketKind

log = logging.getLogger(__name__)

# unicast kinds relayed hop by hop along installed routes
ROUTED = frozenset({
    PacketKind.Data, PacketKind.Probe, PacketKind.FurtherProbe, PacketKind.ProbeQuery,
    PacketKind.ProbeReply, PacketKind.Notification, PacketKind.CoopDetectRequest,
    PacketKind.FRq, PacketKind.FRp,
})

NEVER = 1 << 62


@dataclass
class RouteEntry:
    next_hop: int
    hops: int
    seq: int
    expires: int


@dataclass
class Discovery:
    target: int
    avoid: tuple
    rreq_ids: list = field(default_factory=list)
    queue: list = field(default_factory=list)
    callbacks: list = field(default_factory=list)
    retries_left: int = 0
    done: bool = False


class AodvAgent(SensorAgent):
    def __init__(self, sim, node, ctx):
        super().__init__(sim, node, ctx)
        self.routes = {}  # (dst, avoid) -> RouteEntry
        self.seen_rreq = set()
        self.rreq_counter = 0
        self.seq = 0
        self.discoveries = {}  # (target, avoid) -> Discovery
        self.blacklist = set()
        self.heard = set()

    # -- route lookup -------------------------------------------------------------

    def usable(self, hop: int, avoid=()) -> bool:
        return hop not in self.blacklist and hop not in avoid

    def route_for(self, dst: int, avoid=()) -> RouteEntry | None:
        avoid = tuple(avoid)
        if dst == self.id:
            return RouteEntry(self.id, 0, self.seq, NEVER)
        entry = self.routes.get((dst, avoid))
        if entry is not None and entry.expires > self.now and self.usable(entry.next_hop, avoid):
            return entry
        if dst in self.knowledge.one_hop and self.usable(dst, avoid):
            return RouteEntry(dst, 1, 0, NEVER)
        return None

    def has_route(self, dst: int) -> bool:
        return dst == self.id or dst in self.heard or self.route_for(dst) is not None

    def install(self, dst, avoid, next_hop, hops, seq) -> bool:
        key = (dst, tuple(avoid))
        old = self.routes.get(key)
        fresh = old is None or old.expires <= self.now or not self.usable(old.next_hop, avoid)
        if fresh or seq > old.seq or (seq == old.seq and hops < old.hops):
            self.routes[key] = RouteEntry(next_hop, hops, seq, self.now + self.params.route_ttl)
            return True
        return False

    def forget_via(self, node: int):
        for key in [k for k, e in self.routes.items() if e.next_hop == node or k[0] == node]:
            del self.routes[key]

    # -- sending ------------------------------------------------------------------

    def route_data(self, packet: Packet):
        self.send_routed(packet)

    def send_routed(self, packet: Packet, avoid=(), on_fail=None):
        """Send ``packet`` toward ``packet.dst``, discovering a route if needed."""
        avoid = tuple(sorted(avoid))
        if avoid:
            packet = replace(packet, info={**packet.info, "avoid": avoid})
        entry = self.route_for(packet.dst, avoid)
        if entry is not None:
            if entry.expires != NEVER:
                entry.expires = max(entry.expires, self.now + self.params.route_ttl)
            self.send(_readdress(packet, entry.next_hop))
            return
        d = self.discover(packet.dst, avoid)
        d.queue.append(packet)
        if on_fail is not None:
            d.callbacks.append(lambda route, p=packet: route is None and on_fail(p))

    def discover(self, target: int, avoid=(), callback=None, scope=None) -> Discovery:
        key = (target, tuple(avoid))
        d = self.discoveries.get(key)
        if d is None:
            d = Discovery(target, tuple(avoid), retries_left=self.params.rreq_retries)
            self.discoveries[key] = d
            self._flood_rreq(d, scope)
        if callback is not None:
            d.callbacks.append(callback)
        return d

    def _flood_rreq(self, d: Discovery, scope=None):
        self.rreq_counter += 1
        self.seq += 1
        rid = self.rreq_counter
        d.rreq_ids.append(rid)
        self.seen_rreq.add((self.id, rid))
        known = self.routes.get((d.target, d.avoid))
        info = {"origin": self.id, "rreq_id": rid, "target": d.target, "hops": 0,
                "origin_seq": self.seq, "target_seq": known.seq if known else 0, "avoid": d.avoid}
        ttl = 1 if scope == 1 else self.params.data_ttl
        self.send(self.make_packet(PacketKind.Rreq, d.target, BROADCAST, ttl=ttl, info=info))
        self.set_timer(self.params.rreq_timeout, ("rreq_timeout", d.target, d.avoid, rid))

    def query_route(self, via: int, target: int, callback, broadcast=False):
        """Ask for a route to ``target`` and wait for ``via``'s reply only.

        Unicast asks ``via`` alone; ``broadcast`` asks every one-hop neighbour
        (no relaying) but still only ``via``'s reply counts.  ``callback``
        gets the reply packet, or None after ``rrep_wait`` ticks.
        """
        self.rreq_counter += 1
        self.seq += 1
        rid = self.rreq_counter
        self.seen_rreq.add((self.id, rid))
        key = ("probe", rid)
        self.discoveries[key] = d = Discovery(target, ("via", via), [rid])
        d.callbacks.append(callback)
        info = {"origin": self.id, "rreq_id": rid, "target": target, "hops": 0,
                "origin_seq": self.seq, "target_seq": 0, "avoid": (), "probe": True}
        if not broadcast:
            info["only"] = via
        self.send(self.make_packet(PacketKind.Rreq, target, BROADCAST if broadcast else via,
                                   ttl=1, info=info))
        self.set_timer(self.params.rrep_wait, ("probe_rreq_timeout", key))
        return key

    # -- receive --------------------------------------------------------------------

    def handle(self, packet: Packet, sender: int):
        self.heard.add(sender)
        kind = packet.kind
        if kind == PacketKind.Rreq:
            self.on_rreq(packet, sender)
        elif kind == PacketKind.Rrep:
            if packet.next_hop == self.id:
                self.on_rrep(packet, sender)
        elif kind in ROUTED:
            if packet.next_hop == self.id:
                if packet.dst == self.id:
                    self.deliver_local(packet, sender)
                else:
                    self.forward(packet, sender)
            else:
                self.overhear(packet, sender)
        else:
            self.handle_other(packet, sender)

    def handle_other(self, packet, sender):
        pass

    def overhear(self, packet, sender):
        pass

    def on_rreq(self, packet: Packet, sender: int):
        info = packet.info
        origin, rid, target = info["origin"], info["rreq_id"], info["target"]
        avoid = tuple(info.get("avoid", ()))
        if packet.next_hop not in (BROADCAST, self.id):
            return
        if origin == self.id or (origin, rid) in self.seen_rreq:
            return
        if self.id in avoid or not self.usable(sender, avoid):
            return
        self.seen_rreq.add((origin, rid))
        hops = info["hops"] + 1
        self.install(origin, avoid, sender, hops, info["origin_seq"])
        adv = self.adversary
        if adv is not None and adv.answers_rreq(self.now) and target != self.id:
            forged = adv.forged_rrep(self.now, info["target_seq"], self.sim.topology.neighbors(self.id), sender)
            self._send_rrep(info, sender, responder_hops=forged["hops"] - 1, seq=forged["seq"],
                            responder_next=forged["responder_next"])
            return
        if target == self.id:
            self.seq = max(self.seq, info["target_seq"]) + 1
            self._send_rrep(info, sender, responder_hops=0, seq=self.seq, responder_next=None)
            return
        scoped = info.get("probe", False)
        entry = self.route_for(target, avoid)
        if entry is not None and entry.next_hop != sender and (scoped or not avoid):
            self._send_rrep(info, sender, responder_hops=entry.hops, seq=entry.seq,
                            responder_next=entry.next_hop)
            return
        if scoped or packet.ttl <= 1:
            return
        self.send(packet.hop(BROADCAST, info={**info, "hops": hops}))

    def _send_rrep(self, rreq_info, to, responder_hops, seq, responder_next):
        info = {"origin": rreq_info["origin"], "rreq_id": rreq_info["rreq_id"],
                "target": rreq_info["target"], "hops": responder_hops, "seq": seq,
                "responder": self.id, "responder_next": responder_next,
                "avoid": tuple(rreq_info.get("avoid", ())), "probe": rreq_info.get("probe", False)}
        self.send(self.make_packet(PacketKind.Rrep, rreq_info["origin"], to, info=info))

    def on_rrep(self, packet: Packet, sender: int):
        info = packet.info
        avoid = info["avoid"]
        if not self.usable(sender, avoid):
            return
        hops = info["hops"] + 1
        origin, target = info["origin"], info["target"]
        if origin != self.id:
            if info["responder"] == self.id or packet.ttl <= 1:
                return  # our own reply came back, or it has wandered too far
            self.install(target, avoid, sender, hops, info["seq"])
            back = self.route_for(origin, avoid)
            if back is None or back.next_hop == sender:
                return
            self.send(packet.hop(back.next_hop, info={**info, "hops": hops}))
            return
        if info.get("probe"):
            key = ("probe", info["rreq_id"])
            d = self.discoveries.get(key)
            if d is not None and sender == d.avoid[1]:
                del self.discoveries[key]
                for cb in d.callbacks:
                    cb(packet)
            return
        d = self.discoveries.get((target, avoid))
        if d is None or d.done or info["rreq_id"] not in d.rreq_ids:
            return  # late or duplicate reply: the first one already won
        self.on_route_reply(d, packet, sender)

    def on_route_reply(self, d: Discovery, rrep: Packet, sender: int):
        info = rrep.info
        self.routes[(d.target, d.avoid)] = RouteEntry(sender, info["hops"] + 1, info["seq"],
                                                       self.now + self.params.route_ttl)
        self.complete(d)

    def complete(self, d: Discovery):
        d.done = True
        self.discoveries.pop((d.target, d.avoid), None)
        entry = self.route_for(d.target, d.avoid)
        for pkt in d.queue:
            if entry is None:
                self.lose(pkt, "no_route")
            else:
                self.send(_readdress(pkt, entry.next_hop))
        d.queue = []
        for cb in d.callbacks:
            cb(entry)

    def fail(self, d: Discovery):
        d.done = True
        self.discoveries.pop((d.target, d.avoid), None)
        for pkt in d.queue:
            self.lose(pkt, "no_route")
        d.queue = []
        for cb in d.callbacks:
            cb(None)

    def handle_timer(self, token):
        name = token[0]
        if name == "rreq_timeout":
            _, target, avoid, rid = token
            d = self.discoveries.get((target, avoid))
            if d is None or d.done or d.rreq_ids[-1] != rid:
                return
            if d.retries_left > 0:
                d.retries_left -= 1
                self._flood_rreq(d)
            else:
                self.fail(d)
        elif name == "probe_rreq_timeout":
            d = self.discoveries.pop(token[1], None)
            if d is not None:
                for cb in d.callbacks:
                    cb(None)
        else:
            self.handle_other_timer(token)

    def handle_other_timer(self, token):
        pass

    # -- data plane -------------------------------------------------------------------

    def deliver_local(self, packet: Packet, sender: int):
        if packet.kind == PacketKind.Data:
            self.accept_data(packet)
        else:
            self.on_control(packet, sender)

    def on_control(self, packet: Packet, sender: int):
        pass

    def forward(self, packet: Packet, sender: int):
        adv = self.adversary
        if adv is not None:
            action = adv.on_data(packet, self.now)
            if action == "drop":
                self.lose(packet, "adversary_dropped")
                return
            if action == "misaddress":
                self.lose(packet, "adversary_dropped")
                self.send(packet.hop(len(self.sim.topology)))
                return
        if packet.ttl <= 1:
            self.lose(packet, "ttl_expired")
            return
        avoid = tuple(packet.info.get("avoid", ()))
        entry = self.route_for(packet.dst, avoid)
        if entry is None:
            self.lose(packet, "no_route")
            return
        if entry.expires != NEVER:
            entry.expires = max(entry.expires, self.now + self.params.route_ttl)
        if packet.kind == PacketKind.Data:
            self.note_forward(sender, entry.next_hop)
        self.send(packet.hop(entry.next_hop))

    def note_forward(self, came_from: int, going_to: int):
        pass


class FrqAgent(AodvAgent):
    """Origin-side check of a route reply that did not come from the target.

    The reply's sender B1 names its own next hop B2.  The origin asks B2, over
    a route avoiding B1, whether it has routes to B1 and to the destination.
    Two yeses make the route trusted; a no or a missing reply blacklists B1
    and the discovery is repeated.  With no B1-avoiding route at all the check
    is inconclusive and the route is used as is.
    """

    def __init__(self, sim, node, ctx):
        super().__init__(sim, node, ctx)
        self.checks = {}  # check id -> (discovery, b1, b2, route entry)
        self._check_ids = 0

    def on_route_reply(self, d, rrep, sender):
        info = rrep.info
        responder, b2 = info["responder"], info["responder_next"]
        if d.avoid or responder == d.target or b2 is None or b2 == self.id:
            super().on_route_reply(d, rrep, sender)
            return
        d.done = True  # ignore further replies while the check runs
        self._check_ids += 1
        cid = self._check_ids
        entry = RouteEntry(sender, info["hops"] + 1, info["seq"], self.now + self.params.route_ttl)
        self.checks[cid] = (d, responder, b2, entry)
        frq = self.make_packet(PacketKind.FRq, b2, info={"check": cid, "query": (responder, d.target)})
        self.send_routed(frq, avoid=(responder,), on_fail=lambda p, c=cid: self._verdict(c, "inconclusive"))
        self.set_timer(self.params.frp_timeout, ("frp_timeout", cid))

    def on_control(self, packet, sender):
        if packet.kind == PacketKind.FRq:
            b1, dst = packet.info["query"]
            forged = self.adversary.frq_answer(self.now) if self.adversary else None
            if forged is not None:
                ans = forged
            else:
                ans = (self.has_route(b1), self.has_route(dst))
            reply = self.make_packet(PacketKind.FRp, packet.src,
                                     info={"check": packet.info["check"], "answer": ans})
            self.send_routed(reply, avoid=packet.info.get("avoid", ()))
        elif packet.kind == PacketKind.FRp:
            cid = packet.info["check"]
            if cid in self.checks:
                self._verdict(cid, "trusted" if all(packet.info["answer"]) else "flagged")

    def handle_other_timer(self, token):
        if token[0] == "frp_timeout" and token[1] in self.checks:
            _, b1, b2, _ = self.checks[token[1]]
            pending = self.discoveries.get((b2, (b1,)))
            if pending is not None and not pending.done:
                # FRq still waiting for a B1-avoiding route; the clock starts once it is sent
                self.set_timer(self.params.frp_timeout, token)
                return
            self._verdict(token[1], "flagged")

    def _verdict(self, cid, verdict):
        d, b1, b2, entry = self.checks.pop(cid, (None,) * 4)
        if d is None:
            return
        self.ctx.frq_checks.append((self.now, self.id, b1, b2, verdict))
        self.sim.log("FRp", self.id, b1, "-", f"verdict={verdict}")
        key = (d.target, d.avoid)
        if verdict in ("trusted", "inconclusive"):
            # an unanswerable check cannot refute B1, so the route stands
            self.routes[key] = entry
            self.complete(d)
            return
        self.blacklist.add(b1)
        self.forget_via(b1)
        # restart discovery for the queued packets, now excluding b1
        self.discoveries.pop(key, None)
        fresh = self.discover(d.target, d.avoid)
        fresh.queue.extend(d.queue)
        fresh.callbacks.extend(d.callbacks)


def _readdress(packet: Packet, next_hop: int) -> Packet:
    return replace(packet, next_hop=next_hop)
