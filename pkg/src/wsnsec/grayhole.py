"""Grayhole detection from per-neighbour forwarding evidence.

Every node keeps a DRI table: for each one-hop neighbour, whether it has
forwarded data that came from that neighbour and data sent on to it.  After a
quiet period, neighbours with neither bit set become suspects.  A suspect is
first probed locally (a probe routed through it to a trusted neighbour); a
failed probe starts a cooperative round in which the suspect's other
neighbours each push three further probes through it and report, over routes
that avoid it, that they did so.  A neighbour none of whose probes arrived is
evidence of selective dropping.
"""

from dataclasses import dataclass, field
import itertools
import logging

from .core import PacketKind
from .routing import AodvAgent

log = logging.getLogger(__name__)

# kinds the suspect must never be handed while it is being checked
SN_BLIND_KINDS = frozenset({PacketKind.CoopDetectRequest, PacketKind.Notification,
                            PacketKind.ProbeQuery, PacketKind.ProbeReply})


@dataclass
class DriEntry:
    from_bit: int = 0
    through_bit: int = 0
    rts_count: int = 0
    cts_count: int = 0
    check_bit: int = 0
    cleared_at: int | None = None

    @property
    def rts_cts_ratio(self):
        return self.rts_count / self.cts_count if self.cts_count else None

    def bits(self) -> tuple:
        return self.from_bit, self.through_bit, self.check_bit


class DriTable:
    def __init__(self, neighbors=()):
        self.entries = {n: DriEntry() for n in neighbors}

    def __contains__(self, node):
        return node in self.entries

    def __getitem__(self, node) -> DriEntry:
        return self.entries[node]

    def add_neighbor(self, node: int):
        self.entries.setdefault(node, DriEntry())

    def record(self, neighbor: int, direction: str):
        if neighbor not in self.entries:
            raise KeyError(f"{neighbor} is not a neighbour in this table")
        if direction == "from":
            self.entries[neighbor].from_bit = 1
        elif direction == "through":
            self.entries[neighbor].through_bit = 1
        else:
            raise ValueError(f"direction must be 'from' or 'through', not {direction!r}")

    def record_rts_cts(self, neighbor: int, which: str):
        if neighbor not in self.entries:
            raise KeyError(f"{neighbor} is not a neighbour in this table")
        if which == "rts":
            self.entries[neighbor].rts_count += 1
        elif which == "cts":
            self.entries[neighbor].cts_count += 1
        else:
            raise ValueError("which must be 'rts' or 'cts'")

    def clear(self, neighbor: int, now: int):
        entry = self.entries[neighbor]
        entry.check_bit = 1
        entry.cleared_at = now

    def rows(self) -> dict:
        return {n: self.entries[n].bits() for n in sorted(self.entries)}


def select_suspects(table: DriTable, now: int | None = None, threshold_interval: int | None = None,
                    blacklist=()) -> set:
    """Neighbours with no forwarding interaction in either direction.

    A neighbour cleared by a successful local probe is exempt until another
    ``threshold_interval`` has passed.
    """
    out = set()
    for n, e in table.entries.items():
        if e.from_bit or e.through_bit or n in blacklist:
            continue
        if e.cleared_at is not None and now is not None and threshold_interval is not None \
                and now - e.cleared_at < threshold_interval:
            continue
        out.add(n)
    return out


def select_cooperative_node(table: DriTable, suspects=(), blacklist=()):
    """Most-interactive non-suspect neighbour, lowest id on ties; None if none."""
    best = None
    for n in sorted(table.entries):
        if n in suspects or n in blacklist:
            continue
        e = table.entries[n]
        score = e.from_bit + e.through_bit
        if score == 0:
            continue
        if best is None or score > best[0]:
            best = (score, n)
    return None if best is None else best[1]


def probe_check_verdict(statuses: dict) -> set:
    """Neighbours whose probes all went missing."""
    return {n for n, s in statuses.items() if s == 0}


@dataclass
class SuspicionVerdict:
    sn: int
    statuses: dict
    tick: int
    round_id: tuple

    @property
    def flagged(self) -> set:
        return probe_check_verdict(self.statuses)


@dataclass
class LocalCheck:
    sn: int
    cn: int | None
    started: int
    probe_uid: int | None = None
    outcome: str | None = None


@dataclass
class CoopRound:
    sn: int
    started: int
    participants: set
    arrivals: set = field(default_factory=set)
    notifiers: set = field(default_factory=set)


class DriAgent(AodvAgent):
    def __init__(self, sim, node, ctx):
        super().__init__(sim, node, ctx)
        self.dri = DriTable()
        self.checks = {}  # id -> LocalCheck
        self.rounds = {}  # round id -> CoopRound
        self.received_probes = set()  # (origin, check id) probes that reached us as CN
        self.busy = set()  # suspects with a check or round in progress
        self._ids = itertools.count(1)
        self.scan_enabled = True

    def start(self):
        super().start()
        if self.scan_enabled and self.params.threshold_interval > 0:
            self.set_timer(self.params.threshold_interval, ("scan",))

    def on_hello(self, packet, sender):
        super().on_hello(packet, sender)
        if sender in self.knowledge.one_hop:
            self.dri.add_neighbor(sender)

    # -- evidence -----------------------------------------------------------------

    def note_forward(self, came_from, going_to):
        if came_from in self.dri:
            self.dri.record(came_from, "from")
        if going_to in self.dri:
            self.dri.record(going_to, "through")

    def handle(self, packet, sender):
        if packet.kind == PacketKind.Data and packet.next_hop == self.id and sender in self.dri:
            self.dri.record_rts_cts(sender, "rts")
        super().handle(packet, sender)

    def send(self, packet):
        if packet.kind == PacketKind.Data and packet.next_hop in self.dri:
            self.dri.record_rts_cts(packet.next_hop, "cts")
        super().send(packet)

    # -- scanning ---------------------------------------------------------------------

    def handle_other_timer(self, token):
        name = token[0]
        if name == "scan":
            self.scan()
            self.set_timer(self.params.threshold_interval, ("scan",))
        elif name == "probe_wait":
            self._query_cn(token[1])
        elif name == "query_timeout":
            self._finish_check(token[1], "inconclusive")
        elif name == "coop_end":
            self._close_round(token[1])
        elif name == "script":
            if token[1] == "local_check":
                self.local_check(token[2])
            else:
                self.cooperative_detection(token[2])
        elif name == "further_probe":
            _, rid, sn, initiator, left = token
            self._send_further_probe(rid, sn, initiator, left)
        else:
            super().handle_other_timer(token)

    def scan(self):
        if not self.honest():
            return
        suspects = select_suspects(self.dri, self.now, self.params.threshold_interval, self.blacklist)
        for sn in sorted(suspects - self.busy):
            self.local_check(sn, suspects)

    # -- local anomaly check --------------------------------------------------------------

    def local_check(self, sn: int, suspects=None):
        """Probe ``sn`` through a trusted neighbour; escalate if the probe is lost."""
        if suspects is None:
            suspects = select_suspects(self.dri, self.now, self.params.threshold_interval, self.blacklist)
        cn = select_cooperative_node(self.dri, suspects | {sn}, self.blacklist)
        cid = next(self._ids)
        check = self.checks[cid] = LocalCheck(sn, cn, self.now)
        self.busy.add(sn)
        if cn is None:
            check.outcome = "no_cn"
            self.ctx.local_checks.append((self.now, self.id, sn, None, "no_cn"))
            self.checks.pop(cid)
            self.cooperative_detection(sn)
            return cid
        self.query_route(sn, cn, lambda rrep, c=cid: self._send_probe(c, rrep), broadcast=True)
        return cid

    def _send_probe(self, cid, rrep):
        check = self.checks.get(cid)
        if check is None:
            return
        if rrep is None:
            self._finish_check(cid, "inconclusive")
            return
        hops = rrep.info["hops"] + 1
        probe = self.make_packet(PacketKind.Probe, check.cn, check.sn, ttl=hops + 1,
                                 info={"check": cid})
        check.probe_uid = probe.uid
        self.send(probe)
        self.set_timer(2 * hops + self.params.probe_slack, ("probe_wait", cid))

    def _query_cn(self, cid):
        check = self.checks.get(cid)
        if check is None:
            return
        query = self.make_packet(PacketKind.ProbeQuery, check.cn, info={"check": cid})
        self.send_routed(query, avoid=(check.sn,), on_fail=lambda p, c=cid: self._finish_check(c, "inconclusive"))
        self.set_timer(self.params.coop_round_timeout, ("query_timeout", cid))

    def _finish_check(self, cid, outcome):
        check = self.checks.pop(cid, None)
        if check is None:
            return
        check.outcome = outcome
        self.ctx.local_checks.append((self.now, self.id, check.sn, check.cn, outcome))
        self.sim.log("ProbeReply", self.id, check.sn, "-", f"local={outcome}")
        if outcome == "cleared":
            self.dri.clear(check.sn, self.now)
            self.busy.discard(check.sn)
        elif outcome == "escalate":
            self.cooperative_detection(check.sn)
        else:
            self.busy.discard(check.sn)

    # -- cooperative round -------------------------------------------------------------------

    def cooperative_detection(self, sn: int):
        rid = (self.id, next(self._ids))
        participants = set(self.knowledge.claims(sn)) - {self.id}
        self.rounds[rid] = CoopRound(sn, self.now, participants)
        self.busy.add(sn)
        for x in sorted(participants):
            req = self.make_packet(PacketKind.CoopDetectRequest, x, info={"round": rid, "sn": sn})
            self.send_routed(req, avoid=(sn,))
        self.set_timer(self.params.coop_round_timeout, ("coop_end", rid))
        return rid

    def _close_round(self, rid):
        rnd = self.rounds.pop(rid, None)
        if rnd is None:
            return
        statuses = {x: int(x in rnd.arrivals) for x in sorted(rnd.notifiers)}
        verdict = SuspicionVerdict(rnd.sn, statuses, self.now, rid)
        self.ctx.probe_rounds.append((self.now, self.id, rnd.sn, statuses))
        self.busy.discard(rnd.sn)
        self.blacklist_update(verdict)

    def blacklist_update(self, verdict: SuspicionVerdict):
        flagged = verdict.flagged
        if not flagged:
            return
        self.blacklist.add(verdict.sn)
        self.forget_via(verdict.sn)
        self.ctx.detections.append((self.now, self.id, verdict.sn, tuple(sorted(flagged)), verdict.round_id))
        self.sim.log("Notification", self.id, verdict.sn, "-", "blacklist")

    # -- participant and cooperative-node roles ------------------------------------------------

    def on_control(self, packet, sender):
        kind, info = packet.kind, packet.info
        if kind == PacketKind.Probe:
            self.received_probes.add((packet.src, info["check"]))
        elif kind == PacketKind.ProbeQuery:
            got = (packet.src, info["check"]) in self.received_probes
            reply = self.make_packet(PacketKind.ProbeReply, packet.src,
                                     info={"check": info["check"], "received": got})
            self.send_routed(reply, avoid=info.get("avoid", ()))
        elif kind == PacketKind.ProbeReply:
            cid = info["check"]
            if cid in self.checks:
                self._finish_check(cid, "cleared" if info["received"] else "escalate")
        elif kind == PacketKind.CoopDetectRequest:
            if self.honest():
                self._join_round(info["round"], info["sn"], packet.src)
        elif kind == PacketKind.FurtherProbe:
            rnd = self.rounds.get(info["round"])
            if rnd is not None:
                rnd.arrivals.add(packet.src)
        elif kind == PacketKind.Notification:
            rnd = self.rounds.get(info["round"])
            if rnd is not None and info["sn"] == rnd.sn:
                rnd.notifiers.add(packet.src)

    def _join_round(self, rid, sn, initiator):
        if sn not in self.knowledge.one_hop:
            return
        self.query_route(sn, initiator,
                         lambda rrep: self._send_further_probe(rid, sn, initiator, self.params.further_probes))

    def _send_further_probe(self, rid, sn, initiator, left):
        probe = self.make_packet(PacketKind.FurtherProbe, initiator, sn, ttl=3, info={"round": rid})
        self.send(probe)
        if left > 1:
            self.set_timer(self.params.probe_spacing, ("further_probe", rid, sn, initiator, left - 1))
            return
        note = self.make_packet(PacketKind.Notification, initiator, info={"round": rid, "sn": sn})
        self.send_routed(note, avoid=(sn,))
