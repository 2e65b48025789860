"""Misbehaviour injected at compromised nodes.

Protocol agents stay honest code; at a handful of decision points they ask
their node's ``Adversary`` (if any) what to do instead.  Every adversarial
drop or forgery is appended to a shared ground-truth ledger so detection
results can be scored exactly.
"""

from dataclasses import dataclass, field
import random

from .core import DATA_PLANE, PacketKind

KINDS = ("Blackhole", "Grayhole", "CoopBlackhole", "Sinkhole", "HelloFlood")

# sequence-number inflation used by forged route replies
FORGED_SEQ_BONUS = 1000


@dataclass(frozen=True)
class AdversaryProfile:
    node: int
    kind: str
    drop_p: float | None = None  # None: the kind's default (see default_drop_p)
    partner: int | None = None
    role: str = "front"  # CoopBlackhole: "front" drops and lies in RREPs, "back" vouches
    advertised_hops: int = 1
    range_multiplier: float = 3.0
    active_from: int = 0
    targets: frozenset | None = None  # Grayhole: only traffic from/to these nodes
    misaddress: bool = False
    claimed_next_hop: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown adversary kind {self.kind!r}")
        if self.drop_p is None:
            object.__setattr__(self, "drop_p", default_drop_p(self.kind))
        if self.targets is not None and not isinstance(self.targets, frozenset):
            object.__setattr__(self, "targets", frozenset(self.targets))
        if not 0.0 <= self.drop_p <= 1.0:
            raise ValueError("drop_p must lie in [0, 1]")
        if self.kind == "CoopBlackhole":
            if self.partner is None:
                raise ValueError("CoopBlackhole needs a partner")
            if self.role not in ("front", "back"):
                raise ValueError("CoopBlackhole role must be 'front' or 'back'")
        if self.kind == "HelloFlood" and self.range_multiplier <= 1:
            raise ValueError("range_multiplier must exceed 1")
        if self.kind == "Sinkhole" and self.advertised_hops < 0:
            raise ValueError("advertised_hops must be non-negative")


def default_drop_p(kind: str) -> float:
    return {"Blackhole": 1.0, "CoopBlackhole": 1.0, "Grayhole": 0.5}.get(kind, 0.0)


def validate_partners(profiles):
    by_node = {p.node: p for p in profiles}
    for p in profiles:
        if p.kind == "CoopBlackhole":
            other = by_node.get(p.partner)
            if other is None or other.kind != "CoopBlackhole" or other.partner != p.node:
                raise ValueError(f"CoopBlackhole {p.node}: partner {p.partner} must be a CoopBlackhole naming it back")


@dataclass
class GroundTruth:
    events: list = field(default_factory=list)  # (tick, node, action, kind, uid)

    def record(self, tick, node, action, kind, uid):
        self.events.append((tick, node, action, kind, uid))

    def drops(self):
        return [e for e in self.events if e[2] == "drop"]

    def first_drop_by(self, node):
        for e in self.events:
            if e[1] == node and e[2] == "drop":
                return e[0]
        return None


class Adversary:
    def __init__(self, profile: AdversaryProfile, rng: random.Random, truth: GroundTruth):
        self.profile = profile
        self.rng = rng
        self.truth = truth

    @property
    def node(self):
        return self.profile.node

    @property
    def kind(self):
        return self.profile.kind

    def active(self, now: int) -> bool:
        return now >= self.profile.active_from

    # -- route control ------------------------------------------------------

    def answers_rreq(self, now: int) -> bool:
        p = self.profile
        if not self.active(now):
            return False
        if p.kind in ("Blackhole", "Grayhole", "Sinkhole"):
            return True
        return p.kind == "CoopBlackhole" and p.role == "front"

    def forged_rrep(self, now, target_seq, neighbors, requester) -> dict:
        """Header fields for a spurious route reply (claims a fresh 1-hop route)."""
        p = self.profile
        if p.kind == "CoopBlackhole":
            claimed = p.partner
        elif p.claimed_next_hop is not None:
            claimed = p.claimed_next_hop
        else:
            others = sorted(n for n in neighbors if n != requester)
            claimed = others[0] if others else None
        hops = p.advertised_hops if p.kind == "Sinkhole" else 1
        self.truth.record(now, p.node, "forge_rrep", "Rrep", None)
        return {"hops": hops, "seq": target_seq + FORGED_SEQ_BONUS, "responder_next": claimed}

    def frq_answer(self, now):
        """Colluding answer to a further request, or None to answer honestly."""
        if self.profile.kind == "CoopBlackhole" and self.active(now):
            self.truth.record(now, self.profile.node, "forge_frp", "FRp", None)
            return True, True
        return None

    def gradient_advert(self, now, true_hops):
        if self.profile.kind == "Sinkhole" and self.active(now):
            return self.profile.advertised_hops
        return true_hops

    def participates(self, now) -> bool:
        """Whether the node runs honest cooperative duties (probing, monitoring)."""
        return not self.active(now)

    # -- data plane -----------------------------------------------------------

    def on_data(self, packet, now) -> str:
        """``"forward"``, ``"drop"`` or ``"misaddress"`` for a packet routed through us."""
        p = self.profile
        if not self.active(now) or packet.kind not in DATA_PLANE:
            return "forward"
        if p.kind == "Blackhole" or (p.kind == "CoopBlackhole" and p.role == "front"):
            drop = True
        elif p.kind in ("Grayhole", "Sinkhole"):
            if p.targets is not None and packet.src not in p.targets and packet.dst not in p.targets:
                return "forward"
            # dedicated stream: one draw per candidate packet
            drop = self.rng.random() < p.drop_p
        else:
            drop = False
        if not drop:
            return "forward"
        action = "misaddress" if p.misaddress else "drop"
        self.truth.record(now, p.node, action, packet.kind.value, packet.uid)
        return action


def range_boost_receivers(topology, profile: AdversaryProfile) -> set:
    """Receivers a hello flooder reaches beyond its true neighbourhood."""
    node = profile.node
    if topology.positions is not None and topology.radio_range:
        return topology.within(node, topology.radio_range * profile.range_multiplier) - {node}
    # explicit graphs without coordinates: hop radius stands in for distance
    hops = int(profile.range_multiplier)
    return {v for v, d in topology.hop_distances(node).items() if 0 < d <= hops}


BOOSTED_KINDS = (PacketKind.Hello, PacketKind.NeighborList, PacketKind.Gradient)
