"""Redundant two-path baseline: every data packet is sent along two
node-disjoint gradient paths and counts as delivered if either copy arrives."""

from dataclasses import replace

from .agent import SensorAgent
from .core import PacketKind
from .nms import GradientMixin


def gradient_paths(source: int, agents: dict, base: int) -> list:
    """Greedy gradient path plus, when one exists, a disjoint second path.

    The second path is a shortest path over gradient edges (toward a
    neighbour with a smaller advertised hop count) that avoids every
    interior node of the first.
    """
    first = [source]
    seen = {source}
    while first[-1] != base:
        nxt = agents[first[-1]].next_hop()
        if nxt is None or nxt in seen:
            return []
        first.append(nxt)
        seen.add(nxt)
    interior = set(first[1:-1])
    parent = {source: None}
    frontier = [source]
    while frontier and base not in parent:
        nxt_frontier = []
        for u in frontier:
            a = agents[u]
            for v in sorted(a.neighbor_hops):
                if v in parent or v in interior or v in a.blacklist:
                    continue
                if a.neighbor_hops[v] >= a.hops:
                    continue
                if u == source and v == first[1] and v != base:
                    continue
                parent[v] = u
                nxt_frontier.append(v)
        frontier = nxt_frontier
    paths = [first]
    if base in parent:
        second = [base]
        while parent[second[-1]] is not None:
            second.append(parent[second[-1]])
        second.reverse()
        if second != first and not (len(first) == 2 and len(second) == 2):
            paths.append(second)
    return paths


class MultipathAgent(GradientMixin, SensorAgent):
    def __init__(self, sim, node, ctx):
        super().__init__(sim, node, ctx)
        self.init_gradient()
        self.peers = None  # node -> agent, wired in by the harness

    def start(self):
        super().start()
        self.start_gradient()

    def handle_timer(self, token):
        if token[0] == "gradient":
            self.advertise()

    def route_data(self, packet):
        paths = gradient_paths(self.id, self.peers, self.base)
        if not paths:
            self.lose(packet, "no_route")
            return
        self.ctx.counters["multipath_copies"] += len(paths)
        for path in paths:
            self.send(replace(packet, next_hop=path[1], info={**packet.info, "route": tuple(path)}))

    def handle(self, packet, sender):
        if packet.kind == PacketKind.Gradient:
            self.on_gradient(packet, sender)
        elif packet.kind == PacketKind.Data and packet.next_hop == self.id:
            if self.is_base:
                self.accept_data(packet)
                return
            adv = self.adversary
            if adv is not None and adv.on_data(packet, self.now) != "forward":
                self.lose(packet, "adversary_dropped")
                return
            if packet.ttl <= 1:
                self.lose(packet, "ttl_expired")
                return
            route = packet.info["route"]
            i = route.index(self.id)
            self.send(packet.hop(route[i + 1]))
