"""One- and two-hop neighbourhood knowledge learned from hello exchanges."""


class NeighborKnowledge:
    def __init__(self, me: int):
        self.me = me
        self.one_hop = set()
        self.two_hop = {}  # neighbour -> frozenset of ids it claims as neighbours
        self.attested = {}  # frozenset({a, b}) -> {(attester, relayed_by)}

    def claims(self, v: int) -> frozenset:
        return self.two_hop.get(v, frozenset())

    def mutual_edges(self) -> set:
        """Adjacencies in our neighbourhood confirmed by both endpoints' lists."""
        edges = set()
        for a in self.one_hop:
            for b in self.one_hop:
                if a < b and b in self.claims(a) and a in self.claims(b):
                    edges.add((a, b))
        return edges

    def attest(self, attester: int, relayed_by: int, edges):
        """Record ``attester``'s confirmation of ``edges``, heard from ``relayed_by``."""
        for a, b in edges:
            self.attested.setdefault(frozenset((a, b)), set()).add((attester, relayed_by))

    def is_verified(self, v: int, x: int) -> bool:
        """Whether neighbour ``v``'s claim of ``x`` as a neighbour is confirmed.

        A claim counts as verified when a witness other than ``v`` and ``x``
        that is a neighbour of both confirms the pair.  The witness can be
        ourselves, a one-hop neighbour, or a node whose attestation reached us
        through someone other than ``v``.  When ``x`` is our own neighbour its
        list must name ``v`` back.
        """
        if v not in self.one_hop or x not in self.claims(v):
            return False
        if x == self.me:
            return True
        if x in self.one_hop and v not in self.claims(x):
            return False
        if x in self.one_hop:
            return True  # we are a common neighbour of v and x
        for c in self.one_hop:
            if c != v and c != x:
                seen = self.claims(c)
                if v in seen and x in seen:
                    return True
        for attester, via in self.attested.get(frozenset((v, x)), ()):
            if attester not in (v, x) and via != v:
                return True
        return False

    def verified(self, v: int) -> set:
        return {x for x in self.claims(v) if self.is_verified(v, x)}

    def common_with(self, v: int) -> set:
        """Our neighbours that ``v`` also claims (candidate co-monitors)."""
        return (self.one_hop & self.claims(v)) - {v}
