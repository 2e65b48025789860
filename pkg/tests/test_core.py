import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsnsec.core import (BROADCAST, Agent, DataLedger, EnergyMeter, EventQueue, LooseClock, Packet,
                         PacketKind, RadioConfig, SchedulingError, Simulator, TopologyError,
                         build_topology, derive_seed, stream)


def _line(n):
    return build_topology({"nodes": list(range(n)), "edges": [[i, i + 1] for i in range(n - 1)]})


# -- topology ------------------------------------------------------------------

def test_explicit_topology_is_symmetric():
    t = build_topology({"nodes": [0, 1, 2], "edges": [[0, 1], [2, 1]]})
    assert t.neighbors(1) == {0, 2}
    assert t.neighbors(0) == {1}
    assert t.edges() == [(0, 1), (1, 2)]


@pytest.mark.parametrize("spec", [
    {"nodes": [0, 0, 1]},
    {"nodes": [0, 2]},
    {"nodes": [0, 1], "edges": [[0, 5]]},
    {"nodes": [0, 1], "edges": [[1, 1]]},
    {"mode": "hexagonal", "nodes": [0]},
])
def test_bad_topologies_rejected(spec):
    with pytest.raises(TopologyError):
        build_topology(spec)


def test_unit_disk_uses_inclusive_range():
    t = build_topology({"mode": "unit-disk", "radio_range": 1.0, "positions": [[0, 0], [1, 0], [2.5, 0]]})
    assert t.neighbors(0) == {1}
    assert t.neighbors(2) == frozenset()


def test_grid_corner_hop_counts():
    four = build_topology({"mode": "grid", "rows": 10, "cols": 10, "radio_range": 1.0})
    eight = build_topology({"mode": "grid", "rows": 10, "cols": 10, "radio_range": 1.5})
    # 4-neighbour grid: Manhattan distance; 8-neighbour grid: Chebyshev distance
    assert four.hop_distances(0)[99] == 18
    assert eight.hop_distances(0)[99] == 9
    assert four.hop_distances(0)[9] == 9
    assert len(four.neighbors(55)) == 4 and len(eight.neighbors(55)) == 8


def test_hop_distances_respect_exclusions():
    t = _line(4)
    assert t.hop_distances(0) == {0: 0, 1: 1, 2: 2, 3: 3}
    assert t.hop_distances(0, excluded={2}) == {0: 0, 1: 1}


# -- packets, energy, clocks ----------------------------------------------------------

def test_packet_size_bits():
    p = Packet(1, PacketKind.Data, 0, 1, payload=b"x" * 16)
    assert p.size_bits == 128 + 128
    assert Packet(1, PacketKind.Hello, 0, BROADCAST).size_bits == 128


def test_hop_decrements_ttl_only():
    p = Packet(1, PacketKind.Data, 0, 3, next_hop=1, payload=b"ab", ttl=5)
    q = p.hop(2)
    assert (q.next_hop, q.ttl, q.payload, q.uid) == (2, 4, b"ab", 1)


def test_energy_one_bit_is_a_thousand_instructions():
    m = EnergyMeter([0, 1])
    assert m.charge(0, "transmit", 1) == 1000
    assert m.charge(0, "receive", 2) == 1000
    assert m.charge(1, "compute", 7) == 7
    assert m.total() == 2007
    assert m.total(0, "transmit") == 1000
    with pytest.raises(ValueError):
        m.charge(0, "transmit", -1)
    with pytest.raises(ValueError):
        m.charge(0, "sleep", 1)
    with pytest.raises(KeyError):
        m.charge(9, "compute", 1)


@given(st.lists(st.tuples(st.integers(0, 3), st.sampled_from(["transmit", "receive", "compute"]),
                          st.integers(0, 10_000)), max_size=50))
def test_energy_conservation_and_monotonic(charges):
    m = EnergyMeter(range(4))
    last = 0
    for node, cause, amount in charges:
        m.charge(node, cause, amount)
        assert m.total() >= last
        last = m.total()
    assert m.total() == m.issued == sum(m.snapshot().values())


@given(st.integers(0, 50), st.integers(0, 2**32))
def test_clock_offsets_within_epsilon(epsilon, seed):
    clock = LooseClock(range(20), epsilon, stream(seed, "clock"))
    assert all(abs(o) <= epsilon for o in clock.offsets.values())


def test_streams_are_independent_and_reproducible():
    a1 = [stream(7, "adversary/3").random() for _ in range(1)]
    a2 = [stream(7, "adversary/3").random() for _ in range(1)]
    assert a1 == a2
    assert derive_seed(7, "adversary/3") != derive_seed(7, "channel")
    assert derive_seed(7, "x") != derive_seed(8, "x")


# -- event queue ------------------------------------------------------------------------

def test_event_queue_orders_by_time_then_insertion():
    q = EventQueue()
    q.at(5, "timer", 0, token="b")
    q.at(3, "timer", 0, token="a")
    q.at(5, "timer", 0, token="c")
    order = []
    while len(q):
        order.append(q.advance().token)
    assert order == ["a", "b", "c"]
    assert q.now == 5
    with pytest.raises(SchedulingError):
        q.at(4, "timer", 0)


@given(st.lists(st.integers(0, 100), max_size=60))
def test_event_queue_never_goes_backwards(times):
    q = EventQueue()
    for t in times:
        q.at(t, "timer", 0, token=t)
    seen = []
    while len(q):
        seen.append(q.advance().fire_time)
    assert seen == sorted(times)


# -- simulator --------------------------------------------------------------------------

class Recorder(Agent):
    def __init__(self, sim, node, promiscuous=False):
        super().__init__(sim, node)
        self.promiscuous = promiscuous
        self.got = []
        self.timers = []

    def receive(self, packet, sender):
        self.got.append((self.now, packet.uid, sender))

    def on_timer(self, token):
        self.timers.append((self.now, token))


def test_unicast_heard_only_by_addressee_unless_promiscuous():
    sim = Simulator(build_topology({"nodes": [0, 1, 2], "edges": [[0, 1], [0, 2]]}))
    a = Recorder(sim, 0)
    b = Recorder(sim, 1)
    c = Recorder(sim, 2, promiscuous=True)
    a.send(a.make_packet(PacketKind.Data, 1, 1, payload=b"hi"))
    sim.run()
    assert b.got == [(1, 1, 0)]
    assert c.got == [(1, 1, 0)]
    bits = 128 + 16
    assert sim.energy.total(0, "transmit") == bits * 1000
    assert sim.energy.total(1, "receive") == bits * 500
    assert sim.energy.total(2, "receive") == bits * 500


def test_broadcast_reaches_all_neighbours_and_timers_fire():
    sim = Simulator(_line(3))
    agents = [Recorder(sim, n) for n in range(3)]
    agents[1].send(agents[1].make_packet(PacketKind.Hello, BROADCAST))
    agents[2].set_timer(4, ("ping",))
    sim.run(until=10)
    assert [len(a.got) for a in agents] == [1, 0, 1]
    assert agents[2].timers == [(4, ("ping",))]
    with pytest.raises(SchedulingError):
        sim.set_timer(0, -1, "x")


def test_run_until_stops_before_later_events():
    sim = Simulator(_line(2))
    r = Recorder(sim, 0)
    Recorder(sim, 1)
    r.set_timer(50, "late")
    sim.run(until=20)
    assert r.timers == [] and sim.now == 20
    sim.run()
    assert r.timers == [(50, "late")]


def test_channel_loss_rate_and_ledger():
    sim = Simulator(_line(2), RadioConfig(link_drop_q=0.3), seed=4)
    a, b = Recorder(sim, 0), Recorder(sim, 1)
    for _ in range(4000):
        p = a.make_packet(PacketKind.Data, 1, 1)
        sim.ledger.generate(p.uid, 0, 0)
        a.send(p)
    sim.run()
    rate = 1 - len(b.got) / 4000
    assert abs(rate - 0.3) < 0.03
    assert sim.ledger.tally()["channel_dropped"] == 4000 - len(b.got)


def test_trace_line_format():
    sim = Simulator(_line(2), trace=True)
    a, _ = Recorder(sim, 0), Recorder(sim, 1)
    a.send(a.make_packet(PacketKind.Data, 1, 1))
    a.set_timer(2, ("emit", 1, b"a b"))
    sim.run()
    assert sim.trace[0] == "0 Data 0 1 1 tx"
    for line in sim.trace:
        assert len(line.split(" ")) == 6


def test_ledger_outcomes():
    led = DataLedger()
    for uid in (1, 2, 3, 4):
        led.generate(uid, 0, 0)
    assert led.deliver(1, 5) and not led.deliver(1, 6)
    led.lose(2, "adversary_dropped", 3, 9)
    led.lose(3, "no_route", 3, 9)
    led.lose(3, "ttl_expired", 4, 9)
    led.lose(99, "no_route", 1, 1)  # never generated: ignored
    assert led.outcome(3) == "ttl_expired"
    tally = led.tally()
    assert tally["delivered"] == 1 and tally["unresolved"] == 1
    assert sum(tally.values()) == len(led.generated)
    assert led.copies[1] == 2


def test_adding_agent_for_unknown_node_fails():
    sim = Simulator(_line(2))
    with pytest.raises(KeyError):
        Recorder(sim, 7)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_same_seed_same_channel_losses(seed):
    def once():
        sim = Simulator(_line(2), RadioConfig(link_drop_q=0.5), seed=seed)
        a, b = Recorder(sim, 0), Recorder(sim, 1)
        for _ in range(30):
            a.send(a.make_packet(PacketKind.Data, 1, 1))
        sim.run()
        return b.got
    assert once() == once()
