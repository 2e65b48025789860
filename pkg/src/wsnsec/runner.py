"""Build a simulation from a scenario, run it and summarise the outcome."""

import copy
import csv
import io
from dataclasses import dataclass

from . import crypto, merkle, mutesla
from .adversary import BOOSTED_KINDS, Adversary, AdversaryProfile, range_boost_receivers
from .agent import NodeParams, RunContext
from .core import PacketKind, RadioConfig, Simulator, stream
from .grayhole import DriAgent
from .multipath import MultipathAgent
from .nms import NmsAgent
from .routing import NEVER, AodvAgent, FrqAgent, RouteEntry
from .scenario import RADIO_CONSTANTS, ConfigError, Scenario, parse_scenario

AGENTS = {
    "undefended": AodvAgent,
    "frq_frp": FrqAgent,
    "dri_grayhole": DriAgent,
    "nms": NmsAgent,
    "multipath2": MultipathAgent,
}

# fixed CSV schema; sweep output prepends "value"
COLUMNS = [
    "seed", "protocol", "nodes", "generated", "delivered", "delivery_ratio",
    "adversary_dropped", "channel_dropped", "ttl_expired", "no_route", "unresolved",
    "total_energy", "transmit_energy", "receive_energy", "compute_energy", "max_node_energy",
    "data_transmissions", "control_packets", "promotions", "reroutes",
    "detections", "true_positives", "false_positives", "detection_latency",
    "probe_entries", "probe_flags", "flag_rate", "frq_trusted", "frq_flagged",
    "adversary_drops", "adversary_forgeries", "blacklisted",
    "mutesla_authenticated", "snep_accepted", "merkle_verified",
]


@dataclass
class RunResult:
    scenario: Scenario
    seed: int
    sim: Simulator
    ctx: RunContext
    agents: dict
    metrics: dict

    @property
    def trace(self) -> list:
        return self.sim.trace


def _payload(source: int, k: int, size: int) -> bytes:
    block = crypto.hash(f"payload/{source}/{k}".encode())
    return (block * (size // len(block) + 1))[:size]


def build(scenario: Scenario, seed: int | None = None, trace: bool = False):
    """Wire up simulator, agents, keys and adversaries without running."""
    seed = scenario.seed if seed is None else seed
    topo = scenario.build_topology()
    consts = dict(scenario.constants)
    radio_kw = {k: consts.pop(k) for k in RADIO_CONSTANTS if k in consts}
    for k in ("tx_cost_per_bit", "rx_cost_per_bit", "header_bits"):
        if k in radio_kw:
            radio_kw[k] = int(radio_kw[k])
    radio = RadioConfig(**radio_kw)
    defaults = NodeParams()
    params = NodeParams(**{k: type(getattr(defaults, k))(v) for k, v in consts.items()})
    sim = Simulator(topo, radio, seed=seed, epsilon=scenario.epsilon, trace=trace)
    ctx = RunContext(params, scenario.base_station)
    ctx.master = crypto.hash(f"master/{seed}".encode())[:crypto.KEY_LEN]
    ctx.use_snep = scenario.auth.snep
    ctx.use_mutesla = scenario.auth.mutesla
    ctx.use_merkle = scenario.auth.merkle
    ctx.bootstrap = scenario.protocol in ("dri_grayhole", "nms", "multipath2") or scenario.auth.merkle
    if ctx.use_mutesla:
        ctx.chain = mutesla.generate_chain(crypto.derive_key(ctx.master, "mutesla"), params.mutesla_chain,
                                           params.mutesla_interval, disclosure_lag=params.mutesla_lag)
    if ctx.use_merkle:
        ctx.node_pks = {n: crypto.derive_key(ctx.node_master(n), "pk") for n in topo.nodes}
        ctx.merkle_tree = merkle.build_tree(merkle.KeyDirectory(ctx.node_pks.items()))

    cls = AGENTS[scenario.protocol]
    agents = {n: cls(sim, n, ctx) for n in topo.nodes}
    if scenario.protocol == "multipath2":
        for a in agents.values():
            a.peers = agents
    if scenario.protocol == "dri_grayhole":
        for a in agents.values():
            a.scan_enabled = scenario.dri_scan

    profiles = [AdversaryProfile(**spec.model_dump()) for spec in scenario.adversaries]
    for p in profiles:
        agents[p.node].adversary = Adversary(p, stream(seed, f"adversary/{p.node}"), ctx.truth)
        if p.kind == "HelloFlood":
            sim.boost_range(p.node, range_boost_receivers(topo, p), BOOSTED_KINDS, p.active_from)

    for node, table in (scenario.static_routes or {}).items():
        for dst, hop in table.items():
            agents[node].routes[(dst, ())] = RouteEntry(hop, 1, 0, NEVER)

    for a in agents.values():
        a.start()
    for t in scenario.traffic:
        dst = scenario.base_station if t.destination is None else t.destination
        for k in range(t.count):
            sim.set_timer(t.source, t.start + k * t.period, ("emit", dst, _payload(t.source, k, t.payload_bytes)))
    for act in scenario.actions:
        sim.set_timer(act.node, act.tick, ("script", act.action, act.suspect))
    return sim, ctx, agents, seed


def run(scenario: Scenario, seed: int | None = None, trace: bool = False) -> RunResult:
    sim, ctx, agents, seed = build(scenario, seed, trace)
    sim.run(until=scenario.duration)
    metrics = collect_metrics(scenario, sim, ctx, agents, seed)
    return RunResult(scenario, seed, sim, ctx, agents, metrics)


def collect_metrics(scenario, sim, ctx, agents, seed) -> dict:
    tally = sim.ledger.tally()
    generated = len(sim.ledger.generated)
    delivered = tally["delivered"]
    energy = sim.energy
    adversaries = {a.node for a in scenario.adversaries}
    data_tx = sum(1 for t in sim.transmissions if t[2] == PacketKind.Data)

    tp, fp, latencies, first_hit = 0, 0, [], {}
    for tick, _, suspect, _, _ in ctx.detections:
        if suspect in adversaries:
            tp += 1
            first_hit.setdefault(suspect, tick)
        else:
            fp += 1
    for node, tick in first_hit.items():
        first_drop = ctx.truth.first_drop_by(node)
        if first_drop is not None and tick >= first_drop:
            latencies.append(tick - first_drop)

    entries = sum(len(r[3]) for r in ctx.probe_rounds)
    flags = sum(1 for r in ctx.probe_rounds for s in r[3].values() if s == 0)
    blacklisted = set()
    for a in agents.values():
        if a.adversary is None:
            blacklisted |= getattr(a, "blacklist", set())
    per_node = energy.snapshot()
    return {
        "seed": seed,
        "protocol": scenario.protocol,
        "nodes": len(sim.topology),
        "generated": generated,
        "delivered": delivered,
        "delivery_ratio": delivered / generated if generated else 1.0,
        **{k: tally[k] for k in ("adversary_dropped", "channel_dropped", "ttl_expired", "no_route", "unresolved")},
        "total_energy": energy.total(),
        "transmit_energy": energy.total(cause="transmit"),
        "receive_energy": energy.total(cause="receive"),
        "compute_energy": energy.total(cause="compute"),
        "max_node_energy": max(per_node.values()) if per_node else 0,
        "data_transmissions": data_tx,
        "control_packets": len(sim.transmissions) - data_tx,
        "promotions": len(ctx.promotions),
        "reroutes": len(ctx.reroutes),
        "detections": len(ctx.detections),
        "true_positives": tp,
        "false_positives": fp,
        "detection_latency": sum(latencies) / len(latencies) if latencies else None,
        "probe_entries": entries,
        "probe_flags": flags,
        "flag_rate": flags / entries if entries else None,
        "frq_trusted": sum(1 for c in ctx.frq_checks if c[4] == "trusted"),
        "frq_flagged": sum(1 for c in ctx.frq_checks if c[4] != "trusted"),
        "adversary_drops": len(ctx.truth.drops()),
        "adversary_forgeries": sum(1 for e in ctx.truth.events if e[2].startswith("forge")),
        "blacklisted": ";".join(str(n) for n in sorted(blacklisted)),
        "mutesla_authenticated": ctx.counters["mutesla_authenticated"],
        "snep_accepted": ctx.counters["snep_accepted"],
        "merkle_verified": ctx.counters["merkle_verified"],
        "per_node_energy": per_node,
    }


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def metrics_rows_csv(rows: list, leading=()) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(leading) + COLUMNS)
    for lead, metrics in rows:
        w.writerow([_cell(x) for x in lead] + [_cell(metrics[c]) for c in COLUMNS])
    return buf.getvalue()


def write_csv(path, rows: list, leading=()):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(metrics_rows_csv(rows, leading))


# -- sweeps -----------------------------------------------------------------------

CATEGORICAL_AXES = {"protocol"}


def _locate(doc: dict, axis: str):
    parts = axis.split(".")
    node = doc
    for p in parts[:-1]:
        node = node[int(p)] if isinstance(node, list) else node.setdefault(p, {})
    return node, parts[-1]


def apply_axis(scenario: Scenario, axis: str, value) -> Scenario:
    doc = scenario.model_dump(mode="json")
    try:
        parent, key = _locate(doc, axis)
        current = parent[int(key)] if isinstance(parent, list) else parent.get(key)
    except (KeyError, IndexError, ValueError, TypeError):
        raise ConfigError(f"axis {axis!r} does not name a scenario field") from None
    if axis in CATEGORICAL_AXES:
        parent[key] = str(value)
    else:
        if isinstance(current, bool) or (current is not None and not isinstance(current, (int, float))):
            raise ConfigError(f"axis {axis!r} is not numeric")
        try:
            num = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"axis {axis!r}: value {value!r} is not a number") from None
        if isinstance(current, int) and num.is_integer():
            num = int(num)
        if isinstance(parent, list):
            parent[int(key)] = num
        else:
            parent[key] = num
    return parse_scenario(copy.deepcopy(doc))


def sweep(scenario: Scenario, axis: str, values) -> list:
    """One run per value with seed ``scenario.seed + index``; rows in input order."""
    rows = []
    for i, value in enumerate(values):
        variant = apply_axis(scenario, axis, value)
        result = run(variant, seed=scenario.seed + i)
        rows.append(((value,), result.metrics))
    return rows
