"""Scenario documents: one JSON file describing a complete experiment."""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .adversary import KINDS
from .agent import NodeParams
from .core import TopologyError, build_topology

PROTOCOLS = ("undefended", "frq_frp", "dri_grayhole", "nms", "multipath2")
AODV_PROTOCOLS = ("undefended", "frq_frp", "dri_grayhole")
RADIO_CONSTANTS = ("tx_cost_per_bit", "rx_cost_per_bit", "header_bits", "link_drop_q")


class ConfigError(ValueError):
    """A scenario failed validation; the message carries the field paths."""


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class TopologySpec(_Strict):
    mode: Literal["explicit", "unit-disk", "grid"] = "explicit"
    nodes: list[int] | None = None
    edges: list[tuple[int, int]] | None = None
    positions: list[tuple[float, float]] | dict[int, tuple[float, float]] | None = None
    radio_range: float | None = Field(default=None, gt=0)
    rows: int | None = Field(default=None, ge=1)
    cols: int | None = Field(default=None, ge=1)
    spacing: float = Field(default=1.0, gt=0)

    @model_validator(mode="after")
    def _complete(self):
        need = {"explicit": ("nodes",), "unit-disk": ("positions", "radio_range"),
                "grid": ("rows", "cols", "radio_range")}[self.mode]
        missing = [k for k in need if getattr(self, k) is None]
        if missing:
            raise ValueError(f"{self.mode} topology needs {', '.join(missing)}")
        return self


class AdversarySpec(_Strict):
    node: int
    kind: Literal[KINDS]
    drop_p: float | None = Field(default=None, ge=0, le=1)
    partner: int | None = None
    role: Literal["front", "back"] = "front"
    advertised_hops: int = Field(default=1, ge=0)
    range_multiplier: float = Field(default=3.0, gt=1)
    active_from: int = Field(default=0, ge=0)
    targets: list[int] | None = None
    misaddress: bool = False
    claimed_next_hop: int | None = None


class TrafficSpec(_Strict):
    source: int
    start: int = Field(default=60, ge=0)
    period: int = Field(default=10, ge=1)
    count: int = Field(default=1, ge=0)
    payload_bytes: int = Field(default=16, ge=0)
    destination: int | None = None


class AuthSpec(_Strict):
    mutesla: bool = False
    snep: bool = False
    merkle: bool = False


class ActionSpec(_Strict):
    tick: int = Field(ge=0)
    node: int
    action: Literal["local_check", "cooperative_detection"]
    suspect: int


class Scenario(_Strict):
    name: str = ""
    topology: TopologySpec
    base_station: int
    seed: int
    duration: int = Field(gt=0)
    protocol: Literal[PROTOCOLS] = "undefended"
    epsilon: int = Field(default=0, ge=0)
    auth: AuthSpec = AuthSpec()
    adversaries: list[AdversarySpec] = []
    traffic: list[TrafficSpec] = []
    constants: dict[str, float] = {}
    static_routes: dict[int, dict[int, int]] | None = None
    actions: list[ActionSpec] = []
    dri_scan: bool = True

    @model_validator(mode="after")
    def _consistent(self):
        try:
            topo = build_topology(self.topology.model_dump(exclude_none=True))
        except (TopologyError, KeyError) as exc:
            raise ValueError(f"topology: {exc}") from None
        nodes = set(topo.nodes)

        def known(label, node):
            if node not in nodes:
                raise ValueError(f"{label} references unknown node {node}")

        known("base_station", self.base_station)
        seen = set()
        for i, a in enumerate(self.adversaries):
            known(f"adversaries.{i}.node", a.node)
            if a.node in seen:
                raise ValueError(f"adversaries.{i}: node {a.node} configured twice")
            seen.add(a.node)
            if a.node == self.base_station:
                raise ValueError(f"adversaries.{i}: the base station cannot be compromised")
            for t in a.targets or ():
                known(f"adversaries.{i}.targets", t)
        by_node = {a.node: a for a in self.adversaries}
        for i, a in enumerate(self.adversaries):
            if a.kind == "CoopBlackhole":
                other = by_node.get(a.partner)
                if other is None or other.kind != "CoopBlackhole" or other.partner != a.node:
                    raise ValueError(f"adversaries.{i}.partner must be a CoopBlackhole naming {a.node} back")
        for i, t in enumerate(self.traffic):
            known(f"traffic.{i}.source", t.source)
            if t.destination is not None:
                known(f"traffic.{i}.destination", t.destination)
                if self.protocol not in AODV_PROTOCOLS and t.destination != self.base_station:
                    raise ValueError(f"traffic.{i}.destination: {self.protocol} only routes to the base station")
        for i, act in enumerate(self.actions):
            known(f"actions.{i}.node", act.node)
            known(f"actions.{i}.suspect", act.suspect)
            if self.protocol != "dri_grayhole":
                raise ValueError(f"actions.{i}: scripted detection needs protocol dri_grayhole")
        allowed = NodeParams.names() | set(RADIO_CONSTANTS)
        for k in self.constants:
            if k not in allowed:
                raise ValueError(f"constants.{k}: unknown constant")
        for node, table in (self.static_routes or {}).items():
            known("static_routes", node)
            for dst, hop in table.items():
                known(f"static_routes.{node}", dst)
                if hop not in topo.neighbors(node):
                    raise ValueError(f"static_routes.{node}.{dst}: {hop} is not a neighbour of {node}")
        return self

    def build_topology(self):
        return build_topology(self.topology.model_dump(exclude_none=True))


def parse_scenario(raw: str | bytes | dict) -> Scenario:
    try:
        if isinstance(raw, dict):
            return Scenario.model_validate(raw)
        return Scenario.model_validate_json(raw)
    except ValidationError as exc:
        lines = []
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{loc}: {err['msg']}")
        raise ConfigError("; ".join(lines)) from None


def load_scenario(path) -> Scenario:
    with open(path, "rb") as fh:
        return parse_scenario(fh.read())
