"""Simulator and protocol library for sensor-network routing security."""

from .core import BROADCAST, Packet, PacketKind, Simulator, Topology, build_topology
from .runner import run, sweep
from .scenario import ConfigError, Scenario, load_scenario, parse_scenario

__all__ = ["BROADCAST", "Packet", "PacketKind", "Simulator", "Topology", "build_topology",
           "run", "sweep", "ConfigError", "Scenario", "load_scenario", "parse_scenario"]
__version__ = "0.1.0"
