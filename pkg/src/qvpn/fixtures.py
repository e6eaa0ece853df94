"""Access to the bundled data files (synthetic topologies, strategy catalog)."""

from importlib.resources import files

from .topology import load_topology
from .quantum_math import load_strategy_catalog

TOPOLOGY_50 = "synthetic50.topo"
TOPOLOGY_10 = "synthetic10.topo"
CATALOG_16 = "strategies16.txt"


def fixture_text(name: str) -> str:
    return (files("qvpn") / "data" / name).read_text()


def bundled_topology(name: str = TOPOLOGY_50):
    return load_topology(fixture_text(name))


def bundled_catalog(name: str = CATALOG_16):
    return load_strategy_catalog(fixture_text(name))
