"""Graph, demand and instance types of the flow-based QKD network model."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Union

import yaml

from qkdnet.keyrate import REFERENCE_PARAMS, QkdSystemParams

DEFAULT_CLASSICAL_CAPACITY_BPS = 1e9
DEFAULT_PACKET_BITS = 4000

NodeId = str


class ModelError(ValueError):
    """Base class for invalid topology, demand or instance data."""


class DuplicateEdge(ModelError):
    pass


class DuplicateNode(ModelError):
    pass


class DanglingEndpoint(ModelError):
    pass


class SelfLoop(ModelError):
    pass


class NegativeAttribute(ModelError):
    pass


class UnknownEdge(ModelError):
    pass


class UnknownNode(ModelError):
    pass


class NotOptional(ModelError):
    pass


class InvalidDemand(ModelError):
    pass


@dataclass(frozen=True)
class Node:
    id: NodeId
    optional: bool = False


@dataclass(frozen=True)
class Edge:
    a: NodeId
    b: NodeId
    length_km: float
    classical_capacity_bps: float = DEFAULT_CLASSICAL_CAPACITY_BPS
    system_count: int = 1
    optional: bool = False
    label: str = ""
    # Bypasses the fiber model: capability of one system in bits/second.
    key_rate_bps: float | None = None

    @property
    def pair(self) -> frozenset:
        return frozenset((self.a, self.b))

    def name(self) -> str:
        return self.label or f"{self.a}-{self.b}"


@dataclass(frozen=True)
class Topology:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]

    def node_ids(self, include_optional: bool = True) -> list[NodeId]:
        return [n.id for n in self.nodes if include_optional or not n.optional]

    def node(self, node_id: NodeId) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise UnknownNode(f"unknown node {node_id!r}")

    @property
    def active_nodes(self) -> list[NodeId]:
        return [n.id for n in self.nodes if not n.optional]

    @property
    def active_edges(self) -> list[Edge]:
        return [e for e in self.edges if not e.optional]

    @property
    def optional_nodes(self) -> list[NodeId]:
        return [n.id for n in self.nodes if n.optional]

    def find_edge(self, ref: str | tuple[NodeId, NodeId] | Edge) -> Edge:
        """Look an edge up by label (``"e1"``), ``"a-b"`` string, node pair or Edge."""
        if isinstance(ref, Edge):
            ref = (ref.a, ref.b)
        if isinstance(ref, str):
            for e in self.edges:
                if e.label == ref:
                    return e
            if "-" in ref:
                a, _, b = ref.partition("-")
                return self.find_edge((a, b))
            raise UnknownEdge(f"unknown edge {ref!r}")
        pair = frozenset(ref)
        for e in self.edges:
            if e.pair == pair:
                return e
        raise UnknownEdge(f"unknown edge {ref[0]}-{ref[1]}")


def validate_topology(t: Topology) -> Topology:
    seen_nodes: set[NodeId] = set()
    for n in t.nodes:
        if not isinstance(n.id, str) or not n.id:
            raise ModelError(f"node id must be a non-empty string, got {n.id!r}")
        if n.id in seen_nodes:
            raise DuplicateNode(f"node {n.id!r} is listed twice")
        seen_nodes.add(n.id)
    optional_nodes = {n.id for n in t.nodes if n.optional}

    seen_pairs: dict[frozenset, Edge] = {}
    seen_labels: set[str] = set()
    for e in t.edges:
        if e.a == e.b:
            raise SelfLoop(f"edge {e.name()} connects {e.a!r} to itself")
        for end in (e.a, e.b):
            if end not in seen_nodes:
                raise DanglingEndpoint(f"edge {e.name()} references unknown node {end!r}")
        if e.pair in seen_pairs:
            raise DuplicateEdge(f"edge {e.a}-{e.b} is listed twice")
        seen_pairs[e.pair] = e
        if e.label:
            if e.label in seen_labels:
                raise DuplicateEdge(f"edge label {e.label!r} is used twice")
            seen_labels.add(e.label)
        for attr in ("length_km", "classical_capacity_bps", "system_count"):
            if getattr(e, attr) < 0:
                raise NegativeAttribute(f"edge {e.name()}: {attr}={getattr(e, attr)} < 0")
        if e.key_rate_bps is not None and e.key_rate_bps < 0:
            raise NegativeAttribute(f"edge {e.name()}: key_rate_bps={e.key_rate_bps} < 0")
        if not e.optional and ({e.a, e.b} & optional_nodes):
            raise ModelError(f"edge {e.name()} touches an optional node but is not optional")
    return t


@dataclass(frozen=True)
class DemandModel:
    connections: tuple[tuple[NodeId, NodeId], ...]
    demand_bps: Mapping[tuple[NodeId, NodeId], float]
    beta: Mapping[tuple[NodeId, NodeId], float]

    def __post_init__(self):
        if len(set(self.connections)) != len(self.connections):
            raise InvalidDemand("duplicate connection")
        for s, t in self.connections:
            if s == t:
                raise InvalidDemand(f"connection ({s}, {t}) has identical endpoints")
            d = self.demand_bps.get((s, t))
            if d is None or not d > 0:
                raise InvalidDemand(f"connection ({s}, {t}) needs a positive demand, got {d}")
            b = self.beta.get((s, t))
            if b is None or not 0 <= b <= 1:
                raise InvalidDemand(f"connection ({s}, {t}) needs beta in [0, 1], got {b}")

    @classmethod
    def from_entries(cls, entries: Iterable[tuple[NodeId, NodeId, float, float]]) -> DemandModel:
        """Build from (source, sink, demand_bps, beta) rows; zero-demand rows are dropped."""
        conns, demand, beta = [], {}, {}
        for s, t, d, b in entries:
            if d < 0:
                raise InvalidDemand(f"connection ({s}, {t}) has negative demand {d}")
            if d == 0:
                continue
            conns.append((s, t))
            demand[(s, t)] = float(d)
            beta[(s, t)] = float(b)
        return cls(tuple(conns), demand, beta)

    def __len__(self) -> int:
        return len(self.connections)


def uniform_demand(nodes: Iterable[NodeId], d: float, beta: float = 1.0) -> DemandModel:
    if not 0 <= beta <= 1:
        raise InvalidDemand(f"beta must lie in [0, 1], got {beta}")
    if d < 0:
        raise InvalidDemand(f"demand must be non-negative, got {d}")
    nodes = list(nodes)
    return DemandModel.from_entries((s, t, d, beta) for s in nodes for t in nodes if s != t)


@dataclass(frozen=True)
class NetworkInstance:
    topology: Topology
    demand: DemandModel
    packet_bits: int = DEFAULT_PACKET_BITS
    system_params: QkdSystemParams = field(default=REFERENCE_PARAMS)

    def __post_init__(self):
        if not isinstance(self.packet_bits, int) or self.packet_bits <= 0:
            raise ModelError(f"packet_bits must be a positive integer, got {self.packet_bits!r}")
        active = set(self.topology.active_nodes)
        for s, t in self.demand.connections:
            for end in (s, t):
                if end not in active:
                    raise InvalidDemand(
                        f"connection ({s}, {t}) endpoint {end!r} is not an active node")


@dataclass(frozen=True)
class AddSystem:
    edge: str | tuple[NodeId, NodeId]


@dataclass(frozen=True)
class SelectNodes:
    nodes: tuple[NodeId, ...]


Modification = Union[AddSystem, SelectNodes]


def apply_modification(t: Topology, mod: Modification) -> Topology:
    if isinstance(mod, AddSystem):
        target = t.find_edge(mod.edge)
        edges = tuple(replace(e, system_count=e.system_count + 1) if e is target else e
                      for e in t.edges)
        return Topology(t.nodes, edges)

    if isinstance(mod, SelectNodes):
        chosen = set(mod.nodes)
        for nid in chosen:
            if not t.node(nid).optional:
                raise NotOptional(f"node {nid!r} is not optional")
        nodes = tuple(Node(n.id) if n.id in chosen else n
                      for n in t.nodes if not n.optional or n.id in chosen)
        kept = {n.id for n in nodes}
        edges = []
        for e in t.edges:
            if not e.optional:
                edges.append(e)
            elif e.a in kept and e.b in kept:
                edges.append(replace(e, optional=False))
        return Topology(nodes, tuple(edges))

    raise TypeError(f"unsupported modification {mod!r}")


def relabel(instance: NetworkInstance, mapping: Mapping[NodeId, NodeId]) -> NetworkInstance:
    """Rename every node consistently in topology and demand."""
    if len(set(mapping.values())) != len(mapping):
        raise ModelError("relabeling must be a bijection")
    m = lambda v: mapping.get(v, v)  # noqa: E731
    top = instance.topology
    topology = Topology(tuple(replace(n, id=m(n.id)) for n in top.nodes),
                        tuple(replace(e, a=m(e.a), b=m(e.b)) for e in top.edges))
    dem = instance.demand
    demand = DemandModel(tuple((m(s), m(t)) for s, t in dem.connections),
                         {(m(s), m(t)): v for (s, t), v in dem.demand_bps.items()},
                         {(m(s), m(t)): v for (s, t), v in dem.beta.items()})
    return replace(instance, topology=validate_topology(topology), demand=demand)


# -- files -------------------------------------------------------------------

DATA_DIR = Path(__file__).with_name("data")


def resolve_data_path(path: str | Path) -> Path:
    """Return ``path`` if it exists, else the bundled data file of that name."""
    p = Path(path)
    if p.exists():
        return p
    bundled = DATA_DIR / p.name
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"{path}: no such file")


def _number(raw, where: str, attr: str, default=None):
    if raw is None:
        if default is None:
            raise ModelError(f"{where}: missing required field {attr!r}")
        return default
    if isinstance(raw, bool):
        raise ModelError(f"{where}: field {attr!r} must be a number, got {raw!r}")
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise ModelError(f"{where}: field {attr!r} must be a number, got {raw!r}") from None


def topology_from_mapping(data: Mapping, source: str = "<mapping>") -> Topology:
    if not isinstance(data, Mapping) or "nodes" not in data or "edges" not in data:
        raise ModelError(f"{source}: expected top-level 'nodes' and 'edges' lists")
    nodes = []
    for i, raw in enumerate(data["nodes"] or []):
        where = f"{source}: nodes[{i}]"
        if isinstance(raw, Mapping):
            if "id" not in raw:
                raise ModelError(f"{where}: missing required field 'id'")
            nodes.append(Node(str(raw["id"]), bool(raw.get("optional", False))))
        else:
            nodes.append(Node(str(raw)))
    edges = []
    for i, raw in enumerate(data["edges"] or []):
        where = f"{source}: edges[{i}]"
        if not isinstance(raw, Mapping):
            raise ModelError(f"{where}: expected a mapping")
        for key in ("a", "b"):
            if key not in raw:
                raise ModelError(f"{where}: missing required field {key!r}")
        count = raw.get("system_count", 1)
        if isinstance(count, bool) or not isinstance(count, int):
            raise ModelError(f"{where}: system_count must be an integer, got {count!r}")
        rate = raw.get("key_rate_bps")
        edges.append(Edge(
            a=str(raw["a"]), b=str(raw["b"]),
            length_km=_number(raw.get("length_km"), where, "length_km"),
            classical_capacity_bps=_number(raw.get("classical_capacity_bps"), where,
                                           "classical_capacity_bps",
                                           DEFAULT_CLASSICAL_CAPACITY_BPS),
            system_count=count,
            optional=bool(raw.get("optional", False)),
            label=str(raw.get("label", f"e{i + 1}")),
            key_rate_bps=None if rate is None else _number(rate, where, "key_rate_bps"),
        ))
    try:
        return validate_topology(Topology(tuple(nodes), tuple(edges)))
    except ModelError as exc:
        raise type(exc)(f"{source}: {exc}") from None


def load_topology(path: str | Path) -> Topology:
    path = resolve_data_path(path)
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ModelError(f"{path}: not a valid key-value tree: {exc}") from None
    return topology_from_mapping(data, str(path))


def load_demand(path: str | Path, default_beta: float = 1.0) -> DemandModel:
    """Read ``connections: [{source, sink, demand_bps, beta?}]``."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    rows = []
    for i, raw in enumerate(data.get("connections", [])):
        where = f"{path}: connections[{i}]"
        if not isinstance(raw, Mapping) or "source" not in raw or "sink" not in raw:
            raise InvalidDemand(f"{where}: needs 'source' and 'sink'")
        rows.append((str(raw["source"]), str(raw["sink"]),
                     _number(raw.get("demand_bps"), where, "demand_bps"),
                     _number(raw.get("beta"), where, "beta", default_beta)))
    try:
        return DemandModel.from_entries(rows)
    except InvalidDemand as exc:
        raise InvalidDemand(f"{path}: {exc}") from None
