"""Multi-connection flow problem: MILP construction, flow metrics and the ITS bound."""

from __future__ import annotations

import math
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp

from qkdnet.keyrate import edge_key_capability
from qkdnet.model import DemandModel, Edge, NetworkInstance, NodeId
from qkdnet.solver import (
    EQ, LE, OPTIMAL,
    LinearProgram, SolverError, SolverOptions, solve_lp, solve_milp,
)

CONTINUOUS, INTEGER = "continuous", "integer"


class McfpError(ValueError):
    pass


class EmptyConnectionSet(McfpError):
    pass


class ZeroDemand(McfpError):
    pass


class UnknownConnection(McfpError):
    pass


class SolverFailure(SolverError):
    pass


class FlowVarKey(NamedTuple):
    source: NodeId
    sink: NodeId
    from_node: NodeId
    to_node: NodeId

    @property
    def connection(self) -> tuple[NodeId, NodeId]:
        return self.source, self.sink


@dataclass(frozen=True)
class FlowAssignment:
    """Packets per second for each (connection, directed edge); absent keys carry 0."""

    packets: Mapping[FlowVarKey, int]
    packet_bits: int
    connections: tuple[tuple[NodeId, NodeId], ...] = ()

    def get(self, key: FlowVarKey) -> int:
        return self.packets.get(key, 0)

    @classmethod
    def zero(cls, instance: NetworkInstance) -> FlowAssignment:
        return cls({}, instance.packet_bits, tuple(instance.demand.connections))


@dataclass(frozen=True)
class Variable:
    name: str
    kind: str
    lower: float = 0.0


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[int, float], ...]
    relation: str
    rhs: float


@dataclass
class MilpInstance:
    variables: list[Variable]
    constraints: list[Constraint]
    objective_var: int
    keys: list[FlowVarKey]
    key_capability_bps: dict[tuple[NodeId, NodeId], float]

    @property
    def integer_indices(self) -> list[int]:
        return [i for i, v in enumerate(self.variables) if v.kind == INTEGER]

    def count(self, prefix: str) -> int:
        return sum(1 for c in self.constraints if c.name.startswith(prefix))

    def to_linear_program(self) -> LinearProgram:
        n = len(self.variables)
        data, rows, cols = [], [], []
        for r, con in enumerate(self.constraints):
            for j, v in con.coeffs:
                rows.append(r); cols.append(j); data.append(v)
        A = sp.csr_matrix((data, (rows, cols)), shape=(len(self.constraints), n))
        c = np.zeros(n)
        c[self.objective_var] = 1.0
        return LinearProgram(
            c, A, tuple(con.relation for con in self.constraints),
            np.array([con.rhs for con in self.constraints], dtype=float),
            np.array([v.lower for v in self.variables]), np.full(n, np.inf),
            [v.name for v in self.variables], [con.name for con in self.constraints])


@dataclass
class BoundResult:
    bound: float
    assignment: FlowAssignment
    satisfactions: dict[tuple[NodeId, NodeId], float]
    status: str
    lp_bound: float | None = None
    nodes: int = 0

    @property
    def satisfied(self) -> bool:
        return self.bound >= 1.0


_ID_RE = re.compile(r"^[A-Za-z0-9]+$")


def _name_map(nodes: list[NodeId]) -> dict[NodeId, str]:
    if all(_ID_RE.match(n) for n in nodes):
        return {n: n for n in nodes}
    return {n: f"n{i}" for i, n in enumerate(nodes)}


def build_milp(instance: NetworkInstance) -> MilpInstance:
    demand = instance.demand
    if not demand.connections:
        raise EmptyConnectionSet("the connection set is empty")
    top = instance.topology
    nodes = top.active_nodes
    edges: list[Edge] = top.active_edges
    P = instance.packet_bits
    label = _name_map(top.node_ids())

    keys: list[FlowVarKey] = []
    variables: list[Variable] = []
    index: dict[FlowVarKey, int] = {}
    for s, t in demand.connections:
        for e in edges:
            for u, v in ((e.a, e.b), (e.b, e.a)):
                key = FlowVarKey(s, t, u, v)
                index[key] = len(keys)
                keys.append(key)
                variables.append(Variable(
                    f"x_{label[s]}_{label[t]}_{label[u]}_{label[v]}", INTEGER))
    rho = len(variables)
    variables.append(Variable("rho", CONTINUOUS))

    constraints: list[Constraint] = []
    capability: dict[tuple[NodeId, NodeId], float] = {}
    for e in edges:
        r = edge_key_capability(e, instance.system_params)
        capability[(e.a, e.b)] = r
        both = [(index[FlowVarKey(s, t, u, v)], conn) for conn in demand.connections
                for s, t in [conn] for u, v in ((e.a, e.b), (e.b, e.a))]
        tag = f"{label[e.a]}_{label[e.b]}"
        constraints.append(Constraint(f"cap_c_{tag}", tuple((j, 1.0) for j, _ in both), LE,
                                      e.classical_capacity_bps / P))
        constraints.append(Constraint(
            f"cap_r_{tag}",
            tuple((j, demand.beta[conn]) for j, conn in both if demand.beta[conn] != 0.0),
            LE, r / P))

    incident: dict[NodeId, list[tuple[NodeId, NodeId]]] = defaultdict(list)
    for e in edges:
        incident[e.a].append((e.a, e.b))
        incident[e.b].append((e.b, e.a))

    for s, t in demand.connections:
        for u in nodes:
            if u in (s, t):
                continue
            coeffs = []
            for _, w in incident[u]:
                coeffs.append((index[FlowVarKey(s, t, u, w)], 1.0))
                coeffs.append((index[FlowVarKey(s, t, w, u)], -1.0))
            constraints.append(Constraint(f"cons_{label[s]}_{label[t]}_{label[u]}",
                                          tuple(coeffs), EQ, 0.0))

    for s, t in demand.connections:
        # rho - (P/d) * (inflow - outflow at the sink) <= 0, scaled by P for conditioning
        ratio = P / demand.demand_bps[(s, t)]
        coeffs = [(rho, 1.0)]
        for _, w in incident[t]:
            coeffs.append((index[FlowVarKey(s, t, w, t)], -ratio))
            coeffs.append((index[FlowVarKey(s, t, t, w)], ratio))
        constraints.append(Constraint(f"link_{label[s]}_{label[t]}", tuple(coeffs), LE, 0.0))

    return MilpInstance(variables, constraints, rho, keys, capability)


def assignment_from_vector(milp: MilpInstance, x: np.ndarray, instance: NetworkInstance
                           ) -> FlowAssignment:
    packets = {}
    for i, key in enumerate(milp.keys):
        v = int(round(x[i]))
        if v:
            packets[key] = v
    return FlowAssignment(packets, instance.packet_bits, tuple(instance.demand.connections))


def flow_value(assignment: FlowAssignment, connection: tuple[NodeId, NodeId]) -> float:
    """Net rate in bits/second delivered into the sink of ``connection``."""
    if assignment.connections and connection not in assignment.connections:
        raise UnknownConnection(f"connection {connection} is not part of the assignment")
    s, t = connection
    net = 0
    for key, v in assignment.packets.items():
        if key.source != s or key.sink != t:
            continue
        if key.to_node == t:
            net += v
        if key.from_node == t:
            net -= v
    return float(assignment.packet_bits * net)


def demand_satisfaction(assignment: FlowAssignment, connection: tuple[NodeId, NodeId],
                        demand_bps: float) -> float:
    if not demand_bps > 0:
        raise ZeroDemand(f"connection {connection} has demand {demand_bps}")
    return flow_value(assignment, connection) / demand_bps


def satisfactions(assignment: FlowAssignment, demand: DemandModel
                  ) -> dict[tuple[NodeId, NodeId], float]:
    return {conn: demand_satisfaction(assignment, conn, demand.demand_bps[conn])
            for conn in demand.connections}


def whole_satisfaction(assignment: FlowAssignment, demand: DemandModel) -> float:
    if not demand.connections:
        raise EmptyConnectionSet("the connection set is empty")
    return min(satisfactions(assignment, demand).values())


def objective_grid(instance: NetworkInstance) -> float | None:
    """Spacing of attainable bounds when every connection has the same demand."""
    values = set(instance.demand.demand_bps.values())
    if len(values) != 1:
        return None
    return instance.packet_bits / values.pop()


def _decompose(arcs: dict[tuple[NodeId, NodeId], float], s: NodeId, t: NodeId, eps=1e-9):
    """Split a net s-t flow into paths; leftover cycles are dropped."""
    out: dict[NodeId, list[NodeId]] = defaultdict(list)
    for (u, v), f in arcs.items():
        if f > eps:
            out[u].append(v)
    paths = []
    while True:
        parent = {s: None}
        stack = [s]
        while stack and t not in parent:
            u = stack.pop()
            for v in out[u]:
                if v not in parent and arcs[(u, v)] > eps:
                    parent[v] = u
                    stack.append(v)
        if t not in parent:
            return paths
        path = [t]
        while parent[path[-1]] is not None:
            path.append(parent[path[-1]])
        path.reverse()
        amount = min(arcs[(u, v)] for u, v in zip(path, path[1:]))
        for u, v in zip(path, path[1:]):
            arcs[(u, v)] -= amount
        paths.append((amount, path))


def _rounded_flow(instance: NetworkInstance, milp: MilpInstance, x: np.ndarray,
                  level: float) -> np.ndarray:
    """Integral flow aiming at satisfaction ``level``, built from a fractional optimum.

    Path flows of the relaxation are floored, then each connection still short of
    its packet target is topped up along shortest paths with spare capacity.
    """
    demand = instance.demand
    P = instance.packet_bits
    edges = instance.topology.active_edges
    classical = {e.pair: math.floor(e.classical_capacity_bps / P + 1e-9) for e in edges}
    key = {e.pair: milp.key_capability_bps[(e.a, e.b)] / P for e in edges}
    adjacency: dict[NodeId, list[NodeId]] = defaultdict(list)
    for e in edges:
        adjacency[e.a].append(e.b)
        adjacency[e.b].append(e.a)
    index = {k: i for i, k in enumerate(milp.keys)}
    y = np.zeros(len(milp.variables))

    def fits(conn, u, v, amount):
        pair = frozenset((u, v))
        return (classical[pair] >= amount
                and key[pair] >= demand.beta[conn] * amount - 1e-9)

    def send(conn, path, amount):
        for u, v in zip(path, path[1:]):
            pair = frozenset((u, v))
            classical[pair] -= amount
            key[pair] -= demand.beta[conn] * amount
            y[index[FlowVarKey(*conn, u, v)]] += amount

    target = {c: math.ceil(level * demand.demand_bps[c] / P - 1e-9) for c in demand.connections}
    sent = dict.fromkeys(demand.connections, 0)
    for conn in demand.connections:
        arcs = {}
        for e in edges:
            f = x[index[FlowVarKey(*conn, e.a, e.b)]] - x[index[FlowVarKey(*conn, e.b, e.a)]]
            arcs[(e.a, e.b)], arcs[(e.b, e.a)] = max(f, 0.0), max(-f, 0.0)
        for amount, path in sorted(_decompose(arcs, *conn), key=lambda p: -p[0]):
            amount = min(math.floor(amount + 1e-9), target[conn] - sent[conn])
            if amount > 0 and all(fits(conn, u, v, amount) for u, v in zip(path, path[1:])):
                send(conn, path, amount)
                sent[conn] += amount

    for conn in sorted(demand.connections, key=lambda c: sent[c] - target[c]):
        s, t = conn
        while sent[conn] < target[conn]:
            parent = {s: None}
            queue = deque([s])
            while queue and t not in parent:
                u = queue.popleft()
                for v in adjacency[u]:
                    if v not in parent and fits(conn, u, v, 1):
                        parent[v] = u
                        queue.append(v)
            if t not in parent:
                break
            path = [t]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            send(conn, path[::-1], 1)
            sent[conn] += 1

    y[milp.objective_var] = min(sent[c] * P / demand.demand_bps[c] for c in demand.connections)
    return y


def its_bound(instance: NetworkInstance, options: SolverOptions | None = None,
              *, relaxation: bool = True) -> BoundResult:
    """Maximum over integral QKD-flows of the minimum connection satisfaction."""
    milp = build_milp(instance)
    lp = milp.to_linear_program()
    ints = milp.integer_indices
    step = objective_grid(instance)
    relaxed = solve_lp(lp, options)
    if relaxed.status != OPTIMAL:
        # zero flow is always feasible, so anything else is a solver defect
        raise SolverFailure(f"LP relaxation ended with status {relaxed.status}")
    level = relaxed.objective if step is None else step * math.floor(relaxed.objective / step + 1e-9)
    seed = _rounded_flow(instance, milp, relaxed.x, level)
    sol = solve_milp(lp, ints, options, incumbent=seed, objective_step=step)
    if sol.status != OPTIMAL:
        raise SolverFailure(f"MILP solve ended with status {sol.status}")
    assignment = assignment_from_vector(milp, sol.x, instance)
    sats = satisfactions(assignment, instance.demand)
    lp_bound = relaxed.objective if relaxation else None
    return BoundResult(min(sats.values()), assignment, sats, sol.status, lp_bound, sol.nodes)


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str
    slack: float


@dataclass
class VerificationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def verify_assignment(instance: NetworkInstance, assignment: FlowAssignment,
                      tol: float = 1e-9) -> VerificationReport:
    """Recheck integrality, shared capacities and conservation for every connection."""
    report = VerificationReport()
    add = report.violations.append
    top = instance.topology
    P = assignment.packet_bits
    demand = instance.demand
    conns = set(demand.connections)
    edges = {e.pair: e for e in top.active_edges}
    nodes = top.active_nodes

    classical = defaultdict(float)
    keys_used = defaultdict(float)
    balance = defaultdict(float)
    for key, v in assignment.packets.items():
        where = f"{key.source}->{key.sink} on {key.from_node}->{key.to_node}"
        if v != int(v):
            add(Violation("integrality", where, float(v) - round(v)))
        if v < 0:
            add(Violation("non-negativity", where, float(v)))
        pair = frozenset((key.from_node, key.to_node))
        if key.connection not in conns:
            add(Violation("unknown-connection", where, float(v)))
            continue
        if pair not in edges:
            add(Violation("unknown-edge", where, float(v)))
            continue
        classical[pair] += P * v
        keys_used[pair] += demand.beta[key.connection] * P * v
        balance[(key.connection, key.from_node)] += v
        balance[(key.connection, key.to_node)] -= v

    for pair, e in edges.items():
        slack = e.classical_capacity_bps - classical[pair]
        if slack < -tol * max(1.0, e.classical_capacity_bps):
            add(Violation("classical-capacity", e.name(), slack))
        r = edge_key_capability(e, instance.system_params)
        slack = r - keys_used[pair]
        if slack < -tol * max(1.0, r):
            add(Violation("key-capacity", e.name(), slack))

    for s, t in demand.connections:
        for u in nodes:
            if u in (s, t):
                continue
            net = balance[((s, t), u)]
            if abs(net) > tol:
                add(Violation("conservation", f"{s}->{t} at {u}", -net))
    return report
