import pytest
from hypothesis import given, strategies as st

from qkdnet.model import (
    AddSystem, DanglingEndpoint, DemandModel, DuplicateEdge, DuplicateNode, Edge,
    InvalidDemand, ModelError, NegativeAttribute, NetworkInstance, Node, NotOptional,
    SelectNodes, SelfLoop, Topology, UnknownEdge, UnknownNode, apply_modification,
    load_demand, load_topology, relabel, topology_from_mapping, uniform_demand,
    validate_topology,
)


def _topo(edges, nodes=("v1", "v2", "v3")):
    return Topology(tuple(Node(n) for n in nodes), tuple(edges))


def test_secoqc_file_is_valid():
    t = load_topology("secoqc.topo")
    assert len(t.nodes) == 6 and len(t.edges) == 8
    assert t.find_edge("e1").length_km == 85
    assert all(e.classical_capacity_bps == 1e9 and e.system_count == 1 for e in t.edges)


def test_nsfnet_file_has_three_optional_nodes():
    t = load_topology("nsfnet.topo")
    assert sorted(t.optional_nodes) == ["v10", "v12", "v8"]
    assert len(t.active_nodes) == 11


@pytest.mark.parametrize("edges, error", [
    ([Edge("v1", "v1", 1.0)], SelfLoop),
    ([Edge("v1", "v2", 1.0), Edge("v2", "v1", 3.0)], DuplicateEdge),
    ([Edge("v1", "v9", 1.0)], DanglingEndpoint),
    ([Edge("v1", "v2", -1.0)], NegativeAttribute),
    ([Edge("v1", "v2", 1.0, classical_capacity_bps=-5.0)], NegativeAttribute),
    ([Edge("v1", "v2", 1.0, system_count=-1)], NegativeAttribute),
])
def test_validation_errors(edges, error):
    with pytest.raises(error):
        validate_topology(_topo(edges))


def test_validation_error_names_offending_edge():
    with pytest.raises(DuplicateEdge, match="v1"):
        validate_topology(_topo([Edge("v1", "v2", 1.0), Edge("v2", "v1", 3.0)]))


def test_duplicate_node_rejected():
    with pytest.raises(DuplicateNode):
        validate_topology(_topo([], nodes=("v1", "v1")))


def test_uniform_demand_counts():
    d = uniform_demand([f"v{i}" for i in range(1, 7)], 25000)
    assert len(d) == 30
    assert set(d.demand_bps.values()) == {25000}
    assert set(d.beta.values()) == {1.0}
    assert len(uniform_demand(["v1"], 25000)) == 0
    assert len(uniform_demand(["v1", "v2", "v3"], 0)) == 0


@given(st.integers(min_value=0, max_value=12), st.floats(min_value=1.0, max_value=1e9))
def test_uniform_demand_is_all_ordered_pairs(n, d):
    demand = uniform_demand([f"n{i}" for i in range(n)], d)
    assert len(demand) == n * (n - 1)
    assert all(s != t for s, t in demand.connections)


def test_uniform_demand_rejects_bad_beta():
    with pytest.raises(InvalidDemand):
        uniform_demand(["a", "b"], 1.0, beta=1.5)


def test_demand_model_rejects_self_connection():
    with pytest.raises(InvalidDemand):
        DemandModel.from_entries([("a", "a", 5.0, 1.0)])


def test_add_system_increments_only_target():
    t = load_topology("secoqc.topo")
    t2 = apply_modification(t, AddSystem("e1"))
    assert t2.find_edge("e1").system_count == 2
    for old, new in zip(t.edges[1:], t2.edges[1:]):
        assert old == new
    assert t.find_edge("e1").system_count == 1


def test_add_system_accepts_pair_and_dash_forms():
    t = load_topology("secoqc.topo")
    assert apply_modification(t, AddSystem(("v2", "v1"))).find_edge("e1").system_count == 2
    assert apply_modification(t, AddSystem("v1-v2")).find_edge("e1").system_count == 2


def test_add_system_unknown_edge():
    with pytest.raises(UnknownEdge):
        apply_modification(load_topology("secoqc.topo"), AddSystem("e42"))


def test_select_nothing_gives_original_nsfnet():
    t = apply_modification(load_topology("nsfnet.topo"), SelectNodes(()))
    assert len(t.nodes) == 11
    assert not any(e.optional for e in t.edges)
    assert {e.name() for e in t.edges} == {e.name() for e in load_topology("nsfnet.topo").active_edges}


def test_select_uses_both_endpoints_rule():
    full = load_topology("nsfnet.topo")
    t = apply_modification(full, SelectNodes(("v8", "v12")))
    assert sorted(t.node_ids()) == sorted(full.active_nodes + ["v8", "v12"])
    names = {frozenset((e.a, e.b)) for e in t.edges}
    assert not any("v10" in pair for pair in names)
    for e in full.edges:
        if e.optional and {e.a, e.b} <= set(t.node_ids()):
            assert e.pair in names


def test_select_rejects_non_optional_and_unknown():
    t = load_topology("nsfnet.topo")
    with pytest.raises(NotOptional):
        apply_modification(t, SelectNodes(("v1",)))
    with pytest.raises(UnknownNode):
        apply_modification(t, SelectNodes(("v99",)))


def test_instance_requires_active_endpoints():
    t = load_topology("nsfnet.topo")
    with pytest.raises(InvalidDemand):
        NetworkInstance(t, uniform_demand(t.node_ids(), 1000.0))


def test_relabel_is_consistent():
    t = load_topology("secoqc.topo")
    inst = NetworkInstance(t, uniform_demand(t.active_nodes, 25000))
    mapping = {f"v{i}": f"node_{7 - i}" for i in range(1, 7)}
    out = relabel(inst, mapping)
    assert out.topology.find_edge("e1").pair == frozenset({"node_6", "node_5"})
    assert ("node_6", "node_1") in out.demand.connections
    with pytest.raises(ModelError):
        relabel(inst, {"v1": "x", "v2": "x"})


def test_topology_file_defaults_and_diagnostics(tmp_path):
    t = topology_from_mapping({"nodes": [{"id": "a"}, {"id": "b"}],
                               "edges": [{"a": "a", "b": "b", "length_km": 3}]})
    assert t.edges[0].classical_capacity_bps == 1e9
    assert t.edges[0].label == "e1"

    bad = tmp_path / "bad.topo"
    bad.write_text("nodes:\n  - id: a\n  - id: b\nedges:\n  - {a: a, b: c, length_km: 1}\n")
    with pytest.raises(DanglingEndpoint, match="bad.topo"):
        load_topology(bad)
    bad.write_text("nodes:\n  - id: a\n  - id: b\nedges:\n  - {a: a, b: b, length_km: far}\n")
    with pytest.raises(ModelError, match="length_km"):
        load_topology(bad)


def test_demand_file(tmp_path):
    path = tmp_path / "d.yaml"
    path.write_text("connections:\n"
                    "  - {source: v1, sink: v2, demand_bps: 1000}\n"
                    "  - {source: v2, sink: v1, demand_bps: 0}\n"
                    "  - {source: v3, sink: v1, demand_bps: 500, beta: 0.5}\n")
    d = load_demand(path)
    assert d.connections == (("v1", "v2"), ("v3", "v1"))
    assert d.beta[("v3", "v1")] == 0.5
