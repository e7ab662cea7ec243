import random

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from oracles import brute_force_bound, random_network
from qkdnet.mcfp import (
    EmptyConnectionSet, FlowAssignment, FlowVarKey, UnknownConnection, ZeroDemand,
    build_milp, demand_satisfaction, flow_value, its_bound, objective_grid,
    verify_assignment, whole_satisfaction,
)
from qkdnet.model import (
    AddSystem, DemandModel, Edge, NetworkInstance, Node, Topology, apply_modification,
    load_topology, relabel, uniform_demand,
)
from qkdnet.solver import LE, solve_lp, solve_milp


def toy(key_rate_bps=100_000.0, demand=10_000.0, beta=1.0):
    topo = Topology((Node("s"), Node("t")),
                    (Edge("s", "t", 0.0, key_rate_bps=key_rate_bps, label="e1"),))
    return NetworkInstance(topo, DemandModel.from_entries([("s", "t", demand, beta)]))


@pytest.fixture(scope="module")
def secoqc():
    t = load_topology("secoqc.topo")
    return NetworkInstance(t, uniform_demand(t.active_nodes, 25_000))


def test_toy_counts():
    milp = build_milp(toy())
    assert len(milp.variables) == 3
    assert milp.count("cap_") == 2 and milp.count("cons_") == 0 and milp.count("link_") == 1


def test_secoqc_counts(secoqc):
    milp = build_milp(secoqc)
    assert len(milp.integer_indices) == 480
    assert len(milp.variables) == 481
    assert milp.count("cap_") == 16
    assert milp.count("cons_") == 120
    assert milp.count("link_") == 30


def test_zero_beta_makes_key_rows_vacuous(secoqc):
    t = secoqc.topology
    milp = build_milp(NetworkInstance(t, uniform_demand(t.active_nodes, 25_000, beta=0.0)))
    key_rows = [c for c in milp.constraints if c.name.startswith("cap_r_")]
    assert len(key_rows) == 8 and all(not c.coeffs for c in key_rows)


def test_keys_unique_and_directed(secoqc):
    milp = build_milp(secoqc)
    assert len(set(milp.keys)) == len(milp.keys)
    assert FlowVarKey("v1", "v2", "v1", "v2") in milp.keys
    assert FlowVarKey("v1", "v2", "v2", "v1") in milp.keys


def test_empty_connection_set():
    topo = Topology((Node("a"), Node("b")), (Edge("a", "b", 1.0),))
    with pytest.raises(EmptyConnectionSet):
        build_milp(NetworkInstance(topo, uniform_demand(["a", "b"], 0.0)))


def test_flow_value_examples():
    conn = ("s", "t")
    assert flow_value(FlowAssignment({}, 4000, (conn,)), conn) == 0
    one_path = FlowAssignment({FlowVarKey("s", "t", "s", "t"): 6}, 4000, (conn,))
    assert flow_value(one_path, conn) == 24_000
    cycle = FlowAssignment({FlowVarKey("s", "t", "u", "t"): 8,
                            FlowVarKey("s", "t", "t", "w"): 2}, 4000, (conn,))
    assert flow_value(cycle, conn) == 6 * 4000
    with pytest.raises(UnknownConnection):
        flow_value(one_path, ("t", "s"))


def test_satisfaction_examples():
    conn = ("s", "t")
    a = FlowAssignment({FlowVarKey("s", "t", "s", "t"): 6}, 4000, (conn,))
    assert demand_satisfaction(a, conn, 25_000) == pytest.approx(0.96)
    assert demand_satisfaction(a, conn, 24_000) == 1.0
    assert demand_satisfaction(FlowAssignment({}, 4000, (conn,)), conn, 1.0) == 0
    with pytest.raises(ZeroDemand):
        demand_satisfaction(a, conn, 0.0)


def test_whole_satisfaction_is_minimum():
    conns = (("a", "b"), ("b", "c"), ("c", "a"))
    demand = DemandModel.from_entries([(s, t, 4000.0, 1.0) for s, t in conns])
    a = FlowAssignment({FlowVarKey("a", "b", "a", "b"): 1, FlowVarKey("b", "c", "b", "c"): 2},
                       4000, conns)
    assert whole_satisfaction(a, demand) == 0
    with pytest.raises(EmptyConnectionSet):
        whole_satisfaction(a, DemandModel((), {}, {}))


def test_toy_bound():
    r = its_bound(toy())
    assert r.bound == 10.0
    assert r.assignment.get(FlowVarKey("s", "t", "s", "t")) == 25
    assert r.satisfied


def test_toy_without_keys():
    r = its_bound(toy(key_rate_bps=0.0))
    assert r.bound == 0 and not r.satisfied and r.status == "optimal"


def test_secoqc_bound(secoqc):
    r = its_bound(secoqc)
    assert r.bound == pytest.approx(0.96, abs=1e-12)
    assert verify_assignment(secoqc, r.assignment).ok
    bridge = [c for c in secoqc.demand.connections if "v1" in c]
    assert len(bridge) == 10
    assert all(r.satisfactions[c] == pytest.approx(0.96) for c in bridge)
    doubled = its_bound(NetworkInstance(apply_modification(secoqc.topology, AddSystem("e1")),
                                        secoqc.demand))
    assert doubled.bound == pytest.approx(1.92, abs=1e-12)


def test_secoqc_without_rounding_seed(secoqc):
    # plain branch-and-bound from the zero flow reaches the same optimum
    milp = build_milp(secoqc)
    lp = milp.to_linear_program()
    sol = solve_milp(lp, milp.integer_indices, incumbent=np.zeros(lp.num_vars),
                     objective_step=objective_grid(secoqc))
    assert sol.objective == pytest.approx(0.96, abs=1e-12)


def test_verify_flags_key_capacity_violation():
    inst = toy()
    a = FlowAssignment({FlowVarKey("s", "t", "s", "t"): 26}, 4000, (("s", "t"),))
    report = verify_assignment(inst, a)
    assert not report.ok
    assert [v.kind for v in report.violations] == ["key-capacity"]
    assert report.violations[0].where == "e1"
    assert report.violations[0].slack == pytest.approx(-4000)


def test_verify_flags_conservation_leak(secoqc):
    a = FlowAssignment({FlowVarKey("v1", "v6", "v1", "v2"): 1}, 4000, secoqc.demand.connections)
    report = verify_assignment(secoqc, a)
    assert [(v.kind, v.where) for v in report.violations] == [("conservation", "v1->v6 at v2")]


def test_verify_flags_fractional_flow():
    a = FlowAssignment({FlowVarKey("s", "t", "s", "t"): 1.5}, 4000, (("s", "t"),))
    assert "integrality" in [v.kind for v in verify_assignment(toy(), a).violations]


def test_verify_counts_both_directions_against_classical_capacity():
    topo = Topology((Node("a"), Node("b")),
                    (Edge("a", "b", 0.0, classical_capacity_bps=8000, key_rate_bps=1e9),))
    inst = NetworkInstance(topo, uniform_demand(["a", "b"], 4000))
    a = FlowAssignment({FlowVarKey("a", "b", "a", "b"): 1, FlowVarKey("b", "a", "b", "a"): 2},
                       4000, inst.demand.connections)
    assert [v.kind for v in verify_assignment(inst, a).violations] == ["classical-capacity"]


def test_quantization_bracket(secoqc):
    for inst in (secoqc, NetworkInstance(apply_modification(secoqc.topology, AddSystem("e1")),
                                         secoqc.demand)):
        r = its_bound(inst)
        assert r.lp_bound >= r.bound
        assert (r.lp_bound - r.bound) * 25_000 <= inst.packet_bits


def test_matches_brute_force_on_small_networks():
    rng = random.Random(1234)
    for _ in range(40):
        inst = random_network(rng)
        r = its_bound(inst)
        assert r.bound == pytest.approx(brute_force_bound(inst), abs=1e-12)
        assert verify_assignment(inst, r.assignment).ok
        assert r.lp_bound >= r.bound - 1e-9


def test_plain_branch_and_bound_matches_brute_force():
    rng = random.Random(77)
    for _ in range(25):
        inst = random_network(rng)
        milp = build_milp(inst)
        lp = milp.to_linear_program()
        sol = solve_milp(lp, milp.integer_indices, incumbent=np.zeros(lp.num_vars))
        assert sol.objective == pytest.approx(brute_force_bound(inst), abs=1e-9)


_SLOW = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@_SLOW
@given(st.integers(0, 10**6), st.data())
def test_adding_a_system_never_lowers_bound(seed, data):
    inst = random_network(random.Random(seed))
    edge = data.draw(st.sampled_from(inst.topology.edges))
    before = its_bound(inst, relaxation=False).bound
    after = its_bound(NetworkInstance(apply_modification(inst.topology, AddSystem(edge)),
                                      inst.demand), relaxation=False).bound
    assert after >= before


@_SLOW
@given(st.integers(0, 10**6), st.floats(0.0, 1.0))
def test_weaker_encryption_never_lowers_bound(seed, factor):
    inst = random_network(random.Random(seed))
    d = inst.demand
    weaker = DemandModel(d.connections, d.demand_bps, {k: b * factor for k, b in d.beta.items()})
    assert (its_bound(NetworkInstance(inst.topology, weaker), relaxation=False).bound
            >= its_bound(inst, relaxation=False).bound)


@_SLOW
@given(st.integers(0, 10**6), st.randoms(use_true_random=False))
def test_relabeling_leaves_bound_unchanged(seed, shuffler):
    inst = random_network(random.Random(seed))
    names = inst.topology.node_ids()
    targets = [f"r{i}" for i in range(len(names))]
    shuffler.shuffle(targets)
    renamed = relabel(inst, dict(zip(names, targets)))
    assert its_bound(renamed).bound == its_bound(inst).bound


def test_names_fall_back_to_positions_for_odd_ids():
    topo = Topology((Node("a.1"), Node("b-2")), (Edge("a.1", "b-2", 0.0, key_rate_bps=8000),))
    milp = build_milp(NetworkInstance(topo, uniform_demand(["a.1", "b-2"], 4000)))
    assert milp.variables[0].name == "x_n0_n1_n0_n1"
    lp = milp.to_linear_program()
    assert lp.senses.count(LE) == lp.num_rows
    assert solve_lp(lp).objective == pytest.approx(1.0)
