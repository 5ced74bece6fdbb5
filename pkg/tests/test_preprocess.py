import itertools

import networkx as nx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutc.network import Network, NetworkError, OccupancyLedger, Ring, Street
from cutc.preprocess import (Demand, UnreachableDestination, build_instance, cluster_paths,
                             compute_windows, contract_roundabouts, enumerate_acyclic_paths,
                             route_cost, select_diverse_routes)
from cutc.synth import grid_network


def net_of(lengths: dict, links, rings=(), cap=4) -> Network:
    streets = {s: Street.build(s, float(l), cap) for s, l in lengths.items()}
    return Network(streets, frozenset(links), {}, 5, {r.id: r for r in rings})


DIAMOND = net_of({"A": 50, "B": 60, "C": 70, "D": 50},
                 {("A", "B"), ("A", "C"), ("B", "D"), ("C", "D")})


def test_two_street_path():
    n = net_of({"A": 10, "B": 10}, {("A", "B")})
    assert enumerate_acyclic_paths(n, "A", "B") == [["A", "B"]]


def test_diamond_both_paths_shortest_first():
    assert enumerate_acyclic_paths(DIAMOND, "A", "D") == [["A", "B", "D"], ["A", "C", "D"]]


def test_unreachable_gives_empty():
    assert enumerate_acyclic_paths(DIAMOND, "D", "A") == []


def test_limit_keeps_shortest():
    assert enumerate_acyclic_paths(DIAMOND, "A", "D", limit=1) == [["A", "B", "D"]]


def _line_graph(net: Network) -> nx.DiGraph:
    g = nx.DiGraph()
    g.add_nodes_from(net.streets)
    g.add_edges_from(net.links)
    return g


@pytest.mark.parametrize("seed", range(4))
def test_enumeration_matches_networkx(seed):
    net = grid_network(rows=3, cols=3, diagonals=2, seed=seed)
    g = _line_graph(net)
    names = sorted(net.streets)
    for src, dst in [(names[0], names[-1]), (names[3], names[7]), (names[-2], names[1])]:
        if src == dst:
            continue
        ours = enumerate_acyclic_paths(net, src, dst, limit=10_000)
        ref = [list(p) for p in nx.all_simple_paths(g, src, dst)]
        assert sorted(map(tuple, ours)) == sorted(map(tuple, ref))
        lengths = [net.route_length(p) for p in ours]
        assert lengths == sorted(lengths)
        # a limited run returns a prefix of the length order
        k = max(1, len(ours) // 3)
        short = enumerate_acyclic_paths(net, src, dst, limit=k)
        assert [net.route_length(p) for p in short] == lengths[:k]


def test_single_path_selected_for_any_k():
    for k in (1, 3, 9):
        assert select_diverse_routes([["A", "B"]], k) == [["A", "B"]]


def test_same_street_set_keeps_one():
    n = net_of({"A": 10, "B": 10, "C": 10}, set())
    p1, p2 = ["A", "B", "C"], ["A", "C", "B"]
    # one cluster; equal lengths fall back to the street-id order
    assert select_diverse_routes([p2, p1], k=1, network=n) == [p1]
    short = net_of({"A": 10, "B": 10, "C": 10, "E": 99}, set())
    assert select_diverse_routes([["A", "E", "B", "C"], ["A", "B", "C"]], k=1,
                                 network=short) == [["A", "B", "C"]]


def test_three_clusters_k4_spans_clusters():
    # three families sharing a stem each; Jaccard inside a family >= 0.5
    fam = {
        "x": [["o", "x1", "x2", "x3", "d"], ["o", "x1", "x2", "x4", "d"],
              ["o", "x1", "x5", "x3", "d"], ["o", "x1", "x2", "x3", "x6", "d"]],
        "y": [["o", "y1", "y2", "y3", "d"], ["o", "y1", "y2", "y4", "d"],
              ["o", "y1", "y2", "y3", "y5", "d"]],
        "z": [["o", "z1", "z2", "z3", "d"], ["o", "z1", "z2", "z4", "d"],
              ["o", "z1", "z2", "z3", "z5", "d"]],
    }
    paths = [p for ps in fam.values() for p in ps]
    assert len(paths) == 10
    clusters = cluster_paths(paths, 0.5)
    assert len(clusters) == 3
    chosen = select_diverse_routes(paths, k=4, per_cluster=2)
    assert len(chosen) == 4
    fams = {next(f for f, ps in fam.items() if p in ps) for p in chosen}
    assert len(fams) >= 2


def _roundabout(arms: int):
    names = [f"arc{i}" for i in range(arms)]
    lengths = {a: 10 for a in names}
    links = set()
    for i, a in enumerate(names):
        lengths[f"in{i}"] = 100
        lengths[f"out{i}"] = 100
        links.add((f"in{i}", a))
        links.add((a, names[(i + 1) % arms]))
        links.add((a, f"out{(i + 1) % arms}"))
    return net_of(lengths, links, [Ring("R", None, tuple(names))])


def test_four_arm_contraction():
    c = contract_roundabouts(_roundabout(4))
    inner = [s for s in c.streets.values() if s.id.startswith("R:")]
    assert len(inner) == 12
    assert {s.length for s in inner} == {10.0, 20.0, 30.0}
    assert c.roundabouts["R"].member_streets == {s.id for s in inner}
    assert not any(s.startswith("arc") for s in c.streets)


def test_two_arm_contraction():
    c = contract_roundabouts(_roundabout(2))
    assert len([s for s in c.streets if s.startswith("R:")]) == 2


def test_no_roundabout_unchanged():
    assert contract_roundabouts(DIAMOND) == DIAMOND


def test_broken_ring_rejected():
    n = net_of({"a": 10, "b": 10, "c": 10}, {("a", "b"), ("b", "c")},
               [Ring("R", 3, ("a", "b", "c"))])
    with pytest.raises(NetworkError):
        contract_roundabouts(n)


@pytest.mark.parametrize("arms", [2, 3, 4, 5])
def test_contraction_preserves_reachability(arms):
    raw = _roundabout(arms)
    c = contract_roundabouts(raw)
    for i, j in itertools.product(range(arms), repeat=2):
        if i == j:
            # leaving at the arm you came in by needs the whole ring: dropped
            assert not enumerate_acyclic_paths(c, f"in{i}", f"out{j}", 1)
            continue
        a = bool(enumerate_acyclic_paths(raw, f"in{i}", f"out{j}", 1))
        b = bool(enumerate_acyclic_paths(c, f"in{i}", f"out{j}", 1))
        assert a == b


def test_windows_empty_ledger_prefix_sums():
    route = ["A", "B", "D"]
    w = compute_windows(DIAMOND, route, None, 0, extra_vehicles=0)
    sums = [0, DIAMOND.streets["A"].light_time,
            DIAMOND.streets["A"].light_time + DIAMOND.streets["B"].light_time]
    assert w == [(s, s) for s in sums]


def test_first_window_starts_at_zero():
    for extra in (0, 1, 5):
        assert compute_windows(DIAMOND, ["A", "C", "D"], None, 0, extra)[0][0] == 0


def test_full_street_uses_discharge_time():
    led = OccupancyLedger(DIAMOND.streets, [("A", 0, 50)] * 4)
    w = compute_windows(DIAMOND, ["A", "B"], led, 0)
    assert w[1] == (DIAMOND.streets["A"].light_time, DIAMOND.streets["A"].max_travel_time)


@given(st.integers(0, 30), st.integers(0, 6), st.integers(0, 20))
def test_windows_monotone_and_reachable(seed, extra, depart):
    net = grid_network(rows=3, cols=3, diagonals=2, seed=seed)
    names = sorted(net.streets)
    paths = enumerate_acyclic_paths(net, names[0], names[-1], 5)
    for p in paths:
        w = compute_windows(net, p, OccupancyLedger(net.streets), depart, extra)
        assert w[0][0] == 0
        assert all(lo <= hi for lo, hi in w)
        assert all(a[0] <= b[0] for a, b in zip(w, w[1:]))
        # free flow from the earliest enter lands inside every later window
        t = 0
        for s, (lo, hi) in zip(p, w):
            assert lo <= t <= hi
            t += net.streets[s].light_time


def test_unreachable_destination_rejected():
    with pytest.raises(UnreachableDestination):
        build_instance(DIAMOND, [Demand("v", True, 0, "D", "A")])


def test_build_instance_routes_valid():
    net = grid_network(seed=3)
    names = sorted(net.streets)
    inst = build_instance(net, [Demand("v1", True, 2, names[0], names[-1]),
                                Demand("v2", True, 2, names[5], names[-7])], k=4)
    for v in inst.controlled:
        assert 1 <= len(v.routes) <= 4
        for r in v.routes:
            assert net.is_route(list(r.streets))
            assert r.cost == route_cost(net, r.streets)
            assert v.depart + r.windows[-1][1] <= inst.horizon
