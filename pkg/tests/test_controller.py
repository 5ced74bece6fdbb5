import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cutc.config import Config
from cutc.controller import ControllerAbort, EpochState, check_trace, run, step_epoch
from cutc.network import Network, Street
from cutc.preprocess import Demand
from cutc.solver import solve
from cutc.preprocess import build_instance
from cutc.synth import corridor_demand, grid_network, random_demand

CFG = Config(node_limit=5000, budget_secs=30)


def line(cap=4):
    streets = {s: Street.build(s, 125.0, cap) for s in "ABCD"}
    return Network(streets, frozenset({("A", "B"), ("B", "C"), ("C", "D")}))


def test_empty_demand_empty_trace():
    t = run([], line(), CFG)
    assert t.commitments == {} and t.epochs == []


def test_one_vehicle_equals_solo_schedule():
    net = line()
    d = Demand("v", True, 3, "A", "D")
    trace = run([d], net, CFG)
    solo = solve(build_instance(net, [d]))
    assert trace.commitments["v"].timeline == solo.timelines["v"]
    assert trace.commitments["v"].depart == 3


def test_first_epoch_commits_all_arrivals():
    net = line()
    state = EpochState(pending=[Demand(f"v{i}", True, 0, "A", "D") for i in range(3)])
    new, sched = step_epoch(state, net, CFG)
    assert sorted(new.committed) == ["v0", "v1", "v2"]
    assert new.pending == [] and new.clock == 1
    assert sorted(sched.timelines) == ["v0", "v1", "v2"]


def test_second_epoch_sees_commitments_as_fixed():
    net = line(cap=10)
    state = EpochState(pending=[Demand(f"v{i}", True, 0, "A", "D") for i in range(3)])
    state, _ = step_epoch(state, net, CFG)
    state.pending = [Demand("w", True, 1, "A", "D")]
    state, _ = step_epoch(state, net, CFG)
    assert state.last.controlled == 1 and state.last.simulated == 3
    assert len(state.committed) == 4


def test_full_origin_defers_by_one_epoch():
    net = line(cap=1)
    blocker = Demand("b", True, 0, "A", "D")
    state, _ = step_epoch(EpochState(pending=[blocker]), net, CFG)
    late = Demand("v", True, 1, "A", "D")
    state.pending = [late]
    state, _ = step_epoch(state, net, CFG)
    # A is held by the blocker at step 1
    assert [d.id for d in state.pending] == ["v"]
    assert state.deferrals == {"v": 1}
    while state.pending:
        state, _ = step_epoch(state, net, CFG)
    c = state.committed["v"]
    assert c.requested == 1 and c.depart > 1
    assert c.depart == state.committed["b"].timeline.exits[0]


def test_max_defer_aborts():
    net = line(cap=1)
    demand = [Demand("b", True, 0, "A", "D"), Demand("v", True, 0, "A", "D")]
    with pytest.raises(ControllerAbort, match="deferred"):
        run(demand, net, CFG.replace(max_defer=1))


def test_unreachable_aborts_loudly():
    with pytest.raises(ControllerAbort):
        run([Demand("v", True, 0, "D", "A")], line(), CFG)


def test_fifty_vehicle_grid_is_globally_valid():
    net = grid_network(seed=2)
    demand = random_demand(net, 50, 2.0, seed=2)
    trace = run(demand, net, CFG.replace(node_limit=2000, max_defer=500))
    assert sorted(trace.commitments) == sorted(d.id for d in demand)
    assert check_trace(trace, net) == []


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_epochs_compose_and_conserve(seed):
    net = grid_network(rows=3, cols=4, diagonals=3, seed=seed)
    demand = random_demand(net, 12, 1.5, seed=seed, min_hops=2)
    cfg = CFG.replace(node_limit=1000, max_defer=1000)
    state = EpochState()
    queue = sorted(demand, key=lambda d: (d.depart, d.id))
    seen_events = set()
    i = 0
    while i < len(queue) or state.pending:
        while i < len(queue) and queue[i].depart <= state.clock:
            state.pending = state.pending + [queue[i]]
            i += 1
        before = {v: c.timeline for v, c in state.committed.items()}
        state, _ = step_epoch(state, net, cfg)
        # commitments never change once made
        for v, tl in before.items():
            assert state.committed[v].timeline == tl
        events = {(v, s, a, b) for v, c in state.committed.items() for s, a, b in
                  c.timeline.events()}
        assert seen_events <= events
        seen_events = events
        # nobody is both pending and committed
        assert not {d.id for d in state.pending} & set(state.committed)
    assert sorted(state.committed) == sorted(d.id for d in demand)


def test_corridor_run_is_sound():
    net = grid_network(seed=1)
    demand = corridor_demand(net, 40, 3.0, seed=1)
    trace = run(demand, net, CFG.replace(node_limit=2000, max_defer=1000))
    assert check_trace(trace, net) == []
