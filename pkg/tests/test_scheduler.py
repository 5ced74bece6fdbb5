import dataclasses
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st
from rule_fixtures import mutations, valid

from cutc import textio
from cutc.bruteforce import TooLarge, brute_force_solve
from cutc.network import Network, Street
from cutc.scheduling import (PROVEN, Infeasible, Objective, Route, Schedule, ScheduleError,
                             SchedulingInstance, Timeline, VehicleState, check, evaluate)
from cutc.solver import solve
from cutc.synth import small_instance


def line(*specs, cap=4):
    streets = {s: Street.build(s, float(l), cap) for s, l in specs}
    names = [s for s, _ in specs]
    return Network(streets, frozenset(zip(names, names[1:])))


def test_single_vehicle_runs_free_flow():
    net = line(("A", 125), ("B", 200), ("C", 90))
    lt = [net.streets[s].light_time for s in "ABC"]
    r = Route("v/r0", "v", ("A", "B", "C"), ((0, 0), (lt[0], 20), (lt[0] + lt[1], 40)), 3)
    inst = SchedulingInstance(net, 80, [VehicleState("v", True, "A", "C", 0, (r,))])
    s = solve(inst)
    tl = s.timelines["v"]
    assert tl.enters == (0, lt[0], lt[0] + lt[1])
    assert tl.exits == (lt[0], lt[0] + lt[1], sum(lt))
    assert s.status == PROVEN
    assert s.objective == Objective(3, 3)


def test_shared_capacity_one_street_matches_oracle():
    # A1 -> M -> Z1 and A2 -> M -> Z2, or the detours via P / Q
    streets = {s: Street.build(s, 40.0, 1) for s in ("A1", "A2", "M", "P", "Q", "Z1", "Z2")}
    links = {("A1", "M"), ("A2", "M"), ("M", "Z1"), ("M", "Z2"), ("A1", "P"), ("P", "Z1"),
             ("A2", "Q"), ("Q", "Z2")}
    net = Network(streets, frozenset(links))
    lt = streets["M"].light_time

    def veh(v, a, z, side):
        return VehicleState(v, True, a, z, 0, (
            Route(f"{v}/r0", v, (a, "M", z), ((0, 0), (lt, lt + 4), (2 * lt, 2 * lt + 6)), 2),
            Route(f"{v}/r1", v, (a, side, z), ((0, 0), (lt, lt + 4), (2 * lt, 2 * lt + 6)), 3)))

    inst = SchedulingInstance(net, 15, [veh("v1", "A1", "Z1", "P"), veh("v2", "A2", "Z2", "Q")])
    ours, ref = solve(inst), brute_force_solve(inst)
    assert not check(ours, inst)
    assert evaluate(ours, inst) == evaluate(ref, inst) == ours.objective
    tl1, tl2 = ours.timelines["v1"], ours.timelines["v2"]
    on_m = [(tl.enters[1], tl.exits[1]) for tl in (tl1, tl2) if "M" in tl.streets]
    # apart or staggered: never both on M at one step
    if len(on_m) == 2:
        (a1, b1), (a2, b2) = on_m
        assert b1 <= a2 or b2 <= a1


def test_blocked_route_reports_vehicle():
    net = line(("A", 125), ("B", 125), cap=1)
    sim = VehicleState("s", False, "B", "B", 0, fixed=Timeline("s", "s/fixed", ("B",), (0,), (40,)))
    r = Route("v/r0", "v", ("A", "B"), ((0, 0), (2, 10)), 1)
    inst = SchedulingInstance(net, 40, [VehicleState("v", True, "A", "B", 0, (r,))], [sim])
    with pytest.raises(Infeasible) as err:
        solve(inst)
    assert list(err.value.vehicles) == ["v"]


def test_evaluate_examples():
    net = line(("A", 125), ("B", 125), ("C", 125))
    tl = Timeline("v", "v/r0", ("A", "B", "C"), (0, 2, 4), (2, 4, 6))
    r = Route("v/r0", "v", ("A", "B", "C"), ((0, 0), (2, 2), (4, 4)), 7)
    inst = SchedulingInstance(net, 10, [VehicleState("v", True, "A", "C", 0, (r,))])
    assert evaluate(Schedule({"v": tl}), inst) == Objective(7, 3)
    assert evaluate(Schedule({}), SchedulingInstance(net, 10)) == Objective(0, 0)

    two = line(("A", 125), ("B", 125), ("C", 125), ("D", 125))
    two = Network(two.streets, frozenset({("A", "B"), ("C", "D")}))
    ra = Route("x/r0", "x", ("A", "B"), ((0, 0), (2, 2)), 3)
    rb = Route("y/r0", "y", ("C", "D"), ((0, 0), (2, 2)), 4)
    inst2 = SchedulingInstance(two, 10, [VehicleState("x", True, "A", "B", 0, (ra,)),
                                         VehicleState("y", True, "C", "D", 0, (rb,))])
    s = Schedule({"x": Timeline("x", "x/r0", ("A", "B"), (0, 2), (2, 4)),
                  "y": Timeline("y", "y/r0", ("C", "D"), (0, 2), (2, 4))})
    assert evaluate(s, inst2).primary == 7


def test_evaluate_refuses_invalid():
    sched, inst = mutations()["r12"]
    with pytest.raises(ScheduleError):
        evaluate(sched, inst)


def test_valid_base_has_no_violations():
    assert check(*valid()) == []


@pytest.mark.parametrize("tag", sorted(mutations(), key=lambda t: int(t[1:])))
def test_each_mutation_hits_only_its_rule(tag):
    sched, inst = mutations()[tag]
    assert {v.rule for v in check(sched, inst)} == {tag}


def test_bruteforce_guard_and_empty():
    assert brute_force_solve(SchedulingInstance(line(("A", 10)), 5)).timelines == {}
    assert solve(SchedulingInstance(line(("A", 10)), 5)).timelines == {}
    big = small_instance(1)
    big = dataclasses.replace(big, horizon=99)
    with pytest.raises(TooLarge):
        brute_force_solve(big)


def _objective_or_inf(fn, inst):
    try:
        return fn(inst).objective
    except Infeasible:
        return "infeasible"


@given(st.integers(0, 10**6))
def test_oracle_agreement(seed):
    inst = small_instance(seed)
    assert _objective_or_inf(solve, inst) == _objective_or_inf(brute_force_solve, inst)


@given(st.integers(0, 10**6))
def test_soundness_and_fixed_traffic_untouched(seed):
    inst = small_instance(seed, max_controlled=4, max_streets=8, max_horizon=30)
    try:
        s = solve(inst, node_limit=20_000)
    except Infeasible:
        return
    assert check(s, inst) == []
    assert evaluate(s, inst) == s.objective
    for v in inst.simulated:
        assert s.timelines[v.id] == v.fixed


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_extra_fixed_vehicle_never_restores_feasibility(seed, seed2):
    inst = small_instance(seed)
    if _objective_or_inf(brute_force_solve, inst) != "infeasible":
        return
    rng = random.Random(seed2)
    names = sorted(inst.network.streets)
    s = rng.choice(names)
    a = rng.randrange(inst.horizon)
    b = rng.randint(a + 1, inst.horizon)
    extra = VehicleState("extra", False, s, s, a,
                         fixed=Timeline("extra", "extra/fixed", (s,), (a,), (b,)))
    more = dataclasses.replace(inst, simulated=inst.simulated + [extra])
    assert _objective_or_inf(brute_force_solve, more) == "infeasible"
    assert _objective_or_inf(solve, more) == "infeasible"


@given(st.integers(0, 10**6), st.integers(0, 50))
def test_single_worker_is_deterministic(seed, rseed):
    inst = small_instance(seed, max_controlled=4, max_horizon=25)
    try:
        a = solve(inst, seed=rseed, node_limit=5000)
        b = solve(inst, seed=rseed, node_limit=5000)
    except Infeasible:
        return
    assert textio.write_schedule(a) == textio.write_schedule(b)


@pytest.mark.parametrize("seed", range(6))
def test_portfolio_reaches_same_optimum(seed):
    inst = small_instance(seed + 100, max_controlled=3)
    one = _objective_or_inf(lambda i: solve(i, workers=1), inst)
    three = _objective_or_inf(lambda i: solve(i, workers=3, seed=seed), inst)
    assert one == three
