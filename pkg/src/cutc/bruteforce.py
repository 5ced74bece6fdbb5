"""Exhaustive reference solver for desk-scale instances (testing oracle)."""

from __future__ import annotations

import itertools

from cutc.scheduling import (PROVEN, Infeasible, Schedule, SchedulingInstance, Timeline,
                             check, evaluate)

MAX_CONTROLLED = 3
MAX_STREETS = 8
MAX_HORIZON = 15


class TooLarge(ValueError):
    pass


def _vehicle_timelines(instance: SchedulingInstance, v):
    H = instance.horizon
    net = instance.network
    for route in sorted(v.routes, key=lambda r: (r.cost, r.id)):
        maxtt = [net.streets[s].max_travel_time for s in route.streets]
        ranges = [range(v.depart, v.depart + 1)]
        ranges += [range(max(0, v.depart + lo), min(H, v.depart + hi) + 1)
                   for lo, hi in route.windows[1:]]
        for enters in itertools.product(*ranges):
            if any(not enters[i] < enters[i + 1] <= enters[i] + maxtt[i]
                   for i in range(len(enters) - 1)):
                continue
            last = enters[-1]
            for out in range(last + 1, min(H, last + maxtt[-1]) + 1):
                yield Timeline(v.id, route.id, route.streets, tuple(enters),
                               tuple(enters[1:]) + (out,))


def brute_force_solve(instance: SchedulingInstance) -> Schedule:
    """Enumerate every route choice and every window-respecting enter/exit
    assignment; return a lexicographic optimum (first found among ties)."""
    if len(instance.controlled) > MAX_CONTROLLED:
        raise TooLarge(f"{len(instance.controlled)} controlled vehicles > {MAX_CONTROLLED}")
    if len(instance.network.streets) > MAX_STREETS:
        raise TooLarge(f"{len(instance.network.streets)} streets > {MAX_STREETS}")
    if instance.horizon > MAX_HORIZON:
        raise TooLarge(f"horizon {instance.horizon} > {MAX_HORIZON}")

    fixed = {v.id: v.fixed for v in instance.simulated}
    vehicles = sorted(instance.controlled, key=lambda v: v.id)
    if not vehicles:
        sched = Schedule(dict(fixed))
        if check(sched, instance):
            raise Infeasible([], "fixed traffic violates constraints")
        sched.objective = evaluate(sched, instance)
        return sched

    # a timeline that fails next to the fixed traffic alone fails in every
    # combination, because more vehicles only raise occupancy
    options = []
    for v in vehicles:
        solo = SchedulingInstance(instance.network, instance.horizon, [v],
                                  instance.simulated, instance.protect_simulated)
        ok = [tl for tl in _vehicle_timelines(instance, v)
              if not check(Schedule({**fixed, v.id: tl}), solo)]
        if not ok:
            raise Infeasible([v.id], "no feasible timeline even without other controlled traffic")
        options.append(ok)

    # walk primary-cost levels upwards; the first level holding a feasible
    # assignment is optimal in the primary term and is searched exhaustively
    levels: dict[int, list[tuple]] = {}
    by_route = []
    for opts in options:
        groups: dict[str, list[Timeline]] = {}
        for tl in opts:
            groups.setdefault(tl.route, []).append(tl)
        by_route.append(groups)
    costs = [{r.id: r.cost for r in v.routes} for v in vehicles]
    for combo in itertools.product(*[sorted(g) for g in by_route]):
        total = sum(c[r] for c, r in zip(costs, combo))
        levels.setdefault(total, []).append(combo)

    for total in sorted(levels):
        best = None
        for combo in levels[total]:
            pools = [by_route[k][r] for k, r in enumerate(combo)]
            for sched in _assignments(instance, vehicles, fixed, pools):
                obj = evaluate(sched, instance)
                if best is None or obj < best.objective:
                    sched.objective = obj
                    sched.status = PROVEN
                    best = sched
        if best is not None:
            best.timelines = dict(sorted(best.timelines.items()))
            return best
    raise Infeasible([vehicles[-1].id], "no jointly feasible assignment")


def _assignments(instance, vehicles, fixed, pools):
    """Every jointly valid choice of one timeline per vehicle. Partial choices
    are checked on the sub-instance of the vehicles chosen so far."""
    chosen: dict[str, Timeline] = {}

    def rec(k):
        if k == len(vehicles):
            yield Schedule({**fixed, **chosen})
            return
        sub = SchedulingInstance(instance.network, instance.horizon, vehicles[:k + 1],
                                 instance.simulated, instance.protect_simulated)
        for tl in pools[k]:
            chosen[tl.vehicle] = tl
            if not check(Schedule({**fixed, **chosen}), sub):
                yield from rec(k + 1)
            del chosen[tl.vehicle]

    yield from rec(0)
