"""One hand-built broken schedule per hard rule, each off by exactly one thing
from a valid base schedule."""

from cutc.network import Network, Roundabout, Street
from cutc.scheduling import Route, Schedule, SchedulingInstance, Timeline, VehicleState

H = 30


def _net(roundabout=False):
    streets = {s: Street.build(s, 125.0, 4) for s in "ABC"}
    ras = {"R": Roundabout("R", 1, frozenset({"A", "C"}))} if roundabout else {}
    return Network(streets, frozenset({("A", "B")}), ras)


ROUTE = Route("v/r0", "v", ("A", "B"), ((0, 0), (2, 10)), 5)


def _v():
    return VehicleState("v", True, "A", "B", 0, (ROUTE,))


def _sim(vid, street, a, b):
    tl = Timeline(vid, f"{vid}/fixed", (street,), (a,), (b,))
    return VehicleState(vid, False, street, street, a, fixed=tl)


def _tl(enters, exits, streets=("A", "B"), route="v/r0"):
    return Timeline("v", route, streets, tuple(enters), tuple(exits))


def valid():
    inst = SchedulingInstance(_net(), H, [_v()], [_sim("s", "B", 20, 22)])
    return Schedule({"v": _tl((0, 2), (2, 4)), "s": inst.simulated[0].fixed}), inst


def mutations():
    """tag -> (schedule, instance) breaking only that rule."""
    out = {}
    base, inst = valid()
    s_fixed = base.timelines["s"]

    def with_v(tl, i=inst, extra=None):
        tls = {"v": tl, "s": s_fixed}
        tls.update(extra or {})
        return Schedule(tls), i

    out["r1"] = with_v(_tl((0, 2), (2, 4), route="v/r9"))
    out["r2"] = with_v(_tl((0, 2), (2, 4)), extra={"s": s_fixed.shifted(1)})
    out["r3"] = with_v(_tl((0,), (2,), streets=("A",)))
    out["r4"] = with_v(_tl((0, 11), (11, 13)))
    out["r5"] = with_v(_tl((1, 3), (3, 5)))
    out["r6"] = with_v(_tl((0, 2), (2, 27)))
    out["r11"] = with_v(_tl((0, 2), (2, 3)))
    out["r12"] = with_v(_tl((0, 3), (2, 5)))

    full = [_sim(f"f{i}", "A", 0, 10) for i in range(4)]
    crowded = SchedulingInstance(_net(), H, [_v()], full)
    out["r13"] = (Schedule({"v": _tl((0, 6), (6, 8)), **{f.id: f.fixed for f in full}}),
                  crowded)

    ring = SchedulingInstance(_net(roundabout=True), H, [_v()], [_sim("c", "C", 0, 10)])
    out["r14"] = (Schedule({"v": _tl((0, 2), (2, 4)), "c": ring.simulated[0].fixed}), ring)
    return out
