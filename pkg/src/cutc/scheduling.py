"""Scheduling instance, schedule and objective types, plus the independent
constraint checker and objective evaluator.

The checker and evaluator work from plain event lists through
:class:`~cutc.network.OccupancyLedger`; they share no code with the search in
:mod:`cutc.solver`, which keeps a dense array ledger instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from cutc.network import Network, OccupancyLedger, travel_time

PROVEN = "proven"
ANYTIME = "anytime-best"


class Infeasible(Exception):
    """No route/timing assignment satisfies the hard constraints."""

    def __init__(self, vehicles, reason: str = ""):
        self.vehicles = tuple(vehicles)
        self.reason = reason
        super().__init__(f"infeasible for vehicle(s) {', '.join(self.vehicles)}"
                         + (f": {reason}" if reason else ""))


class SolveTimeout(Exception):
    """Budget expired before any feasible schedule was found."""


class ScheduleError(ValueError):
    """A schedule violates hard constraints where a valid one is required."""


@dataclass(frozen=True)
class Route:
    """Candidate route. Windows are (min_enter, max_enter) relative to a start at t=0."""
    id: str
    vehicle: str
    streets: tuple[str, ...]
    windows: tuple[tuple[int, int], ...]
    cost: int

    def __post_init__(self):
        if len(self.streets) != len(self.windows):
            raise ValueError(f"route {self.id}: {len(self.streets)} streets but "
                             f"{len(self.windows)} windows")
        if len(set(self.streets)) != len(self.streets):
            raise ValueError(f"route {self.id}: repeated street")
        if self.cost < 0:
            raise ValueError(f"route {self.id}: negative cost")
        prev = 0
        for s, (lo, hi) in zip(self.streets, self.windows):
            if lo > hi or lo < prev:
                raise ValueError(f"route {self.id}: bad window ({lo}, {hi}) on {s}")
            prev = lo
        if self.windows and self.windows[0][0] != 0:
            raise ValueError(f"route {self.id}: first street must open at 0")


@dataclass(frozen=True)
class Timeline:
    """One vehicle's committed street sequence with enter/exit steps."""
    vehicle: str
    route: str
    streets: tuple[str, ...]
    enters: tuple[int, ...]
    exits: tuple[int, ...]

    def events(self):
        return zip(self.streets, self.enters, self.exits)

    def shifted(self, dt: int) -> "Timeline":
        return Timeline(self.vehicle, self.route, self.streets,
                        tuple(t + dt for t in self.enters), tuple(t + dt for t in self.exits))


@dataclass(frozen=True)
class VehicleState:
    id: str
    controlled: bool
    origin: str
    destination: str
    depart: int = 0
    routes: tuple[Route, ...] = ()
    fixed: Timeline | None = None

    def __post_init__(self):
        if self.controlled:
            if not self.routes:
                raise ValueError(f"controlled vehicle {self.id} has no candidate route")
            if self.fixed is not None:
                raise ValueError(f"controlled vehicle {self.id} has a fixed schedule")
        else:
            if self.fixed is None:
                raise ValueError(f"simulated vehicle {self.id} needs a fixed schedule")
            if len(self.routes) > 1:
                raise ValueError(f"simulated vehicle {self.id} has several routes")


@dataclass
class SchedulingInstance:
    network: Network
    horizon: int
    controlled: list[VehicleState] = field(default_factory=list)
    simulated: list[VehicleState] = field(default_factory=list)
    # also enforce r11/r13 at simulated enter instants (commitment protection)
    protect_simulated: bool = False

    def __post_init__(self):
        ids = [v.id for v in self.controlled] + [v.id for v in self.simulated]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate vehicle id in instance")
        for v in self.simulated:
            for s, a, b in v.fixed.events():
                if s not in self.network.streets:
                    raise ValueError(f"vehicle {v.id}: unknown street {s}")
                if not 0 <= a < b <= self.horizon:
                    raise ValueError(f"vehicle {v.id}: event ({a}, {b}) on {s} outside "
                                     f"[0, {self.horizon}]")
        for v in self.controlled:
            for r in v.routes:
                if not self.network.is_route(list(r.streets)):
                    raise ValueError(f"vehicle {v.id}: route {r.id} is not link-valid")
                if r.streets[0] != v.origin or r.streets[-1] != v.destination:
                    raise ValueError(f"vehicle {v.id}: route {r.id} does not join "
                                     f"{v.origin} to {v.destination}")

    def vehicle(self, vid: str) -> VehicleState:
        for v in self.controlled + self.simulated:
            if v.id == vid:
                return v
        raise KeyError(vid)


class Objective(NamedTuple):
    """Lexicographic: route cost first, spread second."""
    primary: int
    secondary: int


@dataclass
class Schedule:
    timelines: dict[str, Timeline]
    objective: Objective | None = None
    status: str = PROVEN
    stats: dict = field(default_factory=dict, compare=False)

    def events(self):
        for vid in sorted(self.timelines):
            yield from ((vid, *ev) for ev in self.timelines[vid].events())


class Violation(NamedTuple):
    rule: str
    vehicle: str
    street: str | None
    step: int | None
    detail: str = ""


def _ledger(instance: SchedulingInstance, schedule: Schedule) -> OccupancyLedger:
    events = []
    for tl in schedule.timelines.values():
        events.extend((s, a, b) for s, a, b in tl.events() if b > a and s in instance.network.streets)
    return OccupancyLedger.for_network(instance.network, events)


def check(schedule: Schedule, instance: SchedulingInstance) -> list[Violation]:
    """Return every hard-constraint violation; empty iff the schedule is valid.

    Structural tags: r1 (route not a candidate / vehicle missing), r2
    (simulated vehicle re-timed), r3 (timeline streets differ from route).
    Timing and capacity tags follow the rule numbering r4..r14.
    """
    net = instance.network
    out: list[Violation] = []
    tls = schedule.timelines

    for v in instance.simulated:
        tl = tls.get(v.id)
        if tl is None or (tl.streets, tl.enters, tl.exits) != (
                v.fixed.streets, v.fixed.enters, v.fixed.exits):
            out.append(Violation("r2", v.id, None, None, "simulated vehicle re-timed"))

    checked: list[tuple[str, Timeline]] = []
    for v in instance.controlled:
        tl = tls.get(v.id)
        if tl is None:
            out.append(Violation("r1", v.id, None, None, "no route chosen"))
            continue
        route = next((r for r in v.routes if r.id == tl.route), None)
        if route is None:
            out.append(Violation("r1", v.id, None, None, f"route {tl.route} not a candidate"))
            continue
        if tl.streets != route.streets or len(tl.enters) != len(route.streets) \
                or len(tl.exits) != len(route.streets):
            out.append(Violation("r3", v.id, None, None, "timeline streets differ from route"))
            continue
        checked.append((v.id, tl))
        for i, (s, a, b) in enumerate(tl.events()):
            st = net.streets[s]
            if i == 0:
                if a != v.depart:
                    out.append(Violation("r5", v.id, s, a, f"origin enter != {v.depart}"))
            else:
                lo, hi = route.windows[i]
                if not v.depart + lo <= a <= v.depart + hi:
                    out.append(Violation("r4", v.id, s, a,
                                         f"enter outside [{v.depart + lo}, {v.depart + hi}]"))
            if not a < b <= a + st.max_travel_time or b > instance.horizon or a < 0:
                out.append(Violation("r6", v.id, s, b, "exit outside (enter, enter+max]"))
        for i in range(len(tl.streets) - 1):
            if tl.exits[i] != tl.enters[i + 1]:
                out.append(Violation("r12", v.id, tl.streets[i + 1], tl.enters[i + 1],
                                     f"enter {tl.enters[i + 1]} != previous exit {tl.exits[i]}"))

    ledger = _ledger(instance, schedule)
    guarded = list(checked)
    if instance.protect_simulated:
        guarded += [(v.id, tls[v.id]) for v in instance.simulated if v.id in tls]
    for vid, tl in guarded:
        for s, a, b in tl.events():
            st = net.streets[s]
            n = ledger.occupancy(s, a)
            if b < a + travel_time(st, n):
                out.append(Violation("r11", vid, s, b,
                                     f"exit before enter + travel time {travel_time(st, n)}"))
            if n > st.capacity:
                out.append(Violation("r13", vid, s, a, f"occupancy {n} > capacity {st.capacity}"))

    for tl in tls.values():
        for s, a, _ in tl.events():
            rid = net.roundabout_of(s) if s in net.streets else None
            if rid is None:
                continue
            ra = net.roundabouts[rid]
            total = sum(ledger.occupancy(m, a) for m in ra.member_streets)
            if total > ra.capacity:
                out.append(Violation("r14", tl.vehicle, s, a,
                                     f"roundabout {rid} holds {total} > {ra.capacity}"))
    return out


def evaluate(schedule: Schedule, instance: SchedulingInstance) -> Objective:
    """Objective of a valid schedule; raises :class:`ScheduleError` otherwise.

    The spread term sums occupancy over (street, step) pairs at which at
    least one vehicle enters that street, each pair counted once.
    """
    bad = check(schedule, instance)
    if bad:
        raise ScheduleError(f"{len(bad)} violation(s), first: {bad[0]}")
    primary = 0
    for v in instance.controlled:
        rid = schedule.timelines[v.id].route
        primary += next(r.cost for r in v.routes if r.id == rid)
    ledger = _ledger(instance, schedule)
    grounded = {(s, a) for tl in schedule.timelines.values() for s, a, _ in tl.events()}
    secondary = sum(ledger.occupancy(s, t) for s, t in grounded)
    return Objective(primary, secondary)
