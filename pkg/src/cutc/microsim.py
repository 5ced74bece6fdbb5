"""Queue-based microscopic simulator and trip metrics.

Time advances in fixed ticks. During a tick every moving vehicle drives at
the tier speed of its street's occupancy at tick start; a vehicle that
reaches the street end waits there until the next street has room. Streets
are single FIFO queues: nobody leaves a street before the vehicles that
entered it earlier. Departures wait at the network edge while the origin
street is full.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from cutc import _kernels
from cutc.network import HEAVY_KMH, LIGHT_KMH, MEDIUM_KMH, Network, kmh_to_ms

WAITING, MOVING, QUEUED, FINISHED = 0, 1, 2, 3
_EPS = 1e-9

WAITING_TIME_NOTE = "waiting time = seconds at zero speed inside the network"


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimRequest:
    vehicle: str
    streets: tuple[str, ...]
    request_time: float         # when the vehicle asks to depart [s]
    release_time: float = None  # earliest permitted departure [s]

    def release(self) -> float:
        return self.request_time if self.release_time is None else self.release_time


@dataclass(frozen=True)
class SimEvent:
    time: float
    vehicle: str
    street: str
    kind: str  # "enter" | "exit"


@dataclass
class TripRecord:
    vehicle: str
    request_time: float
    route_length: float
    first_enter: float | None = None
    network_exit: float | None = None
    waiting: float = 0.0

    @property
    def finished(self) -> bool:
        return self.network_exit is not None


@dataclass
class EventLog:
    events: list[SimEvent] = field(default_factory=list)
    trips: dict[str, TripRecord] = field(default_factory=dict)
    rejected: dict[str, str] = field(default_factory=dict)
    end_time: float = 0.0
    deadlocked: bool = False


@dataclass(frozen=True)
class MetricsReport:
    total_duration: float
    avg_route_length: float
    avg_speed: float
    avg_duration: float
    avg_waiting_time: float
    avg_depart_delay: float

    ROWS = (
        ("Total Duration [s]", "total_duration"),
        ("Avg. Route Length [m]", "avg_route_length"),
        ("Avg. Speed [m/s]", "avg_speed"),
        ("Avg. Duration [s]", "avg_duration"),
        ("Avg. Waiting Time [s]", "avg_waiting_time"),
        ("Avg. Depart Delay [s]", "avg_depart_delay"),
    )


def simulate(requests, network: Network, tick_seconds: float = 1.0,
             max_time: float | None = None) -> EventLog:
    """Run every request to completion (or deadlock / ``max_time``)."""
    log = EventLog()
    names = sorted(network.streets)
    sidx = {s: i for i, s in enumerate(names)}
    streets = [network.streets[s] for s in names]
    length = np.array([s.length for s in streets], dtype=np.float64)
    cap = np.array([s.capacity for s in streets], dtype=np.int64)
    light_below = np.array([s.light_below for s in streets], dtype=np.int64)
    heavy_from = np.array([s.heavy_from for s in streets], dtype=np.int64)
    speeds = np.array([kmh_to_ms(LIGHT_KMH), kmh_to_ms(MEDIUM_KMH), kmh_to_ms(HEAVY_KMH)])

    valid = []
    for r in sorted(requests, key=lambda r: (r.release(), r.request_time, r.vehicle)):
        if r.vehicle in log.trips or r.vehicle in log.rejected:
            raise SimulationError(f"duplicate vehicle {r.vehicle}")
        if not network.is_route(list(r.streets)):
            log.rejected[r.vehicle] = "route is not link-valid"
            continue
        valid.append(r)
        log.trips[r.vehicle] = TripRecord(r.vehicle, r.request_time,
                                          network.route_length(r.streets))
    n = len(valid)
    if n == 0:
        return log

    state = np.full(n, WAITING, dtype=np.int8)
    pos = np.zeros(n)
    cur = np.zeros(n, dtype=np.int64)        # global street index
    leg = np.zeros(n, dtype=np.int64)        # index into the vehicle's route
    waiting = np.zeros(n)
    routes = [[sidx[s] for s in r.streets] for r in valid]
    occ = np.zeros(len(names), dtype=np.int64)
    on_street: list[deque] = [deque() for _ in names]
    depart_q: dict[int, deque] = {}
    release = [r.release() for r in valid]
    next_release = 0
    finished = 0

    def enter(i: int, s: int, t: float):
        state[i] = MOVING
        pos[i] = 0.0
        cur[i] = s
        occ[s] += 1
        on_street[s].append(i)
        log.events.append(SimEvent(t, valid[i].vehicle, names[s], "enter"))

    k = 0
    while finished < n:
        t = k * tick_seconds
        if max_time is not None and t > max_time:
            break
        # departures requested by now queue at their origin
        while next_release < n and release[next_release] <= t + _EPS:
            depart_q.setdefault(routes[next_release][0], deque()).append(next_release)
            next_release += 1
        for s in sorted(depart_q):
            q = depart_q[s]
            while q and occ[s] < cap[s]:
                i = q.popleft()
                enter(i, s, t)
                log.trips[valid[i].vehicle].first_enter = t
        # movement over [t, t + tick)
        _kernels.advance(state, pos, cur, occ, length, light_below, heavy_from,
                         speeds, float(tick_seconds), waiting, _EPS)
        t_next = (k + 1) * tick_seconds
        # transfers at the end of the tick, repeated until nothing moves
        changed = True
        while changed:
            changed = False
            for s in range(len(names)):
                q = on_street[s]
                while q and state[q[0]] == QUEUED:
                    i = q[0]
                    route = routes[i]
                    if leg[i] == len(route) - 1:
                        q.popleft()
                        occ[s] -= 1
                        state[i] = FINISHED
                        finished += 1
                        log.events.append(SimEvent(t_next, valid[i].vehicle, names[s], "exit"))
                        log.trips[valid[i].vehicle].network_exit = t_next
                        changed = True
                        continue
                    nxt = route[leg[i] + 1]
                    if occ[nxt] >= cap[nxt]:
                        break
                    q.popleft()
                    occ[s] -= 1
                    log.events.append(SimEvent(t_next, valid[i].vehicle, names[s], "exit"))
                    leg[i] += 1
                    enter(i, nxt, t_next)
                    changed = True
        k += 1
        if not (state == MOVING).any() and next_release >= n and finished < n:
            # nobody is driving and no request is due: check for gridlock
            if not _can_progress(on_street, state, routes, leg, occ, cap, depart_q):
                log.deadlocked = True
                break
    log.end_time = k * tick_seconds
    for i in range(n):
        log.trips[valid[i].vehicle].waiting = float(waiting[i])
    return log


def _can_progress(on_street, state, routes, leg, occ, cap, depart_q) -> bool:
    if any(q and occ[s] < cap[s] for s, q in depart_q.items()):
        return True
    for q in on_street:
        if q and state[q[0]] == QUEUED:
            i = q[0]
            if leg[i] == len(routes[i]) - 1 or occ[routes[i][leg[i] + 1]] < cap[routes[i][leg[i] + 1]]:
                return True
    return False


def metrics(log: EventLog) -> MetricsReport:
    """Table-style aggregates over all finished trips.

    Speed is the fleet space-mean speed: total distance over total trip time.
    """
    unfinished = sorted(v for v, tr in log.trips.items() if not tr.finished)
    if unfinished:
        raise SimulationError(f"unfinished vehicles: {', '.join(unfinished)}")
    trips = list(log.trips.values())
    if not trips:
        return MetricsReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    durations = [tr.network_exit - tr.request_time for tr in trips]
    lengths = [tr.route_length for tr in trips]
    total_time = sum(durations)
    return MetricsReport(
        total_duration=max(tr.network_exit for tr in trips),
        avg_route_length=sum(lengths) / len(trips),
        avg_speed=sum(lengths) / total_time if total_time > 0 else 0.0,
        avg_duration=total_time / len(trips),
        avg_waiting_time=sum(tr.waiting for tr in trips) / len(trips),
        avg_depart_delay=sum(tr.first_enter - tr.request_time for tr in trips) / len(trips),
    )
