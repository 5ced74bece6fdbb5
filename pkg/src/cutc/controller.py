"""Rolling-horizon control loop.

Each epoch routes the vehicles that have asked to depart, treating every
vehicle committed in earlier epochs as fixed traffic.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from cutc.config import Config
from cutc.network import Network
from cutc.preprocess import Demand, RouteCache, UnreachableDestination, build_instance
from cutc.scheduling import (Infeasible, Route, Schedule, SchedulingInstance, SolveTimeout,
                             Timeline, VehicleState, check)
from cutc.solver import solve

log = logging.getLogger(__name__)


class ControllerAbort(RuntimeError):
    """A vehicle was deferred more often than allowed."""


@dataclass(frozen=True)
class Commitment:
    timeline: Timeline
    route: Route          # windows relative to ``depart``
    depart: int           # step the vehicle actually enters its origin
    requested: int        # step the vehicle asked to depart


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    clock: int
    controlled: int
    simulated: int
    committed: int
    deferred: int
    wall: float = field(compare=False)
    primary: int = 0
    secondary: int = 0
    status: str = "none"


@dataclass
class EpochState:
    clock: int = 0
    committed: dict[str, Commitment] = field(default_factory=dict)
    pending: list[Demand] = field(default_factory=list)
    deferrals: dict[str, int] = field(default_factory=dict)
    epoch: int = 0
    last: EpochStats | None = None


@dataclass
class Trace:
    """Full output of a controller run."""
    commitments: dict[str, Commitment]
    epochs: list[EpochStats]
    step_seconds: float

    def schedule(self) -> Schedule:
        return Schedule({v: c.timeline for v, c in sorted(self.commitments.items())})


def _as_simulated(vid: str, c: Commitment) -> VehicleState:
    tl = c.timeline
    return VehicleState(vid, False, tl.streets[0], tl.streets[-1], c.depart, fixed=tl)


def _commit(d: Demand, sched: Schedule, inst: SchedulingInstance, clock: int) -> Commitment:
    tl = sched.timelines[d.id]
    vehicle = next(v for v in inst.controlled if v.id == d.id)
    route = next(r for r in vehicle.routes if r.id == tl.route)
    return Commitment(tl, route, clock, d.depart)


def step_epoch(state: EpochState, network: Network, config: Config,
               cache: RouteCache | None = None) -> tuple[EpochState, Schedule | None]:
    """Schedule ``state.pending`` against the committed traffic, commit the
    result, and advance the clock by one epoch.

    Vehicles the scheduler cannot place are kept pending (their departure is
    deferred to the next epoch). If the joint solve runs out of budget without
    any schedule, vehicles are admitted one at a time in id order instead.
    Returns the new state and the epoch's schedule (None if nobody was placed).
    """
    cache = cache or RouteCache(network, config.k_routes, config.similarity_threshold,
                                config.path_limit, config.per_cluster)
    clock = state.clock
    committed = dict(state.committed)
    deferrals = dict(state.deferrals)
    live = [_as_simulated(v, c) for v, c in sorted(committed.items())
            if c.timeline.exits[-1] > clock]
    batch = sorted(state.pending, key=lambda d: d.id)
    deferred: list[Demand] = []
    placed: list[tuple[Demand, Schedule, SchedulingInstance]] = []
    status = "none"
    t0 = time.perf_counter()

    def instance_for(arrivals, fixed):
        try:
            return build_instance(network, arrivals, fixed, k=config.k_routes,
                                  similarity_threshold=config.similarity_threshold,
                                  limit=config.path_limit, per_cluster=config.per_cluster,
                                  cost=config.cost, horizon_cap=config.horizon_cap,
                                  cache=cache, protect_simulated=config.protect_commitments,
                                  depart_at=clock)
        except UnreachableDestination as exc:
            raise ControllerAbort(str(exc)) from exc

    def solve_batch(inst):
        return solve(inst, budget=config.budget_secs, workers=config.workers,
                     seed=config.seed, node_limit=config.node_limit)

    while batch:
        inst = instance_for(batch, live)
        try:
            sched = solve_batch(inst)
            placed = [(d, sched, inst) for d in batch]
            status = sched.status
            break
        except Infeasible as exc:
            drop = set(exc.vehicles)
            log.info("epoch %d: deferring %s", state.epoch, sorted(drop))
            deferred += [d for d in batch if d.id in drop]
            batch = [d for d in batch if d.id not in drop]
        except SolveTimeout:
            # no joint schedule found in budget: admit vehicles one at a time
            log.info("epoch %d: joint solve timed out, placing %d vehicle(s) one by one",
                     state.epoch, len(batch))
            fixed = list(live)
            for d in batch:
                inst = instance_for([d], fixed)
                try:
                    sched = solve_batch(inst)
                except (Infeasible, SolveTimeout):
                    deferred.append(d)
                    continue
                placed.append((d, sched, inst))
                fixed.append(_as_simulated(d.id, _commit(d, sched, inst, clock)))
            batch = [d for d, _, _ in placed]
            status = "sequential"
            break

    for d in deferred:
        deferrals[d.id] = deferrals.get(d.id, 0) + 1
        if deferrals[d.id] > config.max_defer:
            raise ControllerAbort(f"vehicle {d.id} deferred {deferrals[d.id]} times "
                                  f"(max {config.max_defer})")
    for d, sched, inst in placed:
        committed[d.id] = _commit(d, sched, inst, clock)
    primary = sum(committed[d.id].route.cost for d, _, _ in placed)
    secondary = placed[-1][1].objective.secondary if placed else 0

    stats = EpochStats(state.epoch, clock, len(placed), len(live), len(committed),
                       len(deferred), time.perf_counter() - t0, primary, secondary, status)
    new = EpochState(clock + config.epoch_steps, committed, deferred, deferrals,
                     state.epoch + 1, stats)
    merged = None
    if placed:
        merged = Schedule({v.id: v.fixed for v in live}
                          | {d.id: sched.timelines[d.id] for d, sched, _ in placed})
    return new, merged


def run(demand: list[Demand], network: Network, config: Config) -> Trace:
    """Iterate epochs until every demanded vehicle is committed."""
    for d in demand:
        if not d.controlled:
            raise ValueError(f"vehicle {d.id}: run() routes controlled demand only")
    queue = sorted(demand, key=lambda d: (d.depart, d.id))
    cache = RouteCache(network, config.k_routes, config.similarity_threshold,
                       config.path_limit, config.per_cluster)
    state = EpochState()
    epochs: list[EpochStats] = []
    i = 0
    while i < len(queue) or state.pending:
        if not state.pending and queue[i].depart > state.clock:
            # nothing to do until the next request
            gap = queue[i].depart - state.clock
            skip = -(-gap // config.epoch_steps) * config.epoch_steps
            state.clock += skip
        arrivals = []
        while i < len(queue) and queue[i].depart <= state.clock:
            arrivals.append(queue[i])
            i += 1
        state.pending = state.pending + arrivals
        state, _ = step_epoch(state, network, config, cache)
        epochs.append(state.last)
    return Trace(state.committed, epochs, network.step_seconds)


def global_instance(trace: Trace, network: Network) -> SchedulingInstance:
    """Every committed vehicle as a controlled single-route vehicle, for a
    whole-run re-check of the concatenated epochs."""
    vehicles = [VehicleState(v, True, c.route.streets[0], c.route.streets[-1], c.depart,
                             (c.route,))
                for v, c in sorted(trace.commitments.items())]
    horizon = max((c.timeline.exits[-1] for c in trace.commitments.values()), default=0)
    return SchedulingInstance(network, horizon, vehicles, [])


def check_trace(trace: Trace, network: Network):
    return check(trace.schedule(), global_instance(trace, network))
