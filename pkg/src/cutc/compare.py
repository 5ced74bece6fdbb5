"""Turn plans into simulator requests, and the shortest-path baseline."""

from __future__ import annotations

from dataclasses import replace

from cutc.config import Config
from cutc.controller import Trace, run
from cutc.microsim import EventLog, MetricsReport, SimRequest, SimulationError, metrics, simulate
from cutc.network import Network
from cutc.preprocess import Demand, UnreachableDestination, enumerate_acyclic_paths


def shortest_route(network: Network, origin: str, destination: str) -> tuple[str, ...]:
    paths = enumerate_acyclic_paths(network, origin, destination, 1)
    if not paths:
        raise UnreachableDestination("?", origin, destination)
    return tuple(paths[0])


def trace_requests(trace: Trace) -> list[SimRequest]:
    """Committed routes; each vehicle is released at its scheduled departure."""
    dt = trace.step_seconds
    return [SimRequest(v, c.timeline.streets, c.requested * dt, c.depart * dt)
            for v, c in sorted(trace.commitments.items())]


def demand_requests(network: Network, demand: list[Demand]) -> list[SimRequest]:
    """Demand records as requests: the given route, else the shortest one by
    length (traffic ignored). Everybody leaves as soon as they ask."""
    dt = network.step_seconds
    out = []
    for d in sorted(demand, key=lambda d: (d.depart, d.id)):
        try:
            route = d.route or shortest_route(network, d.origin, d.destination)
        except UnreachableDestination:
            raise UnreachableDestination(d.id, d.origin, d.destination) from None
        out.append(SimRequest(d.id, tuple(route), d.depart * dt))
    return out


def _finished_metrics(log: EventLog, label: str) -> MetricsReport:
    if log.deadlocked:
        stuck = sorted(v for v, tr in log.trips.items() if not tr.finished)
        raise SimulationError(f"{label}: gridlock at t={log.end_time:g}s, "
                              f"{len(stuck)} vehicle(s) stuck")
    return metrics(log)


def compare_baseline(network: Network, demand: list[Demand], config: Config):
    """Simulate the demand twice: shortest paths released on request, and the
    controller's committed plans. Returns (baseline, optimized, trace)."""
    plain = [replace(d, route=None, schedule=None) for d in demand]
    base_log = simulate(demand_requests(network, plain), network, config.tick_seconds)
    trace = run(demand, network, config)
    opt_log = simulate(trace_requests(trace), network, config.tick_seconds)
    return (_finished_metrics(base_log, "baseline"), _finished_metrics(opt_log, "optimized"),
            trace)
