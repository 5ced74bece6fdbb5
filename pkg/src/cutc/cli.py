"""Command-line entry point.

Exit codes: 0 success, 1 infeasible or timed out, 2 bad input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from cutc import textio
from cutc.compare import compare_baseline, demand_requests, trace_requests
from cutc.config import Config, ConfigError
from cutc.controller import ControllerAbort, run
from cutc.microsim import SimulationError, metrics, simulate
from cutc.network import NetworkError
from cutc.preprocess import UnreachableDestination, build_instance, contract_roundabouts
from cutc.scheduling import Infeasible, SolveTimeout
from cutc.solver import solve

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2

_DEFAULTS = Config()


class InputError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None


def _emit(text: str, path: str | None):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _parse(fn, path: str):
    try:
        return fn(_read(path))
    except (textio.ParseError, NetworkError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from None


def _network(path: str):
    return contract_roundabouts(_parse(textio.parse_network, path))


def _config(args, **extra) -> Config:
    fields = set(Config.field_names())
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    values.update(extra)
    try:
        return _DEFAULTS.replace(**values)
    except ConfigError as exc:
        raise InputError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args) -> int:
    net = _network(args.network)
    demand = _parse(textio.parse_demand, args.demand)
    cfg = _config(args)
    arrivals = [d for d in demand if d.controlled]
    committed = [d for d in demand if not d.controlled]
    inst = build_instance(net, arrivals, committed, k=cfg.k_routes,
                          similarity_threshold=cfg.similarity_threshold, limit=cfg.path_limit,
                          per_cluster=cfg.per_cluster, cost=cfg.cost,
                          horizon_cap=cfg.horizon_cap, protect_simulated=args.protect)
    _emit(textio.write_instance(inst), args.out)
    return EXIT_OK


def cmd_schedule(args) -> int:
    inst = _parse(textio.parse_instance, args.instance)
    sched = solve(inst, budget=args.budget_secs, workers=args.workers, seed=args.seed,
                  node_limit=args.node_limit)
    _emit(textio.write_schedule(sched), args.out)
    logging.info("status %s objective %s nodes %d wall %.3fs", sched.status, sched.objective,
                 sched.stats["nodes"], sched.stats["wall"])
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = _network(args.network)
    if args.trace:
        requests = trace_requests(_parse(textio.parse_trace, args.trace))
    else:
        requests = demand_requests(net, _parse(textio.parse_demand, args.demand))
    _config(args, tick_seconds=args.tick_secs, step_seconds=net.step_seconds)
    log = simulate(requests, net, args.tick_secs, args.max_time)
    if args.events:
        _emit(textio.write_event_log(log), args.events)
    if log.deadlocked:
        stuck = sorted(v for v, tr in log.trips.items() if not tr.finished)
        print(f"gridlock at t={log.end_time:g}s: {' '.join(stuck)}", file=sys.stderr)
        return EXIT_FAIL
    _emit(textio.write_metrics(metrics(log)), args.out)
    return EXIT_OK


def _run_config(args, net) -> Config:
    return _config(args, step_seconds=net.step_seconds)


def cmd_run(args) -> int:
    net = _network(args.network)
    demand = _parse(textio.parse_demand, args.demand)
    trace = run(demand, net, _run_config(args, net))
    _emit(textio.write_trace(trace), args.out)
    if args.stats:
        _emit(textio.write_epoch_stats(trace), args.stats)
    return EXIT_OK


def cmd_compare(args) -> int:
    net = _network(args.network)
    demand = _parse(textio.parse_demand, args.demand)
    cfg = _run_config(args, net).replace(tick_seconds=args.tick_secs)
    baseline, optimized, trace = compare_baseline(net, demand, cfg)
    _emit(textio.format_comparison(baseline, optimized, ("Shortest path", "Controller")),
          args.out)
    if args.trace_out:
        _emit(textio.write_trace(trace), args.trace_out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _solver_flags(p, budget_default):
    p.add_argument("--budget-secs", dest="budget_secs", type=float, default=budget_default,
                   help="wall-clock budget per solve in seconds (default %(default)s)")
    p.add_argument("--workers", type=int, default=_DEFAULTS.workers,
                   help="search workers; 1 is fully deterministic (default %(default)s)")
    p.add_argument("--seed", type=int, default=_DEFAULTS.seed,
                   help="seed for the randomized workers (default %(default)s)")
    p.add_argument("--node-limit", dest="node_limit", type=int, default=_DEFAULTS.node_limit,
                   help="max search nodes per worker and solve; keeps runs reproducible "
                        "where a wall-clock budget would not (default %(default)s)")


def _route_flags(p):
    p.add_argument("--k-routes", dest="k_routes", type=int, default=_DEFAULTS.k_routes,
                   help="candidate routes per vehicle (default %(default)s)")
    p.add_argument("--similarity", dest="similarity_threshold", type=float,
                   default=_DEFAULTS.similarity_threshold,
                   help="Jaccard similarity at which two paths share a cluster "
                        "(default %(default)s)")
    p.add_argument("--per-cluster", dest="per_cluster", type=int,
                   default=_DEFAULTS.per_cluster,
                   help="shortest paths kept from each cluster (default %(default)s)")
    p.add_argument("--path-limit", dest="path_limit", type=int, default=_DEFAULTS.path_limit,
                   help="acyclic paths enumerated per origin/destination (default %(default)s)")
    p.add_argument("--cost", choices=("length", "time"), default=_DEFAULTS.cost,
                   help="route cost: total metres or light-tier steps (default %(default)s)")


def _controller_flags(p):
    p.add_argument("--network", required=True, help="network file")
    p.add_argument("--demand", required=True, help="demand file (controlled vehicles)")
    p.add_argument("--epoch-steps", dest="epoch_steps", type=int,
                   default=_DEFAULTS.epoch_steps,
                   help="steps between decision epochs (default %(default)s)")
    p.add_argument("--max-defer", dest="max_defer", type=int, default=_DEFAULTS.max_defer,
                   help="abort when one vehicle is deferred more often (default %(default)s)")
    _solver_flags(p, _DEFAULTS.budget_secs)
    _route_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cutc", description="Centralized urban traffic control: route and street-entry "
                                 "scheduling with a queue-based micro-simulator.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="log progress to stderr (repeat for more detail)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("preprocess", help="build a scheduling instance from network + demand",
                       description="Enumerate diverse candidate routes with enter windows for "
                                   "every controlled vehicle; simulated vehicles become fixed "
                                   "traffic. Writes an instance file.")
    p.add_argument("--network", required=True, help="network file")
    p.add_argument("--demand", required=True, help="demand file")
    p.add_argument("--protect", action="store_true",
                   help="also enforce capacity and travel time at simulated vehicles' enters")
    p.add_argument("-o", "--out", help="output file (default stdout)")
    _route_flags(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("schedule", help="solve an instance file",
                       description="Choose a route and enter/exit steps for every controlled "
                                   "vehicle, minimizing route cost, then the spread term.")
    p.add_argument("instance", help="instance file (as written by preprocess)")
    p.add_argument("-o", "--out", help="output file (default stdout)")
    _solver_flags(p, None)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("simulate", help="run the micro-simulator and report metrics",
                       description="Execute routes tick by tick. Input is a trace from `run` "
                                   "(vehicles released at their scheduled departure) or a "
                                   "demand file (given routes, else shortest by length).")
    p.add_argument("--network", required=True, help="network file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--trace", help="trace file written by `run`")
    src.add_argument("--demand", help="demand file; route= fields are followed when present")
    p.add_argument("--tick-secs", dest="tick_secs", type=float,
                   default=_DEFAULTS.tick_seconds,
                   help="simulation tick in seconds (default %(default)s)")
    p.add_argument("--max-time", dest="max_time", type=float, default=None,
                   help="stop after this many simulated seconds")
    p.add_argument("--events", help="also write the event log to this file ('-' for stdout)")
    p.add_argument("-o", "--out", help="metrics output file (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="rolling-horizon controller over a demand file",
                       description="Schedule arrivals epoch by epoch against everything "
                                   "committed before. Writes the trace; per-epoch solver "
                                   "statistics go to --stats.")
    _controller_flags(p)
    p.add_argument("-o", "--out", help="trace output file (default stdout)")
    p.add_argument("--stats", help="per-epoch statistics file (includes wall times)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare-baseline", help="controller vs shortest-path routing",
                       description="Simulate the demand under shortest-path routing released "
                                   "on request, then under the controller's plans; print both "
                                   "metric reports side by side.")
    _controller_flags(p)
    p.add_argument("--tick-secs", dest="tick_secs", type=float,
                   default=_DEFAULTS.tick_seconds,
                   help="simulation tick in seconds (default %(default)s)")
    p.add_argument("--trace-out", dest="trace_out", help="also write the controller trace")
    p.add_argument("-o", "--out", help="table output file (default stdout)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except UnreachableDestination as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SolveTimeout as exc:
        print(f"timeout: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (ControllerAbort, SimulationError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
