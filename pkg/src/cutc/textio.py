"""Plain-text file formats.

All formats are line oriented and whitespace delimited. The first token of a
line names the record type; ``#`` starts a comment; blank lines are ignored.
Every parser reports problems as :class:`ParseError` carrying the 1-based
line number.

Network::

    step_seconds 5
    street <id> <length_m> <capacity> [light_below=N] [heavy_from=N] [max_time=N]
    link <from> <to>
    roundabout <id> <capacity> <street> <street> ...
    ring <id> <capacity|-> <arc> <arc> ...        # raw, contracted by preprocess

Demand::

    vehicle <id> <class 1|0> <depart> <origin> <destination> [route=S,S,..] [schedule=IN:OUT,..]

Instance (a network section followed by an instance section)::

    [network]
    ...network records...
    [instance]
    horizon <steps>
    protect <0|1>
    controlled <id> <depart> <origin> <destination>
    route <route_id> <vehicle> <cost> <street>:<min>:<max> ...
    simulated <id> <depart> <origin> <destination>
    fixed <vehicle> <route_id> <street>:<enter>:<exit> ...

Schedule::

    status <proven|anytime-best>
    objective <primary|-> <secondary|->
    route <vehicle> <route_id> <street> ...
    enter <vehicle> <street> <step>
    exit <vehicle> <street> <step>

Trace (output of ``run``)::

    step_seconds <s>
    commit <vehicle> <depart> <requested> <route_id> <cost> <street>:<min>:<max> ...
    enter / exit lines as in a schedule
    epoch <n> <clock> <controlled> <simulated> <committed> <deferred> <primary> <secondary> <status>

Metrics::

    <field> <value>      one per MetricsReport field

Event log (output of ``simulate``; written only)::

    event <time_s> <vehicle> <street> <enter|exit>
    rejected <vehicle> <reason ...>
    end <time_s> <deadlocked 0|1>
"""

from __future__ import annotations

from cutc.controller import Commitment, EpochStats, Trace
from cutc.microsim import WAITING_TIME_NOTE, EventLog, MetricsReport
from cutc.network import Network, NetworkError, Ring, Roundabout, Street, default_thresholds
from cutc.preprocess import Demand
from cutc.scheduling import (ANYTIME, PROVEN, Objective, Route, Schedule, SchedulingInstance,
                             Timeline, VehicleState)


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


def _num(x) -> str:
    if isinstance(x, float) and x.is_integer():
        return str(int(x))
    return repr(x) if isinstance(x, float) else str(x)


def _lines(text: str):
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield n, line.split()


def _int(tok: str, n: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(n, f"{what}: expected an integer, got {tok!r}") from None


def _float(tok: str, n: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(n, f"{what}: expected a number, got {tok!r}") from None


def _kv(tokens, n):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(n, f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _arity(tokens, n, at_least, usage):
    if len(tokens) < at_least:
        raise ParseError(n, f"expected '{usage}'")


# ---------------------------------------------------------------------------
# network


def _network_records(lines):
    step = 5.0
    raw_streets = []
    links = []
    roundabouts = []
    rings = []
    for n, tok in lines:
        kind = tok[0]
        if kind == "step_seconds":
            _arity(tok, n, 2, "step_seconds <s>")
            step = _float(tok[1], n, "step_seconds")
            if step <= 0:
                raise ParseError(n, "step_seconds must be > 0")
        elif kind == "street":
            _arity(tok, n, 4, "street <id> <length_m> <capacity> [key=value ...]")
            opts = _kv(tok[4:], n)
            unknown = set(opts) - {"light_below", "heavy_from", "max_time"}
            if unknown:
                raise ParseError(n, f"street {tok[1]}: unknown option(s) {sorted(unknown)}")
            raw_streets.append((n, tok[1], _float(tok[2], n, "length"),
                                _int(tok[3], n, "capacity"),
                                {k: _int(v, n, k) for k, v in opts.items()}))
        elif kind == "link":
            _arity(tok, n, 3, "link <from> <to>")
            links.append((n, tok[1], tok[2]))
        elif kind == "roundabout":
            _arity(tok, n, 4, "roundabout <id> <capacity> <street> ...")
            roundabouts.append((n, tok[1], _int(tok[2], n, "capacity"), tok[3:]))
        elif kind == "ring":
            _arity(tok, n, 4, "ring <id> <capacity|-> <arc> ...")
            cap = None if tok[2] == "-" else _int(tok[2], n, "capacity")
            rings.append((n, tok[1], cap, tok[3:]))
        else:
            raise ParseError(n, f"unknown network record {kind!r}")

    streets = {}
    for n, sid, length, cap, opts in raw_streets:
        if sid in streets:
            raise ParseError(n, f"duplicate street {sid}")
        try:
            streets[sid] = Street.build(sid, length, cap, step, opts.get("light_below"),
                                        opts.get("heavy_from"), opts.get("max_time"))
        except NetworkError as exc:
            raise ParseError(n, str(exc)) from None
    link_set = set()
    for n, a, b in links:
        for s in (a, b):
            if s not in streets:
                raise ParseError(n, f"link {a} -> {b}: unknown street {s}")
        if a == b:
            raise ParseError(n, f"link {a} -> {b}: self-link")
        link_set.add((a, b))
    owner = {}
    ras, rgs = {}, {}
    for n, rid, cap, members in roundabouts + rings:
        if rid in ras or rid in rgs:
            raise ParseError(n, f"duplicate roundabout {rid}")
        for s in members:
            if s not in streets:
                raise ParseError(n, f"roundabout {rid}: unknown street {s}")
            if s in owner:
                raise ParseError(n, f"street {s} already in roundabout {owner[s]}")
            owner[s] = rid
        if cap is not None and cap < 1:
            raise ParseError(n, f"roundabout {rid}: capacity must be >= 1")
        if (n, rid, cap, members) in roundabouts:
            ras[rid] = Roundabout(rid, cap, frozenset(members))
        else:
            rgs[rid] = Ring(rid, cap, tuple(members))
    return Network(streets, frozenset(link_set), ras, step, rgs)


def parse_network(text: str) -> Network:
    return _network_records(_lines(text))


def write_network(net: Network) -> str:
    out = ["# cutc network v1", f"step_seconds {_num(net.step_seconds)}"]
    for sid in sorted(net.streets):
        st = net.streets[sid]
        default = Street.build(sid, st.length, st.capacity, net.step_seconds)
        a, b = default_thresholds(st.capacity)
        opts = []
        if st.light_below != a:
            opts.append(f"light_below={st.light_below}")
        if st.heavy_from != b:
            opts.append(f"heavy_from={st.heavy_from}")
        if st.max_travel_time != default.max_travel_time:
            opts.append(f"max_time={st.max_travel_time}")
        out.append(" ".join(["street", sid, _num(st.length), str(st.capacity), *opts]))
    for a, b in sorted(net.links):
        out.append(f"link {a} {b}")
    for rid in sorted(net.roundabouts):
        r = net.roundabouts[rid]
        out.append(" ".join(["roundabout", rid, str(r.capacity), *sorted(r.member_streets)]))
    for rid in sorted(net.rings):
        r = net.rings[rid]
        cap = "-" if r.capacity is None else str(r.capacity)
        out.append(" ".join(["ring", rid, cap, *r.arcs]))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# demand


def _parse_schedule_field(val: str, n: int):
    pairs = []
    for item in val.split(","):
        a, _, b = item.partition(":")
        pairs.append((_int(a, n, "schedule enter"), _int(b, n, "schedule exit")))
    return tuple(pairs)


def parse_demand(text: str) -> list[Demand]:
    out = []
    seen = set()
    for n, tok in _lines(text):
        if tok[0] != "vehicle":
            raise ParseError(n, f"unknown demand record {tok[0]!r}")
        _arity(tok, n, 6, "vehicle <id> <class> <depart> <origin> <destination> [...]")
        vid = tok[1]
        if vid in seen:
            raise ParseError(n, f"duplicate vehicle {vid}")
        seen.add(vid)
        cls = tok[2]
        if cls not in ("0", "1"):
            raise ParseError(n, f"vehicle {vid}: class must be 0 or 1, got {cls!r}")
        depart = _int(tok[3], n, "depart")
        if depart < 0:
            raise ParseError(n, f"vehicle {vid}: depart must be >= 0")
        opts = _kv(tok[6:], n)
        route = tuple(opts["route"].split(",")) if "route" in opts else None
        sched = _parse_schedule_field(opts["schedule"], n) if "schedule" in opts else None
        if cls == "0":
            if route is None or sched is None:
                raise ParseError(n, f"simulated vehicle {vid} needs route= and schedule=")
            if len(route) != len(sched):
                raise ParseError(n, f"vehicle {vid}: route and schedule lengths differ")
        out.append(Demand(vid, cls == "1", depart, tok[4], tok[5], route, sched))
    return out


def write_demand(demand) -> str:
    out = ["# cutc demand v1"]
    for d in demand:
        line = ["vehicle", d.id, "1" if d.controlled else "0", str(d.depart), d.origin,
                d.destination]
        if d.route is not None:
            line.append("route=" + ",".join(d.route))
        if d.schedule is not None:
            line.append("schedule=" + ",".join(f"{a}:{b}" for a, b in d.schedule))
        out.append(" ".join(line))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# instance


def _triples(tokens, n):
    out = []
    for tok in tokens:
        parts = tok.rsplit(":", 2)
        if len(parts) != 3:
            raise ParseError(n, f"expected street:a:b, got {tok!r}")
        out.append((parts[0], _int(parts[1], n, "step"), _int(parts[2], n, "step")))
    return out


def write_instance(inst: SchedulingInstance) -> str:
    out = ["# cutc instance v1", "[network]"]
    out += write_network(inst.network).splitlines()[1:]
    out += ["[instance]", f"horizon {inst.horizon}",
            f"protect {1 if inst.protect_simulated else 0}"]
    for v in inst.controlled:
        out.append(f"controlled {v.id} {v.depart} {v.origin} {v.destination}")
        for r in v.routes:
            wins = " ".join(f"{s}:{a}:{b}" for s, (a, b) in zip(r.streets, r.windows))
            out.append(f"route {r.id} {v.id} {r.cost} {wins}")
    for v in inst.simulated:
        out.append(f"simulated {v.id} {v.depart} {v.origin} {v.destination}")
        tl = v.fixed
        evs = " ".join(f"{s}:{a}:{b}" for s, a, b in tl.events())
        out.append(f"fixed {v.id} {tl.route} {evs}")
    return "\n".join(out) + "\n"


def parse_instance(text: str) -> SchedulingInstance:
    section = None
    net_lines, inst_lines = [], []
    for n, tok in _lines(text):
        if tok[0] in ("[network]", "[instance]"):
            section = tok[0]
            continue
        if section == "[network]":
            net_lines.append((n, tok))
        elif section == "[instance]":
            inst_lines.append((n, tok))
        else:
            raise ParseError(n, "record outside a [network] or [instance] section")
    network = _network_records(net_lines)
    horizon = None
    protect = False
    controlled: dict[str, dict] = {}
    simulated: dict[str, dict] = {}
    order = []
    for n, tok in inst_lines:
        kind = tok[0]
        if kind == "horizon":
            horizon = _int(tok[1], n, "horizon")
        elif kind == "protect":
            protect = tok[1] == "1"
        elif kind in ("controlled", "simulated"):
            _arity(tok, n, 5, f"{kind} <id> <depart> <origin> <destination>")
            rec = {"n": n, "depart": _int(tok[2], n, "depart"), "origin": tok[3],
                   "destination": tok[4], "routes": [], "fixed": None}
            (controlled if kind == "controlled" else simulated)[tok[1]] = rec
            order.append((kind, tok[1]))
        elif kind == "route":
            _arity(tok, n, 5, "route <route_id> <vehicle> <cost> <street>:<min>:<max> ...")
            if tok[2] not in controlled:
                raise ParseError(n, f"route {tok[1]} for unknown controlled vehicle {tok[2]}")
            trip = _triples(tok[4:], n)
            try:
                controlled[tok[2]]["routes"].append(Route(
                    tok[1], tok[2], tuple(s for s, _, _ in trip),
                    tuple((a, b) for _, a, b in trip), _int(tok[3], n, "cost")))
            except ValueError as exc:
                raise ParseError(n, str(exc)) from None
        elif kind == "fixed":
            _arity(tok, n, 4, "fixed <vehicle> <route_id> <street>:<enter>:<exit> ...")
            if tok[1] not in simulated:
                raise ParseError(n, f"fixed plan for unknown simulated vehicle {tok[1]}")
            trip = _triples(tok[3:], n)
            simulated[tok[1]]["fixed"] = Timeline(tok[1], tok[2], tuple(s for s, _, _ in trip),
                                                  tuple(a for _, a, _ in trip),
                                                  tuple(b for _, _, b in trip))
        else:
            raise ParseError(n, f"unknown instance record {kind!r}")
    if horizon is None:
        raise ParseError(1, "instance lacks a horizon record")
    ctl, sim = [], []
    for kind, vid in order:
        rec = (controlled if kind == "controlled" else simulated)[vid]
        try:
            v = VehicleState(vid, kind == "controlled", rec["origin"], rec["destination"],
                             rec["depart"], tuple(rec["routes"]), rec["fixed"])
        except ValueError as exc:
            raise ParseError(rec["n"], str(exc)) from None
        (ctl if kind == "controlled" else sim).append(v)
    try:
        return SchedulingInstance(network, horizon, ctl, sim, protect)
    except ValueError as exc:
        raise ParseError(1, str(exc)) from None


# ---------------------------------------------------------------------------
# schedule / trace


def _event_lines(timelines):
    out = []
    for vid in sorted(timelines):
        tl = timelines[vid]
        for s, a, b in tl.events():
            out.append(f"enter {vid} {s} {a}")
            out.append(f"exit {vid} {s} {b}")
    return out


def _collect_events(records, routes):
    """Rebuild timelines from route + enter/exit records."""
    enters: dict[str, dict[str, int]] = {v: {} for v in routes}
    exits: dict[str, dict[str, int]] = {v: {} for v in routes}
    for n, kind, vid, street, step in records:
        if vid not in routes:
            raise ParseError(n, f"{kind} for vehicle {vid} without a route record")
        if street not in routes[vid][1]:
            raise ParseError(n, f"{kind} on street {street} not on the route of {vid}")
        table = enters if kind == "enter" else exits
        if street in table[vid]:
            raise ParseError(n, f"duplicate {kind} of {vid} on {street}")
        table[vid][street] = step
    out = {}
    for vid, (rid, streets, n) in routes.items():
        missing = [s for s in streets if s not in enters[vid] or s not in exits[vid]]
        if missing:
            raise ParseError(n, f"vehicle {vid}: missing events on {', '.join(missing)}")
        out[vid] = Timeline(vid, rid, streets, tuple(enters[vid][s] for s in streets),
                            tuple(exits[vid][s] for s in streets))
    return out


def write_schedule(sched: Schedule) -> str:
    out = ["# cutc schedule v1", f"status {sched.status}"]
    if sched.objective is None:
        out.append("objective - -")
    else:
        out.append(f"objective {sched.objective.primary} {sched.objective.secondary}")
    for vid in sorted(sched.timelines):
        tl = sched.timelines[vid]
        out.append(" ".join(["route", vid, tl.route, *tl.streets]))
    out += _event_lines(sched.timelines)
    return "\n".join(out) + "\n"


def parse_schedule(text: str) -> Schedule:
    status = PROVEN
    objective = None
    routes = {}
    events = []
    for n, tok in _lines(text):
        kind = tok[0]
        if kind == "status":
            if tok[1] not in (PROVEN, ANYTIME):
                raise ParseError(n, f"unknown status {tok[1]!r}")
            status = tok[1]
        elif kind == "objective":
            _arity(tok, n, 3, "objective <primary> <secondary>")
            if tok[1] != "-":
                objective = Objective(_int(tok[1], n, "primary"), _int(tok[2], n, "secondary"))
        elif kind == "route":
            _arity(tok, n, 4, "route <vehicle> <route_id> <street> ...")
            routes[tok[1]] = (tok[2], tuple(tok[3:]), n)
        elif kind in ("enter", "exit"):
            _arity(tok, n, 4, f"{kind} <vehicle> <street> <step>")
            events.append((n, kind, tok[1], tok[2], _int(tok[3], n, "step")))
        else:
            raise ParseError(n, f"unknown schedule record {kind!r}")
    return Schedule(_collect_events(events, routes), objective, status)


def write_trace(trace: Trace) -> str:
    out = ["# cutc trace v1", f"step_seconds {_num(trace.step_seconds)}"]
    for vid in sorted(trace.commitments):
        c = trace.commitments[vid]
        r = c.route
        wins = " ".join(f"{s}:{a}:{b}" for s, (a, b) in zip(r.streets, r.windows))
        out.append(f"commit {vid} {c.depart} {c.requested} {r.id} {r.cost} {wins}")
    out += _event_lines({v: c.timeline for v, c in trace.commitments.items()})
    for e in trace.epochs:
        out.append(f"epoch {e.epoch} {e.clock} {e.controlled} {e.simulated} {e.committed} "
                   f"{e.deferred} {e.primary} {e.secondary} {e.status}")
    return "\n".join(out) + "\n"


def write_epoch_stats(trace: Trace) -> str:
    out = ["# epoch clock controlled simulated committed deferred wall_s primary secondary status"]
    for e in trace.epochs:
        out.append(f"{e.epoch} {e.clock} {e.controlled} {e.simulated} {e.committed} "
                   f"{e.deferred} {e.wall:.4f} {e.primary} {e.secondary} {e.status}")
    return "\n".join(out) + "\n"


def parse_trace(text: str) -> Trace:
    step = 5.0
    commits = {}
    events = []
    epochs = []
    for n, tok in _lines(text):
        kind = tok[0]
        if kind == "step_seconds":
            step = _float(tok[1], n, "step_seconds")
        elif kind == "commit":
            _arity(tok, n, 7, "commit <vehicle> <depart> <requested> <route_id> <cost> ...")
            trip = _triples(tok[6:], n)
            try:
                route = Route(tok[4], tok[1], tuple(s for s, _, _ in trip),
                              tuple((a, b) for _, a, b in trip), _int(tok[5], n, "cost"))
            except ValueError as exc:
                raise ParseError(n, str(exc)) from None
            commits[tok[1]] = (route, _int(tok[2], n, "depart"), _int(tok[3], n, "requested"), n)
        elif kind in ("enter", "exit"):
            _arity(tok, n, 4, f"{kind} <vehicle> <street> <step>")
            events.append((n, kind, tok[1], tok[2], _int(tok[3], n, "step")))
        elif kind == "epoch":
            _arity(tok, n, 10, "epoch <n> <clock> <controlled> <simulated> <committed> "
                               "<deferred> <primary> <secondary> <status>")
            vals = [_int(t, n, "epoch field") for t in tok[1:9]]
            epochs.append(EpochStats(*vals[:6], 0.0, vals[6], vals[7], tok[9]))
        else:
            raise ParseError(n, f"unknown trace record {kind!r}")
    routes = {v: (r.id, r.streets, n) for v, (r, _, _, n) in commits.items()}
    tls = _collect_events(events, routes)
    commitments = {v: Commitment(tls[v], r, dep, req) for v, (r, dep, req, _) in commits.items()}
    return Trace(dict(sorted(commitments.items())), epochs, step)


# ---------------------------------------------------------------------------
# metrics

_METRIC_FIELDS = [f for _, f in MetricsReport.ROWS]


def write_metrics(m: MetricsReport) -> str:
    out = ["# cutc metrics v1", f"# {WAITING_TIME_NOTE}"]
    out += [f"{f} {getattr(m, f)!r}" for f in _METRIC_FIELDS]
    return "\n".join(out) + "\n"


def parse_metrics(text: str) -> MetricsReport:
    vals = {}
    for n, tok in _lines(text):
        if tok[0] not in _METRIC_FIELDS:
            raise ParseError(n, f"unknown metric {tok[0]!r}")
        vals[tok[0]] = _float(tok[1], n, tok[0])
    missing = [f for f in _METRIC_FIELDS if f not in vals]
    if missing:
        raise ParseError(1, f"missing metric(s): {', '.join(missing)}")
    return MetricsReport(**vals)


def write_event_log(log: EventLog) -> str:
    out = ["# cutc events v1"]
    out += [f"event {_num(float(e.time))} {e.vehicle} {e.street} {e.kind}" for e in log.events]
    out += [f"rejected {v} {why}" for v, why in sorted(log.rejected.items())]
    out.append(f"end {_num(float(log.end_time))} {int(log.deadlocked)}")
    return "\n".join(out) + "\n"


def format_comparison(baseline: MetricsReport, optimized: MetricsReport,
                      labels=("Baseline", "Optimized")) -> str:
    """Side-by-side table, one metric per row."""
    w = max(len(r) for r, _ in MetricsReport.ROWS)
    lines = [f"{'':<{w}}  {labels[0]:>12}  {labels[1]:>12}"]
    for row, f in MetricsReport.ROWS:
        lines.append(f"{row:<{w}}  {getattr(baseline, f):>12,.2f}  {getattr(optimized, f):>12,.2f}")
    lines.append(f"({WAITING_TIME_NOTE})")
    return "\n".join(lines) + "\n"
