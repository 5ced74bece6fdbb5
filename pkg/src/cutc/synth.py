"""Synthetic networks, demand and small scheduling instances."""

from __future__ import annotations

import random

from cutc.network import Network, OccupancyLedger, Roundabout, Street
from cutc.preprocess import Demand, compute_windows, enumerate_acyclic_paths, route_cost
from cutc.scheduling import Route, SchedulingInstance, Timeline, VehicleState


def grid_network(rows: int = 5, cols: int = 5, spacing=(150.0, 300.0), capacity=(4, 10),
                 diagonals: int = 10, step_seconds: float = 5, seed: int = 0,
                 jam_spacing: float | None = None) -> Network:
    """Junction grid with two-way roads; every road is a pair of streets.

    Streets are named ``<from>-<to>`` with junctions ``rXcY``. A street links
    to every street leaving its end junction except the U-turn. Capacities
    are drawn from ``capacity`` unless ``jam_spacing`` (metres per queued
    vehicle) is given, in which case capacity = length / jam_spacing.
    """
    rng = random.Random(seed)

    def j(r, c):
        return f"r{r}c{c}"

    roads = set()
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                roads.add((j(r, c), j(r, c + 1)))
            if r + 1 < rows:
                roads.add((j(r, c), j(r + 1, c)))
    cells = [(r, c) for r in range(rows - 1) for c in range(cols - 1)]
    for r, c in rng.sample(cells, min(diagonals, len(cells))):
        roads.add((j(r, c), j(r + 1, c + 1)))
    streets = {}
    for a, b in sorted(roads):
        length = round(rng.uniform(*spacing))
        cap = rng.randint(*capacity)
        if jam_spacing is not None:
            cap = max(1, int(length // jam_spacing))
        for u, v in ((a, b), (b, a)):
            sid = f"{u}-{v}"
            streets[sid] = Street.build(sid, float(length), cap, step_seconds)
    by_start: dict[str, list[str]] = {}
    for sid in streets:
        by_start.setdefault(sid.split("-")[0], []).append(sid)
    links = set()
    for sid in streets:
        u, v = sid.split("-")
        for nxt in by_start.get(v, []):
            if nxt.split("-")[1] != u:
                links.add((sid, nxt))
    return Network(streets, frozenset(links), {}, step_seconds)


def boundary_streets(network: Network, rows: int = 5, cols: int = 5):
    """(entries, exits): streets leaving / entering a boundary junction."""
    def on_edge(junction):
        r, c = junction[1:].split("c")
        r, c = int(r), int(c)
        return r in (0, rows - 1) or c in (0, cols - 1)

    entries = sorted(s for s in network.streets if on_edge(s.split("-")[0]))
    exits = sorted(s for s in network.streets if on_edge(s.split("-")[1]))
    return entries, exits


def random_demand(network: Network, n: int, rate: float, seed: int = 0,
                  origins=None, destinations=None, min_hops: int = 3) -> list[Demand]:
    """``n`` controlled requests with Poisson arrivals at ``rate`` per step."""
    rng = random.Random(seed)
    origins = sorted(origins or network.streets)
    destinations = sorted(destinations or network.streets)
    out = []
    t = 0.0
    while len(out) < n:
        o, d = rng.choice(origins), rng.choice(destinations)
        if o == d:
            continue
        paths = enumerate_acyclic_paths(network, o, d, 1)
        if not paths or len(paths[0]) < min_hops:
            continue
        out.append(Demand(f"v{len(out):04d}", True, int(t), o, d))
        t += rng.expovariate(rate)
    return out


def background_traffic(network: Network, n: int, span: int, seed: int = 0,
                       prefix: str = "s") -> list[VehicleState]:
    """``n`` fixed heavy-tier vehicles spread over ``[0, span)`` whose joint
    occupancy never exceeds any street capacity."""
    rng = random.Random(seed)
    names = sorted(network.streets)
    ledger = OccupancyLedger.for_network(network)
    out = []
    tries = 0
    while len(out) < n and tries < 50 * n:
        tries += 1
        o, d = rng.choice(names), rng.choice(names)
        if o == d:
            continue
        paths = enumerate_acyclic_paths(network, o, d, 3)
        if not paths:
            continue
        path = rng.choice(paths)
        t = rng.randrange(span)
        enters, exits = [], []
        for s in path:
            enters.append(t)
            t += network.streets[s].heavy_time
            exits.append(t)
        if any(ledger.occupancy_many(s, range(a, b)).max(initial=0) + 1 > network.streets[s].capacity
               for s, a, b in zip(path, enters, exits)):
            continue
        vid = f"{prefix}{len(out):04d}"
        tl = Timeline(vid, f"{vid}/fixed", tuple(path), tuple(enters), tuple(exits))
        ledger = ledger.with_events(tl.events())
        out.append(VehicleState(vid, False, path[0], path[-1], enters[0], fixed=tl))
    return out


def small_instance(seed: int, max_controlled: int = 3, max_streets: int = 8,
                   max_horizon: int = 15) -> SchedulingInstance:
    """Random instance within the brute-force guard (vehicles, streets, horizon)."""
    rng = random.Random(seed)
    while True:
        inst = _try_small(rng, max_controlled, max_streets, max_horizon)
        if inst is not None:
            return inst


def _try_small(rng, max_controlled, max_streets, max_horizon):
    ns = rng.randint(3, max_streets)
    names = [chr(ord("A") + i) for i in range(ns)]
    streets = {}
    for s in names:
        st = Street.build(s, float(rng.choice([20, 30, 45, 60, 90])), rng.randint(1, 4))
        mt = rng.randint(st.heavy_time, st.heavy_time + 2)
        streets[s] = Street.build(s, st.length, st.capacity, max_travel_time=mt)
    links = set()
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            if rng.random() < 0.45:
                links.add((a, b))
        if i + 1 < ns and rng.random() < 0.6:
            links.add((a, names[i + 1]))
    for a in names:
        for b in names:
            if a != b and (b, a) not in links and rng.random() < 0.05:
                links.add((a, b))
    roundabouts = {}
    if ns >= 4 and rng.random() < 0.35:
        members = rng.sample(names, 2)
        roundabouts["R"] = Roundabout("R", rng.randint(1, 3), frozenset(members))
    net = Network(streets, frozenset(links), roundabouts)

    pairs = [(a, b) for a in names for b in names if a != b]
    rng.shuffle(pairs)
    routable = []
    for a, b in pairs:
        paths = [p for p in enumerate_acyclic_paths(net, a, b, 6) if len(p) <= 3]
        if paths:
            routable.append((a, b, paths))
        if len(routable) >= 6:
            break
    if not routable:
        return None

    simulated = []
    for i in range(rng.randint(0, 2)):
        a, b, paths = rng.choice(routable)
        path = rng.choice(paths)
        t = rng.randint(0, 4)
        enters, exits = [], []
        for s in path:
            enters.append(t)
            t += rng.randint(net.streets[s].light_time, net.streets[s].heavy_time)
            exits.append(t)
        vid = f"s{i}"
        simulated.append(VehicleState(vid, False, a, b, enters[0],
                                      fixed=Timeline(vid, f"{vid}/fixed", tuple(path),
                                                     tuple(enters), tuple(exits))))
    ledger = OccupancyLedger.for_network(net, [e for v in simulated for e in v.fixed.events()])

    nc = rng.randint(1, max_controlled)
    controlled = []
    for i in range(nc):
        a, b, paths = rng.choice(routable)
        depart = rng.randint(0, 2)
        chosen = rng.sample(paths, min(len(paths), rng.randint(1, 3)))
        routes = []
        for j, p in enumerate(chosen):
            wins = compute_windows(net, p, ledger, depart, nc)
            wins = [(lo, min(hi, lo + rng.randint(1, 3))) for lo, hi in wins]
            wins[0] = (0, 0)
            cost = route_cost(net, p) if rng.random() < 0.7 else rng.randint(0, 3)
            routes.append(Route(f"v{i}/r{j}", f"v{i}", tuple(p), tuple(wins), cost))
        controlled.append(VehicleState(f"v{i}", True, a, b, depart, tuple(routes)))

    horizon = max([e for v in simulated for e in v.fixed.exits]
                  + [v.depart + r.windows[-1][1] + net.streets[r.streets[-1]].max_travel_time
                     for v in controlled for r in v.routes])
    horizon = min(horizon, max_horizon)
    if any(e > horizon for v in simulated for e in v.fixed.exits):
        return None
    return SchedulingInstance(net, horizon, controlled, simulated, rng.random() < 0.3)



def corridor_demand(network: Network, n: int = 100, rate: float = 3.0, seed: int = 0,
                    cols: int = 5) -> list[Demand]:
    """West-to-east rush: origins on the first column of eastbound streets,
    destinations on the last. With the default grid this saturates the
    middle columns within a few dozen steps."""
    west = sorted(s for s in network.streets
                  if s.split("-")[0].endswith("c0") and s.split("-")[1].endswith("c1"))
    east = sorted(s for s in network.streets
                  if s.split("-")[0].endswith(f"c{cols - 2}")
                  and s.split("-")[1].endswith(f"c{cols - 1}"))
    return random_demand(network, n, rate, seed, origins=west, destinations=east, min_hops=3)
