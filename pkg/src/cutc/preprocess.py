"""Instance construction: candidate routes, roundabout contraction and
per-street enter windows."""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass

from cutc.network import (LIGHT_KMH, Network, NetworkError, OccupancyLedger, Ring,
                          Roundabout, Street, steps_for, travel_time)
from cutc.scheduling import Route, SchedulingInstance, Timeline, VehicleState

log = logging.getLogger(__name__)


class UnreachableDestination(ValueError):
    def __init__(self, vehicle: str, origin: str, destination: str):
        self.vehicle = vehicle
        super().__init__(f"vehicle {vehicle}: no path from {origin} to {destination}")


# ---------------------------------------------------------------------------
# path enumeration


def _distance_to(network: Network, target: str) -> dict[str, float]:
    """Shortest remaining length from the start of each street to the end of ``target``."""
    dist = {target: network.streets[target].length}
    heap = [(dist[target], target)]
    while heap:
        d, s = heapq.heappop(heap)
        if d > dist[s]:
            continue
        for p in network.predecessors(s):
            nd = d + network.streets[p].length
            if nd < dist.get(p, float("inf")):
                dist[p] = nd
                heapq.heappush(heap, (nd, p))
    return dist


def enumerate_acyclic_paths(network: Network, src: str, dst: str, limit: int = 200):
    """Simple street paths from ``src`` to ``dst`` in non-decreasing total length.

    Best-first search with an admissible remaining-length estimate, so the
    first ``limit`` complete paths popped are the ``limit`` shortest. Equal
    lengths are broken by the street-id sequence.
    """
    if src not in network.streets or dst not in network.streets:
        raise KeyError(f"unknown street {src if src not in network.streets else dst!r}")
    if limit < 1:
        raise ValueError("limit must be >= 1")
    h = _distance_to(network, dst)
    if src not in h:
        return []
    out = []
    heap = [(h[src], network.streets[src].length, (src,))]
    while heap and len(out) < limit:
        _, g, path = heapq.heappop(heap)
        last = path[-1]
        if last == dst:
            out.append(list(path))
            continue
        seen = set(path)
        for nxt in network.successors(last):
            if nxt in seen or nxt not in h:
                continue
            ng = g + network.streets[nxt].length
            heapq.heappush(heap, (ng - network.streets[nxt].length + h[nxt], ng, path + (nxt,)))
    return out


# ---------------------------------------------------------------------------
# diverse route selection


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    return len(a & b) / len(a | b)


def cluster_paths(paths, similarity_threshold: float = 0.5) -> list[list[int]]:
    """Single-linkage clusters (lists of path indices) under Jaccard similarity."""
    parent = list(range(len(paths)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    sets = [frozenset(p) for p in paths]
    for i in range(len(paths)):
        for j in range(i + 1, len(paths)):
            if jaccard(sets[i], sets[j]) >= similarity_threshold:
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(len(paths)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def select_diverse_routes(paths, k: int = 6, similarity_threshold: float = 0.5,
                          network: Network | None = None, per_cluster: int = 2):
    """Keep the ``per_cluster`` shortest paths of every similarity cluster, then
    the ``k`` shortest of those. Returns street sequences, shortest first."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not paths:
        return []

    def length(p):
        return network.route_length(p) if network is not None else len(p)

    order = sorted(range(len(paths)), key=lambda i: (length(paths[i]), tuple(paths[i])))
    rank = {i: r for r, i in enumerate(order)}
    keep = []
    for group in cluster_paths(paths, similarity_threshold):
        keep.extend(sorted(group, key=rank.__getitem__)[:per_cluster])
    keep.sort(key=rank.__getitem__)
    return [list(paths[i]) for i in keep[:k]]


# ---------------------------------------------------------------------------
# roundabout contraction


def _ring_cycle(network: Network, ring: Ring) -> list[str]:
    arcs = set(ring.arcs)
    nxt = {}
    for a in ring.arcs:
        inner = [b for b in network.successors(a) if b in arcs]
        if len(inner) != 1:
            raise NetworkError(f"ring {ring.id}: arc {a} has {len(inner)} successors in the ring")
        nxt[a] = inner[0]
    start = min(ring.arcs)
    cycle = [start]
    while nxt[cycle[-1]] != start:
        cycle.append(nxt[cycle[-1]])
        if len(cycle) > len(arcs):
            break
    if len(cycle) != len(arcs):
        raise NetworkError(f"ring {ring.id}: arcs do not form a single cycle")
    return cycle


def contract_roundabouts(network: Network) -> Network:
    """Replace every ring by one street per (entry arc, exit arc) pair.

    The contracted street covers the ring arcs from the entry arc to the exit
    arc inclusive; pairs that would loop the whole ring are dropped. All
    streets of one ring share a :class:`Roundabout` capacity (the ring's
    declared capacity, else the sum of its arc capacities).
    """
    if not network.rings:
        return network
    streets = dict(network.streets)
    links = set(network.links)
    roundabouts = dict(network.roundabouts)
    for ring in sorted(network.rings.values(), key=lambda r: r.id):
        cycle = _ring_cycle(network, ring)
        arcs = set(cycle)
        m = len(cycle)
        pos = {a: i for i, a in enumerate(cycle)}
        incoming = {a: [p for p in network.predecessors(a) if p not in arcs] for a in cycle}
        outgoing = {a: [q for q in network.successors(a) if q not in arcs] for a in cycle}
        cap = ring.capacity if ring.capacity is not None else sum(
            network.streets[a].capacity for a in cycle)
        members = []
        for ea in cycle:
            if not incoming[ea]:
                continue
            for xa in cycle:
                if not outgoing[xa]:
                    continue
                span = (pos[xa] - pos[ea]) % m + 1
                if span >= m:
                    continue
                covered = [cycle[(pos[ea] + j) % m] for j in range(span)]
                sid = f"{ring.id}:{ea}>{xa}"
                length = sum(network.streets[a].length for a in covered)
                scap = min(cap, sum(network.streets[a].capacity for a in covered))
                streets[sid] = Street.build(sid, length, scap, network.step_seconds)
                members.append(sid)
                links.update((p, sid) for p in incoming[ea])
                links.update((sid, q) for q in outgoing[xa])
        for a in cycle:
            del streets[a]
        links = {(a, b) for a, b in links if a not in arcs and b not in arcs}
        roundabouts[ring.id] = Roundabout(ring.id, cap, frozenset(members))
    return Network(streets, frozenset(links), roundabouts, network.step_seconds, {})


# ---------------------------------------------------------------------------
# windows


def _scaled_light(street: Street, vehicles: int, step_seconds: float) -> int:
    return steps_for(street.length, LIGHT_KMH, step_seconds, factor=max(1, vehicles))


def compute_windows(network: Network, route, ledger: OccupancyLedger | None = None,
                    depart: int = 0, extra_vehicles: int = 1) -> list[tuple[int, int]]:
    """Per-street (min_enter, max_enter), relative to the route start.

    Earliest enters are free-flow prefix sums. The latest exit from a street
    is found from the fixed traffic already on it at the earliest enter step:
    below capacity, traversal slows in proportion to the vehicle count (the
    ``extra_vehicles`` being placed now counted in, and never faster than
    the tier rule allows); at or above capacity, the queue needs the full
    discharge time ``max_travel_time``.
    """
    windows = []
    lo = hi = 0
    for s in route:
        windows.append((lo, hi))
        st = network.streets[s]
        n = ledger.occupancy(s, depart + lo) if ledger is not None else 0
        if n >= st.capacity:
            span = st.max_travel_time
        else:
            total = n + extra_vehicles
            span = max(_scaled_light(st, total, network.step_seconds), travel_time(st, total))
        lo += st.light_time
        hi += span
    return windows


def route_cost(network: Network, streets, kind: str = "length") -> int:
    if kind == "length":
        return round(network.route_length(streets))
    if kind == "time":
        return sum(network.streets[s].light_time for s in streets)
    raise ValueError(f"unknown cost kind {kind!r}")


# ---------------------------------------------------------------------------
# instance assembly


@dataclass(frozen=True)
class Demand:
    """One demand record: a vehicle request, optionally with a fixed plan."""
    id: str
    controlled: bool
    depart: int
    origin: str
    destination: str
    route: tuple[str, ...] | None = None
    schedule: tuple[tuple[int, int], ...] | None = None

    def fixed_timeline(self) -> Timeline | None:
        if self.route is None or self.schedule is None:
            return None
        return Timeline(self.id, f"{self.id}/fixed", self.route,
                        tuple(a for a, _ in self.schedule), tuple(b for _, b in self.schedule))


class RouteCache:
    """Memoises diverse path sets per (origin, destination)."""

    def __init__(self, network: Network, k: int = 6, similarity_threshold: float = 0.5,
                 limit: int = 200, per_cluster: int = 2):
        self.network = network
        self.k = k
        self.threshold = similarity_threshold
        self.limit = limit
        self.per_cluster = per_cluster
        self._cache: dict[tuple[str, str], list[list[str]]] = {}

    def paths(self, origin: str, destination: str) -> list[list[str]]:
        key = (origin, destination)
        if key not in self._cache:
            raw = enumerate_acyclic_paths(self.network, origin, destination, self.limit)
            self._cache[key] = select_diverse_routes(raw, self.k, self.threshold,
                                                     self.network, self.per_cluster)
        return self._cache[key]


def candidate_routes(network: Network, vehicle: str, paths, ledger: OccupancyLedger | None,
                     depart: int, extra_vehicles: int = 1, cost: str = "length"):
    return tuple(
        Route(f"{vehicle}/r{i}", vehicle, tuple(p),
              tuple(compute_windows(network, p, ledger, depart, extra_vehicles)),
              route_cost(network, p, cost))
        for i, p in enumerate(paths))


def build_instance(network: Network, arrivals, committed=(), *, k: int = 6,
                   similarity_threshold: float = 0.5, limit: int = 200, per_cluster: int = 2,
                   cost: str = "length", horizon_cap: int = 100_000,
                   cache: RouteCache | None = None, protect_simulated: bool = False,
                   depart_at: int | None = None) -> SchedulingInstance:
    """Assemble a scheduling instance.

    ``arrivals`` are :class:`Demand` records to be routed (controlled);
    ``committed`` are :class:`VehicleState` or :class:`Demand` records with a
    fixed plan (simulated). ``depart_at`` overrides every arrival's depart
    step. Arrivals whose destination is unreachable raise
    :class:`UnreachableDestination`.
    """
    cache = cache or RouteCache(network, k, similarity_threshold, limit, per_cluster)
    simulated = []
    for c in committed:
        if isinstance(c, VehicleState):
            simulated.append(c)
        else:
            tl = c.fixed_timeline()
            if tl is None:
                raise ValueError(f"simulated vehicle {c.id} lacks a fixed route and schedule")
            simulated.append(VehicleState(c.id, False, c.origin, c.destination, tl.enters[0],
                                          fixed=tl))
    ledger = OccupancyLedger.for_network(
        network, [ev for v in simulated for ev in v.fixed.events()])
    batch = len(arrivals)
    controlled = []
    for d in arrivals:
        paths = cache.paths(d.origin, d.destination)
        if not paths:
            raise UnreachableDestination(d.id, d.origin, d.destination)
        dep = d.depart if depart_at is None else depart_at
        routes = candidate_routes(network, d.id, paths, ledger, dep, batch, cost)
        controlled.append(VehicleState(d.id, True, d.origin, d.destination, dep, routes))
    horizon = ledger.max_time()
    for v in controlled:
        for r in v.routes:
            last = network.streets[r.streets[-1]]
            horizon = max(horizon, v.depart + r.windows[-1][1] + last.max_travel_time)
    return SchedulingInstance(network, min(horizon, horizon_cap), controlled, simulated,
                              protect_simulated)
