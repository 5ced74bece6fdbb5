"""Exact lexicographic branch-and-bound over route choice and street timings.

Placing a vehicle only ever adds occupancy, so a rule broken on a partial
assignment stays broken and the spread term never shrinks. Pruning on partial
assignments is therefore exact.

Two facts keep the search small. Vehicles whose candidate streets (and
roundabouts) never overlap cannot interact, so each such component is solved
on its own and the objectives add up. And with everybody else fixed, one
vehicle's cost splits street by street, so a backward DP over its route
(``_kernels.chain_dp``) finds its best timeline exactly. Run against a
partial ledger, the same DP bounds every vehicle still to be placed. The last
vehicle of a component is never branched on: its DP answer is optimal.

Exit steps are branched on in order of DP value. A later exit is not
dominated by an earlier one: vehicles placed afterwards may raise the
occupancy at this enter step and with it the required travel time.
"""

from __future__ import annotations

import heapq
import math
import random
import threading
import time
from dataclasses import dataclass

import numpy as np

from cutc import _kernels
from cutc.network import travel_time
from cutc.scheduling import (ANYTIME, PROVEN, Infeasible, Objective, Schedule,
                             SchedulingInstance, SolveTimeout, Timeline, VehicleState)

BIG = _kernels.BIG


class _Stop(Exception):
    """Budget exhausted: the worker gives up."""


class _Skip(Exception):
    """Another worker closed the current component."""


class _Found(Exception):
    pass


class Incumbent:
    """Best (cost, spread increase) and timelines of one component, shared by
    all workers."""

    def __init__(self):
        self._lock = threading.Lock()
        self.objective: Objective | None = None
        self.timelines: dict[str, Timeline] | None = None
        self.stop = threading.Event()
        self.proven = False

    def offer(self, objective: Objective, timelines: dict[str, Timeline]) -> bool:
        with self._lock:
            if self.objective is None or objective < self.objective:
                self.objective = objective
                self.timelines = timelines
                return True
            return False

    def bound(self) -> Objective | None:
        return self.objective


@dataclass
class _Plan:
    """A route resolved to street indices and absolute enter windows."""
    vehicle: str
    route_id: str
    cost: int
    names: tuple[str, ...]
    idx: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    depart: int

    @property
    def width(self) -> int:
        return int((self.hi - self.lo).max()) + 1


class _Ledger:
    """Dense per-(street, step) counters with exact undo."""

    def __init__(self, instance: SchedulingInstance):
        net = instance.network
        self.names = sorted(net.streets)
        self.index = {s: i for i, s in enumerate(self.names)}
        ring_ids = sorted(net.roundabouts)
        ring_index = {r: i for i, r in enumerate(ring_ids)}
        self.H = instance.horizon
        w = self.H + 2
        ns, nr = len(self.names), max(1, len(ring_ids))
        self.occ = np.zeros((ns, w), dtype=np.int64)
        # certain presence of vehicles not yet placed (see _Search.forced)
        self.floor = np.zeros((ns, w), dtype=np.int64)
        self.grounded = np.zeros((ns, w), dtype=np.int64)
        self.guarded = np.zeros((ns, w), dtype=np.int64)
        self.min_exit = np.full((ns, w), BIG, dtype=np.int64)
        self.ring_occ = np.zeros((nr, w), dtype=np.int64)
        self.ring_enter = np.zeros((nr, w), dtype=np.int64)
        self.streets = [net.streets[n] for n in self.names]

        def col(attr):
            return np.array([getattr(st, attr) for st in self.streets], dtype=np.int64)

        self.cap = col("capacity")
        self.light_below = col("light_below")
        self.heavy_from = col("heavy_from")
        self.tt_l = col("light_time")
        self.tt_m = col("medium_time")
        self.tt_h = col("heavy_time")
        self.max_tt = col("max_travel_time")
        self.ring_of = np.array([ring_index.get(net.roundabout_of(n), -1) for n in self.names],
                                dtype=np.int64)
        self.ring_cap = np.array([net.roundabouts[r].capacity for r in ring_ids] or [0],
                                 dtype=np.int64)
        self.rows = []
        for i in range(ns):
            r = int(self.ring_of[i])
            self.rows.append((
                self.occ[i], self.guarded[i], self.min_exit[i], self.grounded[i],
                int(self.cap[i]), int(self.light_below[i]), int(self.heavy_from[i]),
                int(self.tt_l[i]), int(self.tt_m[i]), int(self.tt_h[i]), int(self.max_tt[i]),
                self.ring_occ[max(r, 0)], self.ring_enter[max(r, 0)],
                int(self.ring_cap[r]) if r >= 0 else 0, r >= 0, self.floor[i],
            ))
        self.spread = 0

    def load(self, simulated: list[VehicleState], protect: bool) -> str | None:
        """Apply fixed timelines without checks; return a reason string if the
        fixed traffic alone already breaks a rule that applies to it."""
        for v in simulated:
            for s, a, b in v.fixed.events():
                row = self.rows[self.index[s]]
                _kernels.interval_apply(row[0], row[3], row[11], row[12], row[14], a, b)
                if protect:
                    row[1][a] += 1
                    row[2][a] = min(row[2][a], b)
        self.spread = int((self.occ * (self.grounded > 0)).sum())
        for v in simulated:
            for s, a, b in v.fixed.events():
                i = self.index[s]
                row = self.rows[i]
                if row[14] and row[11][a] > row[13]:
                    return f"roundabout over capacity at simulated enter of {v.id} on {s} at {a}"
                if protect:
                    n = int(row[0][a])
                    if n > row[4] or b < a + travel_time(self.streets[i], n):
                        return f"committed vehicle {v.id} violated on {s} at {a}"
        return None

    def try_place(self, s: int, e: int, x: int) -> bool:
        row = self.rows[s]
        return _kernels.interval_ok(row[0], row[15], row[1], row[2], row[4], row[5], row[6],
                                    row[7], row[8], row[9], e, x, True,
                                    row[11], row[12], row[13], row[14])

    def place(self, s: int, e: int, x: int):
        row = self.rows[s]
        delta = _kernels.interval_apply(row[0], row[3], row[11], row[12], row[14], e, x)
        row[1][e] += 1
        prev = int(row[2][e])
        if x < prev:
            row[2][e] = x
        self.spread += int(delta)
        return (s, e, x, prev, int(delta))

    def unplace(self, token):
        s, e, x, prev, delta = token
        row = self.rows[s]
        _kernels.interval_remove(row[0], row[3], row[11], row[12], row[14], e, x)
        row[1][e] -= 1
        row[2][e] = prev
        self.spread -= delta

    def tier_time(self, s: int, e: int) -> int:
        row = self.rows[s]
        return _kernels._tier_time(row[0][e] + row[15][e] + 1, row[5], row[6], row[7], row[8], row[9])

    def dp(self, plan: _Plan, unit: int = 1, share: np.ndarray | None = None):
        f = np.empty((len(plan.idx), plan.width), dtype=np.int64)
        nxt = np.empty_like(f)
        if share is None:
            share = np.full(len(plan.idx), unit, dtype=np.int64)
        _kernels.chain_dp(self.occ, self.floor, self.guarded, self.min_exit, self.grounded,
                          self.ring_occ, self.ring_enter, self.cap, self.light_below,
                          self.heavy_from, self.tt_l, self.tt_m, self.tt_h, self.max_tt,
                          self.ring_of, self.ring_cap, plan.idx, plan.lo, plan.hi, self.H,
                          unit, share, f, nxt)
        return f, nxt


class _Search:
    """One worker: private ledger, per-component shared incumbents."""

    def __init__(self, instance: SchedulingInstance, vehicles: list[VehicleState],
                 deadline: float | None, node_limit: int | None,
                 rng: random.Random | None = None, first_only: bool = False):
        self.instance = instance
        self.deadline = deadline
        self.node_limit = node_limit
        self.rng = rng
        self.first_only = first_only
        self.nodes = 0
        self.inc: Incumbent | None = None
        self.ledger = _Ledger(instance)
        self.sim_error = self.ledger.load(instance.simulated, instance.protect_simulated)
        self.base_spread = self.ledger.spread
        self.vehicles = vehicles
        self.plans: list[list[_Plan]] = [
            [self._plan(v, r) for r in sorted(v.routes, key=lambda r: (r.cost, r.id))]
            for v in vehicles]
        # Every controlled vehicle enters its origin street at its depart step
        # and stays for at least the light time, wherever it goes next. Until
        # it is placed that presence sits in the ledger's floor, so feasibility
        # tests see it early. Occupancy only ever hurts, so this prunes
        # nothing that could succeed.
        led = self.ledger
        self.forced: dict[str, tuple[int, int, int]] = {}
        for v in vehicles:
            s = led.index[v.origin]
            end = min(v.depart + int(led.tt_l[s]), led.H + 2)
            self.forced[v.id] = (s, v.depart, end)
            led.floor[s, v.depart:end] += 1

    def _plan(self, v: VehicleState, r) -> _Plan:
        H = self.ledger.H
        idx = np.array([self.ledger.index[s] for s in r.streets], dtype=np.int64)
        lo = np.array([v.depart + a for a, _ in r.windows], dtype=np.int64)
        hi = np.array([min(v.depart + b, H) for _, b in r.windows], dtype=np.int64)
        # a window that starts past the horizon is empty; keep arrays well formed
        hi = np.maximum(hi, lo)
        return _Plan(v.id, r.id, r.cost, tuple(r.streets), idx, lo, hi, v.depart)

    def _unforce(self, vid: str):
        s, a, b = self.forced[vid]
        self.ledger.floor[s, a:b] -= 1

    def _force(self, vid: str):
        s, a, b = self.forced[vid]
        self.ledger.floor[s, a:b] += 1

    def _own_dp(self, plan: _Plan, unit: int = 1, share=None):
        """DP for a vehicle not yet placed, without its own floor."""
        self._unforce(plan.vehicle)
        try:
            return self.ledger.dp(plan, unit, share)
        finally:
            self._force(plan.vehicle)

    @property
    def delta(self) -> int:
        return self.ledger.spread - self.base_spread

    def _tick(self):
        self.nodes += 1
        if self.nodes & 63 == 0:
            if self.inc.stop.is_set():
                raise _Skip
            if self.deadline is not None and time.perf_counter() > self.deadline:
                raise _Stop
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise _Stop

    def _pruned(self, primary_lb: int, secondary_lb: int, unit: int = 1) -> bool:
        """``secondary_lb`` is in units of ``1/unit``; spreads are integers, so
        the bound rounds up."""
        best = self.inc.bound()
        return best is not None and not (primary_lb, -(-secondary_lb // unit)) < tuple(best)

    def _order(self, items: list) -> list:
        if self.rng is not None:
            items = list(items)
            self.rng.shuffle(items)
        return items

    @staticmethod
    def _path(plan: _Plan, nxt: np.ndarray):
        enters, exits = [], []
        e = int(plan.lo[0])
        for i in range(len(plan.idx)):
            x = int(nxt[i, e - plan.lo[i]])
            enters.append(e)
            exits.append(x)
            e = x
        return enters, exits

    def _offer(self, primary: int, secondary: int, chosen):
        timelines = {plan.vehicle: Timeline(plan.vehicle, plan.route_id, plan.names,
                                            tuple(enters), tuple(exits))
                     for plan, enters, exits in chosen}
        self.inc.offer(Objective(primary, secondary), timelines)
        if self.first_only:
            raise _Found

    # -- bounds on the vehicles still to place ------------------------------

    def _shares(self, plans: list[list[_Plan]]):
        """Scale and per-street weights for the bound on the remaining vehicles.

        A new enter pair adds the occupancy already there once, however many
        vehicles end up entering at it. With ``u`` remaining vehicles able to
        use the street, charging each of them ``1/u`` of it never overcounts.
        Returns ``unit`` (common denominator) and per plan ``unit/u`` per street.
        """
        users: dict[int, int] = {}
        for ps in plans:
            for s in {int(s) for p in ps for s in p.idx}:
                users[s] = users.get(s, 0) + 1
        unit = math.lcm(*users.values()) if users else 1
        return unit, [[np.array([unit // users[int(s)] for s in p.idx], dtype=np.int64)
                       for p in ps] for ps in plans]

    def _best_alone(self, ps: list[_Plan], unit: int, shares: list[np.ndarray]):
        """(min feasible cost, min scaled DP value at that cost) or None."""
        best = None
        for p, sh in zip(ps, shares):
            if best is not None and p.cost > best[0]:
                break
            v = int(self._own_dp(p, unit, sh)[0][0, 0])
            if v < BIG and (best is None or v < best[1]):
                best = (p.cost, v)
        return best

    def _watchers(self, plans: list[list[_Plan]]) -> dict[int, list[list[_Plan]]]:
        ring_of = self.ledger.ring_of
        by_street: dict[int, set[int]] = {}
        by_ring: dict[int, set[int]] = {}
        for j, ps in enumerate(plans):
            for p in ps:
                for s in p.idx:
                    s = int(s)
                    by_street.setdefault(s, set()).add(j)
                    if ring_of[s] >= 0:
                        by_ring.setdefault(int(ring_of[s]), set()).add(j)
        out = {}
        for s in range(len(ring_of)):
            js = by_street.get(s, set()) | by_ring.get(int(ring_of[s]), set())
            if js:
                out[s] = [plans[j] for j in sorted(js)]
        return out

    def _still_fit(self, groups) -> bool:
        for ps in groups:
            if not any(int(self._own_dp(p)[0][0, 0]) < BIG for p in ps):
                return False
        return True

    # -- search -------------------------------------------------------------

    def run(self, plans: list[list[_Plan]]):
        """Exhaustive search over one component (route lists per vehicle)."""
        n = len(plans)
        chosen: list = []

        def visit(k: int, cost: int):
            vid = plans[k][0].vehicle
            self._unforce(vid)
            try:
                _visit(k, cost)
            finally:
                self._force(vid)

        def _visit(k: int, cost: int):
            self._tick()
            rest = plans[k:]
            unit, shares = self._shares(rest)
            rest_cost = rest_sec = 0
            for j in range(1, len(rest)):
                b = self._best_alone(rest[j], unit, shares[j])
                if b is None:
                    return
                rest_cost += b[0]
                rest_sec += b[1]
            cur = self.delta * unit
            watch = self._watchers(rest[1:])
            order = self._order(list(zip(plans[k], shares[0])))
            for plan, sh in order:
                primary_lb = cost + plan.cost + rest_cost
                best = self.inc.bound()
                if best is not None and primary_lb > best.primary:
                    if self.rng is None:
                        break
                    continue
                f, nxt = self.ledger.dp(plan, unit, sh)
                v = int(f[0, 0])
                if v >= BIG or self._pruned(primary_lb, cur + v + rest_sec, unit):
                    continue
                if k == n - 1:
                    # alone at last: unit is 1 and the DP value is exact
                    enters, exits = self._path(plan, nxt)
                    self._offer(cost + plan.cost, (cur + v) // unit,
                                chosen + [(plan, enters, exits)])
                    continue
                self._walk(plan, 0, int(plan.lo[0]), f, unit, sh, 0, [], [], primary_lb,
                           cur + rest_sec,
                           lambda en, xs, plan=plan: _descend(plan, en, xs, k, cost),
                           watch)

        def _descend(plan, enters, exits, k, cost):
            chosen.append((plan, list(enters), list(exits)))
            try:
                visit(k + 1, cost + plan.cost)
            finally:
                chosen.pop()

        visit(0, 0)

    def _walk(self, plan: _Plan, i: int, e: int, f: np.ndarray, unit: int, share: np.ndarray,
              prefix: int, enters: list[int], exits: list[int], primary_lb: int,
              sec_base: int, cont, watch=None):
        """Branch on the exit of street ``i`` (entered at ``e``) in order of the
        DP value of the rest of the route. Costs are scaled by ``unit``.

        ``watch`` maps a street to the route lists of later vehicles that use
        it (or its roundabout). After each placement those vehicles must still
        fit on their own; more occupancy never helps, so a failure prunes the
        whole subtree."""
        led = self.ledger
        s = int(plan.idx[i])
        last = i == len(plan.idx) - 1
        xlo = e + led.tier_time(s, e)
        xhi = min(e + int(led.max_tt[s]), led.H)
        if not last:
            xlo = max(xlo, int(plan.lo[i + 1]))
            xhi = min(xhi, int(plan.hi[i + 1]))
        if xlo > xhi:
            return
        grounded = led.grounded[s]
        base = 0 if grounded[e] > 0 else unit + int(share[i]) * int(led.occ[s, e])
        cov = unit * np.cumsum(grounded[e:xhi] > 0)
        xs = np.arange(xlo, xhi + 1)
        own = base + cov[xs - e - 1]
        vals = own + (f[i + 1, xs - plan.lo[i + 1]] if not last else 0)
        keep = vals < BIG
        xs, own, vals = xs[keep], own[keep], vals[keep]
        order = np.argsort(vals, kind="stable")
        if self.rng is not None:
            order = self._order(list(order))
        for j in order:
            self._tick()
            x = int(xs[j])
            if self._pruned(primary_lb, sec_base + prefix + int(vals[j]), unit):
                if self.rng is None:
                    break
                continue
            if not led.try_place(s, e, x):
                continue
            token = led.place(s, e, x)
            enters.append(e)
            exits.append(x)
            try:
                if watch and not self._still_fit(watch.get(s, ())):
                    continue
                if last:
                    cont(enters, exits)
                else:
                    self._walk(plan, i + 1, x, f, unit, share, prefix + int(own[j]), enters, exits,
                               primary_lb, sec_base, cont, watch)
            finally:
                enters.pop()
                exits.pop()
                led.unplace(token)

    def greedy(self, plans: list[list[_Plan]]):
        """Place vehicles one at a time, each on its best route given the ones
        before; offer the result. Cheap first incumbent for every component."""
        tokens = []
        chosen = []
        cost = 0
        lifted = []
        try:
            for ps in plans:
                self._unforce(ps[0].vehicle)
                lifted.append(ps[0].vehicle)
                best = None
                for p in ps:
                    if best is not None and p.cost > best[0]:
                        break
                    f, nxt = self.ledger.dp(p)
                    v = int(f[0, 0])
                    if v < BIG and (best is None or v < best[1]):
                        best = (p.cost, v, p, nxt)
                if best is None:
                    return
                _, _, p, nxt = best
                enters, exits = self._path(p, nxt)
                for s, e, x in zip(p.idx, enters, exits):
                    tokens.append(self.ledger.place(int(s), e, x))
                chosen.append((p, enters, exits))
                cost += p.cost
            self._offer(cost, self.delta, chosen)
        finally:
            for t in reversed(tokens):
                self.ledger.unplace(t)
            for vid in lifted:
                self._force(vid)


def _combos_by_cost(plans: list[list[_Plan]]):
    """Yield route-index tuples in non-decreasing total cost (ties by index tuple)."""
    if any(not ps for ps in plans):
        return
    start = tuple(0 for _ in plans)
    heap = [(sum(ps[0].cost for ps in plans), start)]
    seen = {start}
    while heap:
        cost, combo = heapq.heappop(heap)
        yield cost, combo
        for k in range(len(plans)):
            if combo[k] + 1 < len(plans[k]):
                nxt = combo[:k] + (combo[k] + 1,) + combo[k + 1:]
                if nxt not in seen:
                    seen.add(nxt)
                    c = cost - plans[k][combo[k]].cost + plans[k][combo[k] + 1].cost
                    heapq.heappush(heap, (c, nxt))


def _components(search: _Search) -> list[list[int]]:
    """Group vehicles that share a candidate street or roundabout."""
    n = len(search.vehicles)
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    owner: dict[tuple, int] = {}
    for k, ps in enumerate(search.plans):
        for p in ps:
            for s in p.idx:
                r = int(search.ledger.ring_of[s])
                key = ("ring", r) if r >= 0 else ("street", int(s))
                if key in owner:
                    parent[find(k)] = find(owner[key])
                else:
                    owner[key] = k
    groups: dict[int, list[int]] = {}
    for k in range(n):
        groups.setdefault(find(k), []).append(k)
    return sorted(groups.values())


def _run_worker(kind: str, search: _Search, comps: list[list[int]], incs: list[Incumbent],
                results: dict):
    try:
        for members, inc in zip(comps, incs):
            if inc.proven:
                continue
            search.inc = inc
            plans = [search.plans[k] for k in members]
            try:
                if kind == "bound":
                    for cost, combo in _combos_by_cost(plans):
                        best = inc.bound()
                        if best is not None and cost > best.primary:
                            break
                        search.run([[ps[c]] for ps, c in zip(plans, combo)])
                else:
                    search.run(plans)
            except _Skip:
                continue
            # an exhaustive pass with exact pruning closes the component
            inc.proven = True
            inc.stop.set()
        results[kind] = "complete"
    except _Stop:
        results[kind] = "stopped"


def _feasible(instance, vehicles, deadline) -> bool | None:
    search = _Search(instance, vehicles, deadline, None, first_only=True)
    if search.sim_error:
        return False
    search.inc = Incumbent()
    try:
        search.run(search.plans)
    except _Found:
        return True
    except _Stop:
        return None
    return False


def _diagnose(instance, vehicles, deadline) -> list[str]:
    alone = [v.id for v in vehicles if _feasible(instance, [v], deadline) is False]
    if alone:
        return alone
    for k in range(2, len(vehicles) + 1):
        if _feasible(instance, vehicles[:k], deadline) is False:
            return [vehicles[k - 1].id]
    return [v.id for v in vehicles]


def solve(instance: SchedulingInstance, budget: float | None = None, workers: int = 1,
          seed: int = 0, node_limit: int | None = None) -> Schedule:
    """Lexicographically optimal schedule for the controlled vehicles.

    ``workers=1`` runs the depth-first strategy only and is deterministic.
    A second worker runs the cost-ordered (lower-bound driven) strategy and
    further workers run seeded randomized dives; all share the incumbents.
    ``node_limit`` caps the nodes each worker expands.
    """
    t0 = time.perf_counter()
    deadline = None if budget is None else t0 + budget
    vehicles = sorted(instance.controlled, key=lambda v: v.id)
    kinds = ["dfs", "bound"][:max(1, workers)] + ["random"] * max(0, workers - 2)
    searches = []
    for w, kind in enumerate(kinds):
        rng = random.Random(seed * 7919 + w) if kind == "random" else None
        searches.append(_Search(instance, vehicles, deadline, node_limit, rng=rng))
    lead = searches[0]
    if lead.sim_error:
        raise Infeasible([v.id for v in vehicles], lead.sim_error)

    comps = _components(lead)
    incs = [Incumbent() for _ in comps]
    for members, inc in zip(comps, incs):
        lead.inc = inc
        lead.greedy([lead.plans[k] for k in members])

    results: dict[str, str] = {}
    if len(searches) == 1:
        _run_worker(kinds[0], lead, comps, incs, results)
    else:
        threads = [threading.Thread(target=_run_worker, args=(k, s, comps, incs, results),
                                    daemon=True)
                   for k, s in zip(kinds, searches)]
        for th in threads:
            th.start()
        for th in threads:
            th.join()

    stats = {"nodes": sum(s.nodes for s in searches), "workers": len(searches),
             "components": len(comps)}
    for members, inc in zip(comps, incs):
        if inc.objective is None:
            if inc.proven:
                raise Infeasible(_diagnose(instance, [vehicles[k] for k in members], deadline))
            raise SolveTimeout(f"no feasible schedule within budget ({stats['nodes']} nodes)")
    timelines = {v.id: v.fixed for v in instance.simulated}
    for inc in incs:
        timelines.update(inc.timelines)
    objective = Objective(sum(inc.objective.primary for inc in incs),
                          lead.base_spread + sum(inc.objective.secondary for inc in incs))
    status = PROVEN if all(inc.proven for inc in incs) else ANYTIME
    stats["wall"] = time.perf_counter() - t0
    return Schedule(dict(sorted(timelines.items())), objective, status, stats)
