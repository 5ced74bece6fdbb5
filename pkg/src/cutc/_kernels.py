"""Hot numeric kernels.

Every kernel exists twice: a loop version compiled with numba ``@njit`` and a
pure-numpy version. The loop version is used when numba imports and the
environment variable ``CUTC_NO_JIT`` is unset (or ``0``); otherwise the numpy
path is used. Both paths must return identical results.
"""

import os

import numpy as np

try:
    from numba import njit as _njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None

USE_JIT = _njit is not None and os.environ.get("CUTC_NO_JIT", "0") in ("", "0")


# ---------------------------------------------------------------------------
# occupancy counting (sorted event lists)


def _occupancy_many_np(enters, exits, times):
    return (np.searchsorted(enters, times, side="right")
            - np.searchsorted(exits, times, side="right")).astype(np.int64)


def _occupancy_many_loop(enters, exits, times):
    out = np.empty(times.shape[0], dtype=np.int64)
    for k in range(times.shape[0]):
        t = times[k]
        lo, hi = 0, enters.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if enters[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        n = lo
        lo, hi = 0, exits.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if exits[mid] <= t:
                lo = mid + 1
            else:
                hi = mid
        out[k] = n - lo
    return out


# ---------------------------------------------------------------------------
# scheduler ledger: occupancy rows indexed by absolute step


def _tier_time(n, light_below, heavy_from, tt_light, tt_medium, tt_heavy):
    if n < light_below:
        return tt_light
    if n < heavy_from:
        return tt_medium
    return tt_heavy


def _interval_ok_loop(occ, floor, guarded, min_exit, cap, light_below, heavy_from,
                      tt_light, tt_medium, tt_heavy, e, x, self_checked,
                      ring_occ, ring_enter, ring_cap, has_ring):
    # occupancy with the new vehicle counted at every t in [e, x); ``floor``
    # is presence that is certain but not yet placed
    for t in range(e, x):
        n = occ[t] + floor[t] + 1
        own = self_checked and t == e
        if own or guarded[t] > 0:
            if n > cap:
                return False
            if n < light_below:
                tt = tt_light
            elif n < heavy_from:
                tt = tt_medium
            else:
                tt = tt_heavy
            if own and x < e + tt:
                return False
            if guarded[t] > 0 and min_exit[t] < t + tt:
                return False
        if has_ring:
            if (ring_enter[t] > 0 or t == e) and ring_occ[t] + 1 > ring_cap:
                return False
    return True


def _interval_ok_np(occ, floor, guarded, min_exit, cap, light_below, heavy_from,
                    tt_light, tt_medium, tt_heavy, e, x, self_checked,
                    ring_occ, ring_enter, ring_cap, has_ring):
    n = occ[e:x] + floor[e:x] + 1
    if self_checked:
        if n[0] > cap:
            return False
        if x < e + _tier_time(n[0], light_below, heavy_from, tt_light, tt_medium, tt_heavy):
            return False
    g = guarded[e:x] > 0
    if g.any():
        ng = n[g]
        if (ng > cap).any():
            return False
        tt = np.where(ng < light_below, tt_light,
                      np.where(ng < heavy_from, tt_medium, tt_heavy))
        ts = np.arange(e, x)[g]
        if (min_exit[e:x][g] < ts + tt).any():
            return False
    if has_ring:
        active = ring_enter[e:x] > 0
        active[0] = True
        if (ring_occ[e:x][active] + 1 > ring_cap).any():
            return False
    return True


def _interval_apply_loop(occ, grounded, ring_occ, ring_enter, has_ring, e, x):
    """Add one vehicle on [e, x) and its enter at e; return the spread increase."""
    delta = 0
    for t in range(e, x):
        if grounded[t] > 0:
            delta += 1
        occ[t] += 1
    if grounded[e] == 0:
        delta += occ[e]
    grounded[e] += 1
    if has_ring:
        for t in range(e, x):
            ring_occ[t] += 1
        ring_enter[e] += 1
    return delta


def _interval_apply_np(occ, grounded, ring_occ, ring_enter, has_ring, e, x):
    delta = int(np.count_nonzero(grounded[e:x]))
    occ[e:x] += 1
    if grounded[e] == 0:
        delta += int(occ[e])
    grounded[e] += 1
    if has_ring:
        ring_occ[e:x] += 1
        ring_enter[e] += 1
    return delta


def _interval_remove_loop(occ, grounded, ring_occ, ring_enter, has_ring, e, x):
    grounded[e] -= 1
    for t in range(e, x):
        occ[t] -= 1
    if has_ring:
        for t in range(e, x):
            ring_occ[t] -= 1
        ring_enter[e] -= 1


def _interval_remove_np(occ, grounded, ring_occ, ring_enter, has_ring, e, x):
    grounded[e] -= 1
    occ[e:x] -= 1
    if has_ring:
        ring_occ[e:x] -= 1
        ring_enter[e] -= 1


# ---------------------------------------------------------------------------
# single-vehicle chain DP over one route
#
# With every other vehicle fixed, a vehicle's spread contribution splits per
# street into a function of (enter, exit): the grounded pairs its interval
# covers, plus its own enter pair when that pair is new. Consecutive streets
# share exit = next enter, so a backward pass over the route finds the
# cheapest feasible timeline. Costs are scaled by ``unit``; the occupancy
# already present at a new enter pair is weighted by ``share[i]`` instead,
# which lets a caller charge each of several vehicles only part of a pair
# they might share. ``floor`` adds presence that is certain but not yet
# placed to every feasibility test; it never enters the cost.
# ``f[i, e - lo[i]]`` is the cheapest cost of streets i.. when street i is
# entered at e (BIG when infeasible) and ``nxt`` the exit achieving it
# (smallest on ties).

BIG = np.iinfo(np.int64).max // 4


def _chain_dp_loop(occ, floor, guarded, min_exit, grounded, ring_occ, ring_enter,
                   cap, light_below, heavy_from, tt_l, tt_m, tt_h, max_tt, ring_of, ring_cap,
                   route, lo, hi, horizon, unit, share, f, nxt):
    big = np.iinfo(np.int64).max // 4
    L = route.shape[0]
    for i in range(L - 1, -1, -1):
        s = route[i]
        r = ring_of[s]
        last = i == L - 1
        for k in range(f.shape[1]):
            f[i, k] = big
            nxt[i, k] = -1
        for e in range(lo[i], min(hi[i], horizon) + 1):
            n0 = occ[s, e] + floor[s, e] + 1
            if n0 > cap[s]:
                continue
            if n0 < light_below[s]:
                tt = tt_l[s]
            elif n0 < heavy_from[s]:
                tt = tt_m[s]
            else:
                tt = tt_h[s]
            xlo = e + tt
            xhi = min(e + max_tt[s], horizon)
            if not last:
                xlo = max(xlo, lo[i + 1])
                xhi = min(xhi, hi[i + 1])
            if xlo > xhi:
                continue
            base = 0
            if grounded[s, e] == 0:
                base = unit + share[i] * occ[s, e]
            cov = 0
            best = big
            arg = -1
            for t in range(e, xhi):
                n = occ[s, t] + floor[s, t] + 1
                if guarded[s, t] > 0:
                    if n > cap[s]:
                        break
                    if n < light_below[s]:
                        tt_t = tt_l[s]
                    elif n < heavy_from[s]:
                        tt_t = tt_m[s]
                    else:
                        tt_t = tt_h[s]
                    if min_exit[s, t] < t + tt_t:
                        break
                if r >= 0 and (ring_enter[r, t] > 0 or t == e) and ring_occ[r, t] + 1 > ring_cap[r]:
                    break
                if grounded[s, t] > 0:
                    cov += unit
                x = t + 1
                if x >= xlo:
                    v = base + cov
                    if not last:
                        fn = f[i + 1, x - lo[i + 1]]
                        if fn >= big:
                            continue
                        v += fn
                    if v < best:
                        best = v
                        arg = x
            f[i, e - lo[i]] = best
            nxt[i, e - lo[i]] = arg


def _chain_dp_np(occ, floor, guarded, min_exit, grounded, ring_occ, ring_enter,
                 cap, light_below, heavy_from, tt_l, tt_m, tt_h, max_tt, ring_of, ring_cap,
                 route, lo, hi, horizon, unit, share, f, nxt):
    L = route.shape[0]
    f[:L] = BIG
    nxt[:L] = -1
    for i in range(L - 1, -1, -1):
        s = route[i]
        r = ring_of[s]
        last = i == L - 1
        for e in range(lo[i], min(hi[i], horizon) + 1):
            n0 = occ[s, e] + floor[s, e] + 1
            if n0 > cap[s]:
                continue
            tt = _tier_time(n0, light_below[s], heavy_from[s], tt_l[s], tt_m[s], tt_h[s])
            xlo = e + tt
            xhi = min(e + max_tt[s], horizon)
            if not last:
                xlo = max(xlo, lo[i + 1])
                xhi = min(xhi, hi[i + 1])
            if xlo > xhi:
                continue
            ts = np.arange(e, xhi)
            n = occ[s, e:xhi] + floor[s, e:xhi] + 1
            ttv = np.where(n < light_below[s], tt_l[s],
                           np.where(n < heavy_from[s], tt_m[s], tt_h[s]))
            bad = (guarded[s, e:xhi] > 0) & ((n > cap[s]) | (min_exit[s, e:xhi] < ts + ttv))
            if r >= 0:
                active = ring_enter[r, e:xhi] > 0
                active[0] = True
                bad |= active & (ring_occ[r, e:xhi] + 1 > ring_cap[r])
            nok = int(np.argmax(bad)) if bad.any() else bad.shape[0]
            xmax = e + nok
            if xmax < xlo:
                continue
            cov = unit * np.cumsum(grounded[s, e:xmax] > 0)
            xs = np.arange(xlo, xmax + 1)
            base = 0 if grounded[s, e] > 0 else unit + int(share[i]) * int(occ[s, e])
            vals = base + cov[xs - e - 1]
            if not last:
                fn = f[i + 1, xs - lo[i + 1]]
                vals = np.where(fn >= BIG, BIG, vals + np.minimum(fn, BIG))
            k = int(np.argmin(vals))
            if vals[k] >= BIG:
                continue
            f[i, e - lo[i]] = vals[k]
            nxt[i, e - lo[i]] = xs[k]


# ---------------------------------------------------------------------------
# micro-simulator movement step


def _advance_loop(state, pos, street, occ, length, light_below, heavy_from,
                  speeds, dt, waiting, eps):
    """Move every vehicle for one tick; returns number of vehicles that reached
    their street end. ``state``: 1 moving, 2 queued at exit."""
    arrived = 0
    for i in range(state.shape[0]):
        if state[i] == 2:
            waiting[i] += dt
        elif state[i] == 1:
            s = street[i]
            n = occ[s]
            if n < light_below[s]:
                v = speeds[0]
            elif n < heavy_from[s]:
                v = speeds[1]
            else:
                v = speeds[2]
            p = pos[i] + v * dt
            if p >= length[s] - eps:
                p = length[s]
                state[i] = 2
                arrived += 1
            pos[i] = p
    return arrived


def _advance_np(state, pos, street, occ, length, light_below, heavy_from,
                speeds, dt, waiting, eps):
    queued = state == 2
    waiting[queued] += dt
    moving = np.flatnonzero(state == 1)
    if moving.size == 0:
        return 0
    s = street[moving]
    n = occ[s]
    v = np.where(n < light_below[s], speeds[0],
                 np.where(n < heavy_from[s], speeds[1], speeds[2]))
    p = pos[moving] + v * dt
    done = p >= length[s] - eps
    p[done] = length[s][done]
    pos[moving] = p
    state[moving[done]] = 2
    return int(done.sum())


if USE_JIT:
    occupancy_many = _njit(cache=True, nogil=True)(_occupancy_many_loop)
    interval_ok = _njit(cache=True, nogil=True)(_interval_ok_loop)
    interval_apply = _njit(cache=True, nogil=True)(_interval_apply_loop)
    interval_remove = _njit(cache=True, nogil=True)(_interval_remove_loop)
    advance = _njit(cache=True, nogil=True)(_advance_loop)
    chain_dp = _njit(cache=True, nogil=True)(_chain_dp_loop)
else:
    occupancy_many = _occupancy_many_np
    interval_ok = _interval_ok_np
    interval_apply = _interval_apply_np
    interval_remove = _interval_remove_np
    advance = _advance_np
    chain_dp = _chain_dp_np

# explicit handles on both paths, for the equivalence tests and the benchmark
NUMPY_KERNELS = {
    "occupancy_many": _occupancy_many_np,
    "interval_ok": _interval_ok_np,
    "interval_apply": _interval_apply_np,
    "interval_remove": _interval_remove_np,
    "advance": _advance_np,
    "chain_dp": _chain_dp_np,
}
JIT_KERNELS = {
    "occupancy_many": occupancy_many,
    "interval_ok": interval_ok,
    "interval_apply": interval_apply,
    "interval_remove": interval_remove,
    "advance": advance,
    "chain_dp": chain_dp,
} if USE_JIT else None


def warmup():
    """Force compilation of the jitted kernels (no-op on the numpy path)."""
    if not USE_JIT:
        return
    a = np.zeros(4, dtype=np.int64)
    occupancy_many(a, a, a)
    big = np.full(4, 99, dtype=np.int64)
    interval_ok(a, a, a, big, 3, 1, 2, 1, 2, 3, 0, 2, True, a, a, 3, True)
    b = a.copy()
    c = a.copy()
    d = a.copy()
    g = a.copy()
    interval_apply(b, c, d, g, True, 0, 2)
    interval_remove(b, c, d, g, True, 0, 2)
    st = np.array([1, 2], dtype=np.int8)
    advance(st, np.zeros(2), np.zeros(2, dtype=np.int64), a,
            np.ones(4), a + 1, a + 2, np.ones(3), 1.0, np.zeros(2), 1e-9)
    grid = np.zeros((1, 4), dtype=np.int64)
    one = np.ones(1, dtype=np.int64)
    f = np.zeros((1, 1), dtype=np.int64)
    chain_dp(grid, grid, grid, grid + 99, grid, grid, grid, one * 3, one, one * 2, one, one * 2,
             one * 3, one * 3, -one, one * 3, np.zeros(1, dtype=np.int64),
             np.zeros(1, dtype=np.int64), np.zeros(1, dtype=np.int64), 2, 1, one,
             f, f.copy())
