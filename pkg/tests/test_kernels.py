"""The compiled loops and the numpy fallbacks must agree bit for bit."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cutc import _kernels

NP = _kernels.NUMPY_KERNELS
# the uncompiled loop bodies are plain Python and always available
LOOPS = {
    "occupancy_many": _kernels._occupancy_many_loop,
    "interval_ok": _kernels._interval_ok_loop,
    "interval_apply": _kernels._interval_apply_loop,
    "interval_remove": _kernels._interval_remove_loop,
    "advance": _kernels._advance_loop,
    "chain_dp": _kernels._chain_dp_loop,
}
IMPLS = [LOOPS] + ([_kernels.JIT_KERNELS] if _kernels.USE_JIT else [])

W = 24


def arr(xs):
    return np.asarray(xs, dtype=np.int64)


@given(st.lists(st.tuples(st.integers(0, 20), st.integers(1, 8)), max_size=20))
def test_occupancy_many(evs):
    enters = np.sort(arr([a for a, _ in evs]))
    exits = np.sort(arr([a + d for a, d in evs]))
    ts = np.arange(30, dtype=np.int64)
    want = NP["occupancy_many"](enters, exits, ts)
    for impl in IMPLS:
        assert (impl["occupancy_many"](enters, exits, ts) == want).all()


rows = st.lists(st.integers(0, 4), min_size=W, max_size=W)


@st.composite
def street_state(draw):
    occ = arr(draw(rows))
    floor = arr(draw(st.lists(st.integers(0, 2), min_size=W, max_size=W)))
    guarded = arr(draw(st.lists(st.integers(0, 1), min_size=W, max_size=W)))
    min_exit = arr([t + draw(st.integers(0, 8)) for t in range(W)])
    cap = draw(st.integers(1, 5))
    lb = draw(st.integers(1, cap))
    hf = draw(st.integers(lb, cap))
    tl = draw(st.integers(1, 3))
    tm = tl + draw(st.integers(0, 2))
    th = tm + draw(st.integers(0, 3))
    e = draw(st.integers(0, W - 10))
    x = e + draw(st.integers(1, 9))
    ring_occ = arr(draw(rows))
    ring_enter = arr(draw(st.lists(st.integers(0, 1), min_size=W, max_size=W)))
    return (occ, floor, guarded, min_exit, cap, lb, hf, tl, tm, th, e, x,
            draw(st.booleans()), ring_occ, ring_enter, draw(st.integers(1, 6)),
            draw(st.booleans()))


@given(street_state())
def test_interval_ok(args):
    want = NP["interval_ok"](*args)
    for impl in IMPLS:
        assert impl["interval_ok"](*args) == want


@given(street_state())
def test_interval_apply_and_remove(args):
    occ, _, _, _, _, _, _, _, _, _, e, x, _, ring_occ, ring_enter, _, has_ring = args
    grounded = (occ % 2).copy()

    def fresh():
        return occ.copy(), grounded.copy(), ring_occ.copy(), ring_enter.copy()

    ref = fresh()
    d_ref = NP["interval_apply"](*ref, has_ring, e, x)
    for impl in IMPLS:
        got = fresh()
        assert impl["interval_apply"](*got, has_ring, e, x) == d_ref
        assert all((a == b).all() for a, b in zip(got, ref))
        impl["interval_remove"](*got, has_ring, e, x)
        assert all((a == b).all() for a, b in zip(got, fresh()))


@st.composite
def dp_case(draw):
    ns, nr, H = 4, 1, 30
    occ = arr([draw(st.lists(st.integers(0, 3), min_size=H + 2, max_size=H + 2))
               for _ in range(ns)])
    floor = arr([draw(st.lists(st.integers(0, 1), min_size=H + 2, max_size=H + 2))
                 for _ in range(ns)])
    guarded = arr([draw(st.lists(st.integers(0, 1), min_size=H + 2, max_size=H + 2))
                   for _ in range(ns)])
    min_exit = arr([[t + draw(st.integers(1, 12)) for t in range(H + 2)] for _ in range(ns)])
    grounded = arr([draw(st.lists(st.integers(0, 1), min_size=H + 2, max_size=H + 2))
                    for _ in range(ns)])
    ring_occ = arr([draw(st.lists(st.integers(0, 3), min_size=H + 2, max_size=H + 2))])
    ring_enter = arr([draw(st.lists(st.integers(0, 1), min_size=H + 2, max_size=H + 2))])
    cap = arr([draw(st.integers(2, 5)) for _ in range(ns)])
    lb = arr([draw(st.integers(1, int(c))) for c in cap])
    hf = arr([draw(st.integers(int(a), int(c))) for a, c in zip(lb, cap)])
    tl = arr([draw(st.integers(1, 3)) for _ in range(ns)])
    tm = tl + arr([draw(st.integers(0, 2)) for _ in range(ns)])
    th = tm + arr([draw(st.integers(0, 2)) for _ in range(ns)])
    mt = th + arr([draw(st.integers(0, 4)) for _ in range(ns)])
    ring_of = arr([draw(st.sampled_from([-1, 0])) for _ in range(ns)])
    ring_cap = arr([draw(st.integers(1, 5))])
    L = draw(st.integers(1, 3))
    route = arr(draw(st.permutations(range(ns)))[:L])
    lo, hi, t = [], [], draw(st.integers(0, 3))
    for i in range(L):
        a = t if i == 0 else t + draw(st.integers(0, 2))
        lo.append(a)
        hi.append(a if i == 0 else a + draw(st.integers(0, 6)))
        t = a + 1
    unit = draw(st.integers(1, 6))
    share = arr([draw(st.integers(0, unit)) for _ in range(L)])
    return (occ, floor, guarded, min_exit, grounded, ring_occ, ring_enter, cap, lb, hf, tl, tm, th,
            mt, ring_of, ring_cap, route, arr(lo), arr(hi), H, unit, share)


@given(dp_case())
def test_chain_dp(args):
    lo, hi = args[17], args[18]
    width = int((hi - lo).max()) + 1

    def run(fn):
        f = np.zeros((len(lo), width), dtype=np.int64)
        nxt = np.zeros_like(f)
        fn(*args, f, nxt)
        return f, nxt

    f_ref, n_ref = run(NP["chain_dp"])
    for impl in IMPLS:
        f, nxt = run(impl["chain_dp"])
        assert (f == f_ref).all() and (nxt == n_ref).all()


@given(st.integers(0, 10_000))
def test_advance(seed):
    rng = np.random.default_rng(seed)
    n, ns = 12, 4
    state = rng.integers(0, 4, n).astype(np.int8)
    street = rng.integers(0, ns, n).astype(np.int64)
    length = rng.uniform(5, 60, ns)
    pos = rng.uniform(0, 1, n) * length[street]
    occ = rng.integers(0, 5, ns).astype(np.int64)
    lb = np.full(ns, 2, dtype=np.int64)
    hf = np.full(ns, 3, dtype=np.int64)
    speeds = np.array([12.5, 25 / 3, 25 / 6])

    def go(fn):
        s, p, w = state.copy(), pos.copy(), np.zeros(n)
        k = fn(s, p, street, occ, length, lb, hf, speeds, 1.0, w, 1e-9)
        return k, s, p, w

    ref = go(NP["advance"])
    for impl in IMPLS:
        got = go(impl["advance"])
        assert got[0] == ref[0]
        assert all(np.array_equal(a, b) for a, b in zip(got[1:], ref[1:]))


def test_env_switch_selects_numpy(monkeypatch):
    import importlib
    monkeypatch.setenv("CUTC_NO_JIT", "1")
    mod = importlib.reload(_kernels)
    try:
        assert not mod.USE_JIT and mod.chain_dp is mod._chain_dp_np
    finally:
        monkeypatch.delenv("CUTC_NO_JIT")
        importlib.reload(_kernels)


@pytest.mark.skipif(not _kernels.USE_JIT, reason="numba unavailable")
def test_warmup_compiles():
    _kernels.warmup()
