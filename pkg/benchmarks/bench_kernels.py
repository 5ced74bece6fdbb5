"""Compare the njit kernels with the numpy fallback on one scheduling load.

Each mode runs in its own interpreter because ``CUTC_NO_JIT`` is read at
import time:

    python3 benchmarks/bench_kernels.py [--trials N]
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
from cutc import _kernels
from cutc.preprocess import RouteCache, build_instance
from cutc.solver import solve
from cutc.synth import background_traffic, grid_network, random_demand

trials = int(sys.argv[1])
t0 = time.perf_counter()
_kernels.warmup()
warm = time.perf_counter() - t0
net = grid_network(seed=0)
bg = background_traffic(net, 200, 60, seed=1)
cache = RouteCache(net)
insts = [build_instance(net, random_demand(net, 5, 100.0, seed=t), bg, cache=cache,
                        protect_simulated=True, depart_at=10 + t) for t in range(trials)]
t0 = time.perf_counter()
nodes = 0
for inst in insts:
    s = solve(inst, node_limit=4000)
    nodes += s.stats["nodes"]
print(json.dumps({"jit": _kernels.USE_JIT, "warmup": warm,
                  "solve": time.perf_counter() - t0, "nodes": nodes}))
"""


def measure(no_jit: bool, trials: int) -> dict:
    env = dict(os.environ, CUTC_NO_JIT="1" if no_jit else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, str(trials)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10, help="instances solved per mode")
    args = ap.parse_args()
    jit, plain = measure(False, args.trials), measure(True, args.trials)
    assert jit["nodes"] == plain["nodes"], "kernels disagree on search effort"
    print(f"{'mode':8} {'warmup s':>9} {'solve s':>9} {'nodes':>8}")
    for name, r in (("njit", jit), ("numpy", plain)):
        print(f"{name:8} {r['warmup']:9.2f} {r['solve']:9.2f} {r['nodes']:8d}")
    print(f"speedup (solve only): {plain['solve'] / jit['solve']:.1f}x")


if __name__ == "__main__":
    main()
