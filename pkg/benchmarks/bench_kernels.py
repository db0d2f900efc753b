"""Compare the numba kernels against the interpreted fallback.

    python benchmarks/bench_kernels.py [--trees 200] [--depth 10]

Each backend runs in its own interpreter because the switch is read at
import time (``ANTGP_DISABLE_NUMBA``).
"""

import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from antgp import _accel, ant_world, gp_core
n, depth, repeats = map(int, sys.argv[1:4])
trail = ant_world.santa_fe_trail()
trees = gp_core.ramped_trees(n, depth, ant_world.ANT_PRIMITIVES, np.random.default_rng(0))
t0 = time.perf_counter()
first = ant_world.evaluate_many(trees[:2], trail)
warm = time.perf_counter() - t0
times = []
for _ in range(repeats):
    t0 = time.perf_counter()
    fit = ant_world.evaluate_many(trees, trail)
    times.append(time.perf_counter() - t0)
print(json.dumps({"backend": _accel.backend_name(), "warmup": warm, "best": min(times),
                  "checksum": int(fit.sum()), "nodes": int(sum(t.size for t in trees))}))
"""


def run(disable, n, depth, repeats):
    env = dict(os.environ, ANTGP_DISABLE_NUMBA="1" if disable else "0")
    out = subprocess.run([sys.executable, "-c", CHILD, str(n), str(depth), str(repeats)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--depth", type=int, default=10)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    fast = run(False, args.trees, args.depth, args.repeats)
    slow = run(True, args.trees, args.depth, 1)
    assert fast["checksum"] == slow["checksum"], "backends disagree"
    print(f"{args.trees} ramped trees, depth <= {args.depth}, {fast['nodes']} nodes, Santa Fe, 400 steps")
    for r in (fast, slow):
        print(f"  {r['backend']:7s} {r['best'] * 1e3:10.1f} ms   (first call {r['warmup']:.2f} s)")
    print(f"  speedup {slow['best'] / fast['best']:.0f}x, checksum {fast['checksum']}")


if __name__ == "__main__":
    main()
