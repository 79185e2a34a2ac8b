"""Timing comparison of the compiled and pure-Python kernel backends.

Each backend runs in its own subprocess (the choice is fixed at import time
via QFLOW_BACKEND), timing the same workloads: a dense single-qubit gate
sweep, a keyed-rotation cascade, and a full transform round trip.

    python3 benchmarks/bench_kernels.py [--qubits N] [--repeats K]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json
import sys
import time

import numpy as np

from qflow import backend_name
from qflow.engine import (apply_gate, apply_keyed_ry, iqft_program,
                          qft_program, run_program)
from qflow import gates as g
from qflow.state import AmplitudeState

n = int(sys.argv[1])
repeats = int(sys.argv[2])
rng = np.random.default_rng(7)
v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
v /= np.linalg.norm(v)


def best_of(fn):
    times = []
    for _ in range(repeats):
        st = AmplitudeState.from_vector(v.copy())
        t0 = time.perf_counter()
        fn(st)
        times.append(time.perf_counter() - t0)
    return min(times)


def gate_sweep(st):
    for q in range(st.n):
        apply_gate(st, g.h(q))
    for q in range(st.n - 1):
        apply_gate(st, g.cnot(q, q + 1))


def keyed_rotation(st):
    keys = min(6, st.n - 1)
    angles = np.linspace(0.1, 1.0, 1 << keys)
    apply_keyed_ry(st, target=st.n - 1 - keys, key_start=st.n - keys,
                   key_count=keys, angles=angles)


def transform_roundtrip(st):
    run_program(st, qft_program(st.n))
    run_program(st, iqft_program(st.n))


print(json.dumps({
    "backend": backend_name,
    "gate_sweep": best_of(gate_sweep),
    "keyed_rotation": best_of(keyed_rotation),
    "transform_roundtrip": best_of(transform_roundtrip),
}))
"""


def run_backend(name, n, repeats):
    env = dict(os.environ, QFLOW_BACKEND=name)
    out = subprocess.run(
        [sys.executable, "-c", WORKER, str(n), str(repeats)],
        capture_output=True, text=True, env=env)
    if out.returncode != 0:
        print(f"{name} backend unavailable:\n{out.stderr.strip()}",
              file=sys.stderr)
        return None
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, default=18)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    results = {}
    for name in ("python", "compiled"):
        got = run_backend(name, args.qubits, args.repeats)
        if got is not None:
            results[name] = got

    if not results:
        sys.exit("no backend produced results")

    workloads = ("gate_sweep", "keyed_rotation", "transform_roundtrip")
    print(f"{args.qubits} qubits, best of {args.repeats}")
    header = f"{'workload':<20}" + "".join(f"{b:>12}" for b in results)
    if len(results) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for w in workloads:
        row = f"{w:<20}"
        for b in results:
            row += f"{results[b][w] * 1e3:>10.1f}ms"
        if len(results) == 2:
            row += f"{results['python'][w] / results['compiled'][w]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
