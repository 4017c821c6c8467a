#!/usr/bin/env python3
"""Throughput comparison of the compiled decoder core vs the numpy fallback.

Run:  python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from polarq import rngstream
from polarq.alphabet import L3, L7, LInfMin
from polarq.backends import HAVE_COMPILED, get_backend
from polarq.backends.kernelspec import build_spec
from polarq.polarcode import PolarCode
from polarq.scl import PmRule


def bench(backend, spec, labels, keys, L, min_seconds=1.0):
    n_done, t0 = 0, time.perf_counter()
    while time.perf_counter() - t0 < min_seconds:
        backend.scl_batch(spec, labels, keys, L)
        n_done += labels.shape[0]
    return n_done / (time.perf_counter() - t0)


def main():
    rng = np.random.default_rng(0)
    cases = []
    for m in (7, 8):
        code = PolarCode(m, tuple(sorted(rng.choice(1 << m, 1 << (m - 1), replace=False))))
        n = code.n
        cases += [
            (f"n={n} L3  SC", code, L3(), rng.integers(0, 3, (256, n)), 1),
            (f"n={n} L3  SCL32", code, L3(), rng.integers(0, 3, (256, n)), 32),
            (f"n={n} L7  SCL32", code, L7(0.5), rng.integers(0, 7, (256, n)), 32),
            (f"n={n} float SCL32", code, LInfMin(), rng.normal(1, 2, (256, n)), 32),
        ]
    backends = [get_backend("py")] + ([get_backend("c")] if HAVE_COMPILED else [])
    print(f"{'case':>18} " + "".join(f"{b.name:>14}" for b in backends) + f"{'speedup':>10}")
    for name, code, alg, labels, L in cases:
        spec = build_spec(code, alg, PmRule())
        keys = rngstream.frame_keys(1, np.arange(labels.shape[0]))
        rates = [bench(b, spec, labels, keys, L) for b in backends]
        speed = f"{rates[-1] / rates[0]:9.1f}x" if len(rates) > 1 else ""
        print(f"{name:>18} " + "".join(f"{r:>11.0f} /s" for r in rates) + speed)


if __name__ == "__main__":
    main()
