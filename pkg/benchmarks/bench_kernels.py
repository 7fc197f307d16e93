"""Compare the compiled and generated-Python kernels.

Times the right-hand side of a prolonged lifted field (the inner loop of
jet transport) at several batch sizes, plus one full transport.

    python3 benchmarks/bench_kernels.py [--order 3] [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from holojet import _backend
from holojet.compile import Program
from holojet.scene import load_scene
from holojet.transport import segment_prolongation, transport_many


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--order", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    scene = load_scene("twisted", validate=False)
    c, p = scene.connection, scene.path("loop")
    V, prog = segment_prolongation(c, p.segments[0], args.order)
    inputs = prog.inputs
    print(f"program: {len(prog)} instructions, {prog.n_in} inputs, {prog.n_out} outputs")
    backends = _backend.available()
    if "cython" not in backends:
        print("compiled kernel not built; only the Python fallback is available")
    progs = {b: Program(prog.exprs, inputs, backend=b) for b in backends}
    rng = np.random.default_rng(0)
    print(f"{'batch':>8} " + " ".join(f"{b:>12}" for b in backends) + ("   speedup" if len(backends) > 1 else ""))
    for n in (1, 16, 256, 4096):
        X = rng.uniform(-0.5, 0.5, (n, prog.n_in))
        X[:, 0] = 0.5
        ref = None
        row = []
        for b in backends:
            out = progs[b].batch(X)
            ref = out if ref is None else ref
            assert np.allclose(out, ref, rtol=1e-13, atol=1e-13)
            reps = max(1, 20000 // n)
            row.append(best_of(lambda: [progs[b].batch(X) for _ in range(reps)], args.repeat) / reps)
        line = f"{n:>8} " + " ".join(f"{t * 1e6:>10.1f}us" for t in row)
        if len(row) > 1:
            line += f"   {row[0] / row[1]:>6.1f}x"
        print(line)

    J = np.zeros((9, prog.n_in - 1))
    J[:, 0:2] = p.start
    J[:, 2:] = rng.uniform(-1, 1, (9, prog.n_in - 3))
    for b in backends:
        orig = _backend.NAME
        _backend.NAME = b
        segment_prolongation.cache_clear()
        t = best_of(lambda: transport_many(c, p, J, args.order), max(1, args.repeat // 2))
        _backend.NAME = orig
        print(f"transport of 9 jets at order {args.order} with {b}: {t * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
