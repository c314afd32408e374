"""Timing of the compiled and pure-Python bounds kernels.

Runs the bootstrap workload (one call per multinomial resample) with both
implementations on the same resamples, checks that they agree, and prints
the time per resample.

    python benchmarks/bench_kernels.py --n 4000 --B 500
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from vaxstrata import _kernels_py
from vaxstrata.bounds import _make_cell
from vaxstrata.simulation import DgpSpec, generate

try:
    from vaxstrata import _kernels as _compiled
except ImportError:  # pragma: no cover - extension not built
    _compiled = None


def workload(n: int, B: int, seed: int):
    data = generate(DgpSpec("asymptotics", n=n, seed=seed))
    cell = _make_cell(data, np.arange(data.n))
    rng = np.random.default_rng(seed)
    counts = np.stack([np.bincount(rng.integers(0, n, n), minlength=n) for _ in range(B)]).astype(np.int64)
    return cell, counts


def timed(fn, repeat: int) -> tuple[float, np.ndarray]:
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=4000)
    p.add_argument("--B", type=int, default=500)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    a = p.parse_args(argv)
    cell, counts = workload(a.n, a.B, a.seed)
    args = (cell.z, cell.s, cell.y, cell.order10)
    impls = {"python": _kernels_py}
    if _compiled is not None:
        impls["compiled"] = _compiled
    results, batch = {}, {}
    for name, mod in impls.items():
        t_single, _ = timed(lambda: [mod.bounds_from_counts(c, *args) for c in counts], a.repeat)
        t_batch, out = timed(lambda: mod.bounds_batch(counts, *args), a.repeat)
        results[name], batch[name] = out, t_batch
        print(f"{name:>9}: {1e6 * t_single / a.B:9.1f} us/resample (per call), "
              f"{1e6 * t_batch / a.B:9.1f} us/resample (batch)")
    if "compiled" in results:
        diff = float(np.max(np.abs(results["compiled"] - results["python"])))
        print(f"max |compiled - python| = {diff:.3e}")
        print(f"speed-up (batch): {batch['python'] / batch['compiled']:.1f}x")
    else:
        print("compiled extension not available")


if __name__ == "__main__":
    main()
