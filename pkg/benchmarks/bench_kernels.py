"""Compare the compiled kernels with their numpy fallbacks.

Run ``python3 benchmarks/bench_kernels.py``; prints the median wall time of
each kernel per backend and the speed-up.
"""
import argparse
import timeit

import numpy as np

from spectral_servo import kernels


def cases(rng):
    n = 20000
    idx = rng.integers(0, 64, size=(n, 3))
    theta = np.arccos(rng.uniform(-1, 1, n))
    phi = rng.uniform(0, 2 * np.pi, n)
    return {
        "wigner_d_stack(l=16)": lambda k: k.wigner_d_stack(17, 0.7),
        "wigner_d_stack(l=32)": lambda k: k.wigner_d_stack(33, 0.7),
        "voxel_occupancy(20k pts, 64^3)": lambda k: k.voxel_occupancy(idx, (64, 64, 64)),
        "egi_counts(20k normals, B=16)": lambda k: k.egi_counts(theta, phi, 16),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=7)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = kernels.BACKENDS
    print(f"backends: {', '.join(backends)}")
    print(f"{'kernel':34s}" + "".join(f"{b:>14s}" for b in backends) + "   speed-up")
    for name, fn in cases(rng).items():
        times = {}
        for b, mod in backends.items():
            number = 5
            t = timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)
            times[b] = float(np.median(t)) / number
        row = f"{name:34s}" + "".join(f"{times[b] * 1e3:11.3f} ms" for b in backends)
        if "compiled" in times:
            row += f"   {times['python'] / times['compiled']:6.1f}x"
        print(row)


if __name__ == "__main__":
    main()
