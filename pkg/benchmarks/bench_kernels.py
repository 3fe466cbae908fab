"""Compare the numba kernels with their numpy counterparts.

    python3 benchmarks/bench_kernels.py [--qubits 4 8 12] [--repeat 20]

Each kernel is called once before timing so JIT compilation is excluded.
"""

import argparse
import timeit

import numpy as np

from privsense import _kernels
from privsense.ghz import stabilizer_generators


def cases(n, rng):
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    psi /= np.linalg.norm(psi)
    dim = min(1 << n, 1 << 10)
    nr = dim.bit_length() - 1
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho)
    xm, zm, ph = stabilizer_generators(n)[0].masks
    xr, zr, phr = stabilizer_generators(max(nr, 2))[0].masks
    words = rng.integers(0, 1 << n, size=200_000)
    w = rng.normal(size=n)
    return {
        "pauli_expectation_pure": lambda k: k(psi, xm, zm, ph),
        f"pauli_expectation_mixed[{nr}q]": lambda k: k(rho, xr, zr, phr),
        "basis_phase_weights": lambda k: k(n, w),
        "parity[200k]": lambda k: k(words),
        "bit_table[200k]": lambda k: k(words, n),
    }


def kernel_pair(label):
    base = label.split("[")[0]
    return getattr(_kernels, base + "_np"), getattr(_kernels, base + "_nb", None)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--qubits", type=int, nargs="+", default=[4, 8, 12])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba unavailable or disabled; only the numpy path can be timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'n':>3s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for n in args.qubits:
        for label, call in cases(n, rng).items():
            knp, knb = kernel_pair(label)
            t_np = min(timeit.repeat(lambda: call(knp), number=1, repeat=args.repeat)) * 1e3
            if knb is None:
                print(f"{label:34s} {n:3d} {t_np:10.3f} {'-':>10s} {'-':>8s}")
                continue
            call(knb)
            t_nb = min(timeit.repeat(lambda: call(knb), number=1, repeat=args.repeat)) * 1e3
            print(f"{label:34s} {n:3d} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
