"""Empirical covariance of the cell masses against the cell-integral targets.

    python3 scripts/noise_fidelity.py --n-t 16 --n-x 32 --count 20000 --case 2
"""
import argparse
import time

from anderson_chaos.cases import case_kernel
from anderson_chaos.noise import GridSpec, build_noise_model, covariance_fidelity


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", type=int, default=2)
    p.add_argument("--n-t", type=int, default=16)
    p.add_argument("--n-x", type=int, default=32)
    p.add_argument("--half-width", type=float, default=4.0)
    p.add_argument("--count", type=int, default=20_000)
    p.add_argument("--seeds", type=int, default=1)
    a = p.parse_args()
    m = build_noise_model(GridSpec(1.0, a.n_t, a.half_width, a.n_x), case_kernel(a.case))
    print(f"jitter time={m.metadata['jitter_time']:.2e} space={m.metadata['jitter_space']:.2e}")
    for seed in range(a.seeds):
        t = time.perf_counter()
        r = covariance_fidelity(m, seed, a.count)
        print(f"seed {seed}: max|z|={r.max_abs_z:.2f} violations={r.violations}/{r.entries} "
              f"{'PASS' if r.passed else 'FAIL'} ({time.perf_counter() - t:.1f}s)")


if __name__ == "__main__":
    main()
