"""Monte Carlo isometry and orthogonality of I_1, I_2, I_3 over several seeds.

    python3 scripts/chaos_isometry.py --seeds 5 --count 10000
"""
import argparse
import math

from anderson_chaos.cases import case_kernel
from anderson_chaos.chaos import isometry_experiment, smooth_test_kernels
from anderson_chaos.noise import GridSpec, build_noise_model


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", type=int, default=1)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--width", type=float, default=0.7)
    a = p.parse_args()
    m = build_noise_model(GridSpec(1.0, 2, 32.0, 64), case_kernel(a.case))
    kernels = smooth_test_kernels(m.grid, width=a.width)
    passed = 0
    for seed in range(a.seeds):
        r = isometry_experiment(kernels, m, seed, a.count)
        passed += r.passed()
        ratios = " ".join(f"{x:.3f}" for x in r.variance_ratio)
        print(f"seed {seed}: ratios {ratios}  max|corr| {r.max_cross_correlation:.4f} "
              f"(limit {5 / math.sqrt(a.count):.4f})  {'PASS' if r.passed() else 'FAIL'}")
    print(f"{passed}/{a.seeds} seeds pass")


if __name__ == "__main__":
    main()
