"""Ibragimov-Lifshits partial integrals for model paths against i.i.d. Gaussian paths.

Paths with i.i.d. N(0,1) values on the same radius grid isolate the
quadrature behaviour of the statistic from the correlation of F^_theta
across theta.

    python3 scripts/il_diagnostics.py --case 1 --paths 100 --seeds 100 101
"""
import argparse

import numpy as np

from anderson_chaos.cases import case_model
from anderson_chaos.fields import AverageSeries, geometric_grid, sample_paths
from anderson_chaos.limits import T_GRID, il_statistic


def summary(label, series):
    il = il_statistic(series, T_GRID)
    i32, i64 = il.partial_integral(32.0), il.partial_integral(64.0)
    sup = " ".join(f"{v:.3f}" for v in il.sup_mean)
    print(f"{label:22s} sup {sup}  nonincreasing={il.nonincreasing()}  change {100 * abs(i64 - i32) / i32:.1f}%")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", type=int, default=1)
    p.add_argument("--paths", type=int, default=100)
    p.add_argument("--seeds", type=int, nargs="+", default=[100])
    a = p.parse_args()
    radii = geometric_grid(1.0, 64.0, 1.1, extra=(2.0,) + T_GRID)
    model = case_model(a.case)
    for seed in a.seeds:
        summary(f"case {a.case} seed {seed}", sample_paths(model, radii, seed, a.paths))
        rng = np.random.default_rng(seed)
        iid = AverageSeries(radii, rng.standard_normal((a.paths, len(radii))), np.ones(len(radii)), seed,
                            np.arange(a.paths))
        summary(f"iid seed {seed}", iid)
    # lag-one correlation of F^ along the radius grid
    s = sample_paths(model, radii, a.seeds[0], a.paths)
    c = [np.corrcoef(s.values[:, k], s.values[:, k + 1])[0, 1] for k in range(len(radii) - 1)]
    print(f"median corr(F^_theta, F^_1.1theta) = {np.median(c):.3f}")


if __name__ == "__main__":
    main()
