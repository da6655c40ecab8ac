"""Command line entry point: ``anderson-chaos {validate,run,report}``.

Experiments are declared in TOML files.  The schema (version 1) is::

    [model]        case | equation, d, t0, truncation, anchor_origin
    [model.temporal]  kind, scale, rate, hurst
    [model.spatial]   kind, scale, length, alpha
    [grid]         n_t, dx, r_max, half_width (optional)
    [experiment]   kind + kind-specific keys (see ``EXPERIMENT_KEYS``)
    [seeds]        base
    [replicas]     count
    [output]       dir

``run`` writes ``report.json``, CSV tables and ``seeds.json`` into the output
directory and exits with 0 when every declared threshold passes, 1 when one
fails, 2 for an invalid config and 3 for a runtime error (``error.json``).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .cases import CASES, case_kernel
from .covariance import (
    a_functional_fit,
    covariance_decay_fit,
    fourier_cross_check,
    variance_fit,
    wave_smoothing_bound,
)
from .errors import AndersonError
from .fields import ModelSpec, assemble, default_half_width, geometric_grid, sample_paths
from .kernels import CorrelationKernel, SpatialKernel, TemporalKernel, dalang_check
from .limits import asclt_bound_check, clt_experiment, il_statistic, log_average_measure
from .noise import CACHE_ENV, GridSpec

SCHEMA_VERSION = 1
EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
DESK_CELLS = 4000

EXPERIMENT_KEYS = {
    "validate": {},
    "variance": {"radii": "list", "target": "float"},
    "covariance": {"theta": "list", "ratios": "list", "target": "float"},
    "clt": {"radii": "list", "ks_final_max": "float"},
    "asclt": {"T_values": "list", "n_seeds": "int", "gap_final_max": "float"},
    "criterion": {"t_grid": "list", "n_paths": "int"},
    "bound-check": {"betas": "list"},
}


class ConfigError(AndersonError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    raw: dict
    spec: ModelSpec | None
    experiment: dict
    seed: int
    replicas: int
    out: Path
    warnings: list = field(default_factory=list)
    cost: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.experiment["kind"]


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _build_kernel(model: dict, d: int, errors: list):
    base = case_kernel(model["case"], d) if "case" in model else None
    t = dict(asdict(base.temporal)) if base else {}
    s = dict(asdict(base.spatial)) if base else {}
    t.update(model.get("temporal", {}))
    s.update(model.get("spatial", {}))
    s["dim"] = d
    try:
        kernel = CorrelationKernel(TemporalKernel(**t), SpatialKernel(**s))
    except TypeError as exc:
        errors.append(f"model kernel: {exc}")
        return None
    problems = kernel.violations()
    errors.extend(problems)
    if not problems and not dalang_check(kernel).satisfied:
        errors.append("spatial spectral measure violates Dalang's condition int mu(dxi)/(1+|xi|^2) < inf")
    return kernel


def validate_config(raw: dict, seed: int | None = None, out: str | None = None) -> RunConfig:
    """Check every block and collect all problems before raising :class:`ConfigError`."""
    errors, warnings = [], []
    model = dict(raw.get("model", {}))
    exp = dict(raw.get("experiment", {}))
    kind = exp.get("kind")
    # the bound checker works on exponents alone; a model block is optional there
    check_model = kind != "bound-check" or bool(model)
    if check_model:
        if "case" in model and model["case"] not in CASES:
            errors.append(f"model.case must be one of {sorted(CASES)}")
            model.pop("case")
        equation = str(model.get("equation", CASES[model["case"]][0] if "case" in model else "")).lower()
        d = int(model.get("d", 1))
        t0 = float(model.get("t0", 1.0))
        truncation = int(model.get("truncation", 3))
        if equation not in ("heat", "pam", "wave", "ham"):
            errors.append(f"model.equation must be heat/pam or wave/ham, got {equation!r}")
        if equation in ("wave", "ham") and d > 2:
            errors.append(f"unsupported configuration: the wave model is restricted to d = 1, 2 (got d = {d})")
        if d < 1:
            errors.append("model.d must be >= 1")
        if not t0 > 0:
            errors.append("model.t0 must be > 0")
        if not 0 <= truncation <= 4:
            errors.append("model.truncation must be in 0..4")
        kernel = _build_kernel(model, max(d, 1), errors)
    else:
        kernel, equation, d, t0, truncation = None, "", 1, 1.0, 0

    if kind not in EXPERIMENT_KEYS:
        errors.append(f"experiment.kind must be one of {sorted(EXPERIMENT_KEYS)}, got {kind!r}")
    else:
        for key, typ in EXPERIMENT_KEYS[kind].items():
            if key not in exp:
                errors.append(f"experiment.{key} is required for kind={kind}")
            elif typ == "list" and not (isinstance(exp[key], list) and exp[key]):
                errors.append(f"experiment.{key} must be a non-empty list")
    if kind == "bound-check":
        betas = exp.get("betas", [])
        if len(betas) != 3 or any(not isinstance(b, (int, float)) or b <= 0 for b in betas):
            errors.append("experiment.betas must hold three positive exponents")
    if kind == "asclt" and float(exp.get("ratio", 1.1)) > 1.2:
        errors.append("experiment.ratio must be <= 1.2 for logarithmic averaging")
    if kind == "criterion" and int(exp.get("n_paths", 0)) < 50:
        errors.append("experiment.n_paths must be >= 50")

    replicas = int(raw.get("replicas", {}).get("count", 0))
    if kind == "clt" and replicas < 1000:
        errors.append("replicas.count must be >= 1000 for the CLT experiment")

    grid_raw = raw.get("grid", {})
    r_needed = _max_radius(kind, exp)
    spec = None
    needs_model = kind not in ("bound-check", "validate", None)
    if needs_model and not errors:
        try:
            dx = float(grid_raw.get("dx", 1.0))
            r_max = float(grid_raw.get("r_max", r_needed))
            half = float(grid_raw.get("half_width", math.ceil(default_half_width(equation, r_max, t0) / dx) * dx))
            grid = GridSpec(t0, int(grid_raw.get("n_t", 5)), half, int(round(2 * half / dx)), d)
            if r_needed > r_max:
                errors.append(f"experiment radii reach {r_needed} > grid.r_max = {r_max}")
            grid.validate_padding(r_max)
            spec = ModelSpec(equation, kernel, grid, truncation, bool(model.get("anchor_origin", False)))
        except AndersonError as exc:
            errors.append(str(exc))
    if errors:
        raise ConfigError(errors)

    cost = {}
    if spec is not None:
        n = spec.grid.n_cells
        cost = {"cells": n, "dense_bytes": 8 * n * n * 6}
        if n > DESK_CELLS:
            warnings.append(f"{n} cells exceed the desk-scale budget of {DESK_CELLS}; expect long runtimes")
    seed_val = int(seed if seed is not None else raw.get("seeds", {}).get("base", 0))
    out_dir = Path(out or raw.get("output", {}).get("dir", "runs/default"))
    return RunConfig(raw, spec, exp, seed_val, replicas, out_dir, warnings, cost)


def _max_radius(kind, exp) -> float:
    if kind in ("variance", "clt"):
        return float(max(exp.get("radii", [1.0])))
    if kind == "covariance":
        r = max(float(t) * float(q) for t in exp.get("theta", [1]) for q in exp.get("ratios", [1]))
        return max([r] + [float(x) for x in exp.get("a_radii", [])])
    if kind == "asclt":
        return float(max(exp.get("T_values", [1.0])))
    if kind == "criterion":
        return float(max(exp.get("t_grid", [1.0])))
    return 1.0


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _exp_validate(cfg, out, workers):
    model = cfg.raw.get("model", {})
    d = int(model.get("d", 1))
    kernel = _build_kernel(model, d, [])
    res = dalang_check(kernel)
    return {"dalang_integral": float(res.integral_estimate), "dalang_satisfied": bool(res.satisfied)}, {}, []


def _exp_variance(cfg, out, workers):
    e = cfg.experiment
    model = assemble(cfg.spec)
    radii = [float(r) for r in e["radii"]]
    fit = variance_fit(model, radii, float(e["target"]), float(e.get("tolerance", 0.1)))
    _write_csv(out / "variance.csv", ["R", "sigma_R"], zip(fit.abscissas, fit.values))
    return {"fit": fit.to_dict()}, {"slope_in_band": fit.passed}, []


def _exp_covariance(cfg, out, workers):
    e = cfg.experiment
    model = assemble(cfg.spec)
    tol = float(e.get("tolerance", 0.1))
    pairs = [(float(t), float(t) * float(q)) for t in e["theta"] for q in e["ratios"]]
    fit = covariance_decay_fit(model, pairs, float(e["target"]), tol)
    _write_csv(out / "covariance.csv", ["theta", "w", "ratio", "cov"],
               [(t, w, t / w, v) for (t, w), v in zip(pairs, fit.values)])
    results, checks = {"fit": fit.to_dict()}, {"covariance_exponent": fit.passed}
    if "a_radii" in e:
        afit = a_functional_fit(model, [float(r) for r in e["a_radii"]], float(e["a_target"]),
                                float(e.get("a_tolerance", 0.1)))
        _write_csv(out / "a_functional.csv", ["R", "A"], zip(afit.abscissas, afit.values))
        results["a_fit"] = afit.to_dict()
        checks["a_functional_exponent"] = afit.passed
    if "fourier_pairs" in e:
        rows = _map(lambda p: fourier_cross_check(model, float(p[0]), float(p[1])), e["fourier_pairs"], workers)
        rtol = float(e.get("fourier_rtol", 0.02))
        _write_csv(out / "fourier.csv", ["theta", "w", "chaos_first", "fourier_first", "relative_gap"],
                   [(r.theta, r.w, r.chaos_value, r.fourier_value, r.relative_gap) for r in rows])
        results["fourier_max_gap"] = max(r.relative_gap for r in rows)
        checks["fourier_agreement"] = results["fourier_max_gap"] <= rtol
    return results, checks, []


def _exp_clt(cfg, out, workers):
    e = cfg.experiment
    model = assemble(cfg.spec)
    radii = [float(r) for r in e["radii"]]
    res = clt_experiment(model, radii, cfg.replicas, seed=cfg.seed,
                         target_exponent=float(e.get("target", 0.5)))
    _write_csv(out / "clt.csv", ["R", "ks", "w1", "w1_se"], zip(res.radii, res.ks, res.w1, res.w1_se))
    checks = {"ks_strictly_decreasing": res.ks_strictly_decreasing,
              "ks_final_below": bool(res.ks[-1] < float(e["ks_final_max"]))}
    results = {"clt": res.to_dict()}
    if e.get("control", False):
        spec1 = ModelSpec(cfg.spec.equation, cfg.spec.kernel, cfg.spec.grid, 1, cfg.spec.anchor_origin)
        ctrl = clt_experiment(assemble(spec1), radii, cfg.replicas, seed=cfg.seed)
        _write_csv(out / "clt_control.csv", ["R", "ks", "w1", "w1_se"], zip(ctrl.radii, ctrl.ks, ctrl.w1, ctrl.w1_se))
        results["control"] = ctrl.to_dict()
        checks["control_at_noise_floor"] = bool(np.all(ctrl.ks < ctrl.noise_floor))
    return results, checks, [{"seed": cfg.seed, "indices": [0, cfg.replicas - 1]}]


def _exp_asclt(cfg, out, workers):
    e = cfg.experiment
    model = assemble(cfg.spec)
    Ts = [float(t) for t in e["T_values"]]
    radii = geometric_grid(1.0, max(Ts), float(e.get("ratio", 1.1)), extra=Ts)
    seeds = [cfg.seed + k for k in range(int(e["n_seeds"]))]

    def one(seed):
        series = sample_paths(model, radii, seed, 1)
        return [log_average_measure(series, T).sup_gap for T in Ts]

    gaps = np.array(_map(one, seeds, workers))
    _write_csv(out / "asclt.csv", ["seed"] + [f"gap_T{T:g}" for T in Ts],
               [[s] + list(g) for s, g in zip(seeds, gaps)])
    decreasing = int(np.sum(gaps[:, -1] < gaps[:, 0]))
    need = int(e.get("min_decreasing", math.ceil(0.8 * len(seeds))))
    checks = {"gap_decreases": decreasing >= need,
              "final_gap_below": bool(np.all(gaps[:, -1] < float(e["gap_final_max"])))}
    return ({"gaps": gaps.tolist(), "T_values": Ts, "n_decreasing": decreasing}, checks,
            [{"seed": s, "indices": [0, 0]} for s in seeds])


def _exp_criterion(cfg, out, workers):
    e = cfg.experiment
    model = assemble(cfg.spec)
    t_grid = [float(t) for t in e["t_grid"]]
    radii = geometric_grid(1.0, max(t_grid), float(e.get("ratio", 1.1)), extra=[2.0] + t_grid)
    series = sample_paths(model, radii, cfg.seed, int(e["n_paths"]))
    s_max, step = float(e.get("s_max", 3.0)), float(e.get("s_step", 0.25))
    s_grid = np.round(np.arange(-s_max, s_max + step / 2, step), 10)
    il = il_statistic(series, t_grid, s_grid)
    t_half = t_grid[-2] if len(t_grid) > 1 else t_grid[-1]
    i_half, i_full = il.partial_integral(t_half), il.partial_integral(t_grid[-1])
    change = abs(i_full - i_half) / i_half
    _write_csv(out / "il.csv", ["t", "sup_mean", "sup_se"], zip(il.t_grid, il.sup_mean, il.sup_se))
    checks = {"sup_nonincreasing": il.nonincreasing(float(e.get("n_se", 2.0))),
              "partial_integral_cauchy": change < float(e.get("cauchy_rtol", 0.05))}
    results = {"sup_mean": il.sup_mean.tolist(), "sup_se": il.sup_se.tolist(),
               "partial_integrals": [i_half, i_full], "relative_change": change}
    return results, checks, [{"seed": cfg.seed, "indices": [0, int(e["n_paths"]) - 1]}]


def _exp_bound_check(cfg, out, workers):
    e = cfg.experiment
    b1, b2, b3 = (float(b) for b in e["betas"])
    res = asclt_bound_check(b1, b2, b3, float(e.get("C1", 1.0)), float(e.get("C2", 1.0)), e.get("T_s"))
    results = asdict(res)
    checks = {}
    if "expect_finite" in e:
        checks["verdict_as_expected"] = res.finite == bool(e["expect_finite"])
    if e.get("smoothing_draws"):
        results["smoothing_violations"] = _smoothing_violations(int(e["smoothing_draws"]), cfg.seed)
        checks["smoothing_bound_holds"] = results["smoothing_violations"] == 0
    return results, checks, []


def _smoothing_violations(draws: int, seed: int) -> int:
    rng = np.random.default_rng(seed)
    bad = 0
    for d in (1, 2):
        for _ in range(draws):
            R, r = rng.uniform(0.1, 10), rng.uniform(0.01, 1.0)
            y = rng.uniform(-(R + 2), R + 2, size=d)
            bad += not wave_smoothing_bound(R, r, y, d)[2]
    return bad


RUNNERS = {
    "validate": _exp_validate, "variance": _exp_variance, "covariance": _exp_covariance,
    "clt": _exp_clt, "asclt": _exp_asclt, "criterion": _exp_criterion, "bound-check": _exp_bound_check,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else str(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def run_experiment(cfg: RunConfig, workers: int = 1) -> tuple[dict, int]:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    results, checks, streams = RUNNERS[cfg.kind](cfg, out, workers)
    manifest = {"base_seed": cfg.seed, "rng": "Philox(key=seed).jumped(index)", "streams": streams}
    report = {
        "schema_version": SCHEMA_VERSION,
        "code_version": __version__,
        "experiment": cfg.kind,
        "config": cfg.raw,
        "seed_manifest": manifest,
        "cost": cfg.cost,
        "warnings": cfg.warnings,
        "results": results,
        "checks": checks,
        "passed": all(checks.values()),
    }
    report = _jsonable(report)
    (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    (out / "seeds.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return report, EXIT_OK if report["passed"] else EXIT_THRESHOLD


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser():
    p = argparse.ArgumentParser(prog="anderson-chaos", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("validate", "run", "report"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name != "report")
        s.add_argument("--seed", type=int, default=None)
        s.add_argument("--workers", type=int, default=1)
        s.add_argument("--out", type=Path, default=None)
    return p


def _print(obj):
    print(json.dumps(_jsonable(obj), indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "report":
        out = args.out
        if out is None and args.config is not None:
            out = Path(load_config(args.config).get("output", {}).get("dir", "runs/default"))
        if out is None:
            print("report needs --out or --config", file=sys.stderr)
            return EXIT_CONFIG
        path = Path(out) / "report.json"
        if not path.exists():
            print(f"no report at {path}", file=sys.stderr)
            return EXIT_CONFIG
        rep = json.loads(path.read_text())
        print(f"experiment: {rep['experiment']}  code {rep['code_version']}  seed {rep['seed_manifest']['base_seed']}")
        for name, ok in rep["checks"].items():
            print(f"  {'PASS' if ok else 'FAIL'}  {name}")
        return EXIT_OK if rep["passed"] else EXIT_THRESHOLD

    try:
        raw = load_config(args.config)
        cfg = validate_config(raw, seed=args.seed, out=args.out)
    except ConfigError as exc:
        _print({"status": "invalid", "errors": exc.errors})
        return EXIT_CONFIG
    except (OSError, tomllib.TOMLDecodeError) as exc:
        _print({"status": "invalid", "errors": [str(exc)]})
        return EXIT_CONFIG
    if args.command == "validate":
        _print({"status": "ok", "experiment": cfg.kind, "cost": cfg.cost, "warnings": cfg.warnings,
                "cache_env": CACHE_ENV})
        return EXIT_OK
    try:
        report, status = run_experiment(cfg, workers=max(1, args.workers))
    except Exception as exc:  # structured record for any module failure
        cfg.out.mkdir(parents=True, exist_ok=True)
        record = {"status": "error", "type": type(exc).__name__, "message": str(exc),
                  "trace": getattr(exc, "trace", None), "traceback": traceback.format_exc()}
        (cfg.out / "error.json").write_text(json.dumps(_jsonable(record), indent=2, sort_keys=True))
        _print({k: record[k] for k in ("status", "type", "message")})
        return EXIT_RUNTIME
    _print({"status": "passed" if report["passed"] else "failed", "checks": report["checks"], "out": str(cfg.out)})
    return status


if __name__ == "__main__":
    sys.exit(main())
