"""Run every TOML config in configs/ through the CLI and tabulate exit codes.

    python3 scripts/run_all_configs.py [--out runs] [--only case1]
"""
import argparse
import json
import time
from pathlib import Path

from anderson_chaos.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(out: Path, only: str | None):
    rows = []
    for cfg in sorted((ROOT / "configs").glob("*.toml")):
        if only and only not in cfg.stem:
            continue
        t = time.perf_counter()
        code = main(["run", "--config", str(cfg), "--out", str(out / cfg.stem)])
        rows.append((cfg.stem, code, time.perf_counter() - t))
    print(f"\n{'config':28s} exit  seconds")
    for name, code, sec in rows:
        checks = json.loads((out / name / "report.json").read_text())["checks"] if code in (0, 1) else {}
        failed = [k for k, v in checks.items() if not v]
        print(f"{name:28s} {code:4d}  {sec:7.1f}  {'failed: ' + ', '.join(failed) if failed else ''}")


if __name__ == "__main__":
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", type=Path, default=ROOT / "runs")
    p.add_argument("--only", default=None)
    a = p.parse_args()
    run(a.out, a.only)
