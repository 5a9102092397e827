"""Full pipeline for every benchmark with default hyperparameters.

    python3 scripts/run_all_systems.py --output-dir out/all
"""

import argparse
import logging
import time
from pathlib import Path

import numpy as np

from kkl_observer import io, pipeline
from kkl_observer.config import resolve
from kkl_observer.systems import SYSTEM_NAMES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output-dir", default="out/all")
    ap.add_argument("--systems", nargs="+", default=list(SYSTEM_NAMES), choices=SYSTEM_NAMES)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    rows = []
    for name in args.systems:
        cfg = resolve({"system": name, "output_dir": str(Path(args.output_dir) / name)})
        start = time.perf_counter()
        result = pipeline.run_all(cfg, emit_plot_data=True)
        sys, obs = pipeline.setup(cfg)
        peak = max(float(np.max(np.abs(r.x_hat))) for r in pipeline.load_runs(cfg, sys, obs))
        m = result["metrics"]
        rows.append((name, cfg.evaluation.v_std, m["rmse"], m["tail"]["rmse"], m["smape"], peak, time.perf_counter() - start))

    print(f"{'system':<10} {'v_std':>5} {'rmse':>8} {'tail':>8} {'smape':>8} {'max|xhat|':>10} {'secs':>7}")
    for r in rows:
        print(f"{r[0]:<10} {r[1]:>5g} {r[2]:>8.4f} {r[3]:>8.4f} {r[4]:>8.2f} {r[5]:>10.3g} {r[6]:>7.1f}")
    io.write_json(Path(args.output_dir) / "summary.json", [dict(zip(("system", "v_std", "rmse", "tail_rmse", "smape", "max_abs_xhat", "seconds"), r)) for r in rows])


if __name__ == "__main__":
    main()
