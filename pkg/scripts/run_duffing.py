"""Reference Duffing run: default settings, noisy in-domain test, metrics and certificate.

    python3 scripts/run_duffing.py --output-dir out/duffing
"""

import argparse
import json
import logging

from kkl_observer import pipeline
from kkl_observer.config import resolve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--output-dir", default="out/duffing")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n-test", type=int, default=20)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = resolve(
        {"system": "duffing", "output_dir": args.output_dir},
        {"datagen.seed": args.seed, "forward.seed": args.seed, "inverse.seed": args.seed, "evaluation.n_test": args.n_test},
    )
    result = pipeline.run_all(cfg, emit_plot_data=True)
    m, c = result["metrics"], result["certificate"]
    print(json.dumps({"rmse": m["rmse"], "smape": m["smape"], "tail": m["tail"], "certificate_passed": c["passed"]}, indent=1))


if __name__ == "__main__":
    main()
