"""Physics-informed (nu=1) vs supervised (nu=0) forward map on Duffing, in and out of domain.

    python3 scripts/run_ablation.py --output-dir out/ablation --seeds 0 1 2
"""

import argparse
import json
import logging

from kkl_observer import pipeline
from kkl_observer.config import resolve


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--system", default="duffing")
    ap.add_argument("--output-dir", default="out/ablation")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--s2-mode", choices=["iid_points", "trajectories"], default="iid_points")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    cfg = resolve(
        {"system": args.system, "output_dir": args.output_dir, "ablation_seeds": args.seeds},
        {"datagen.s2_mode": args.s2_mode},
    )
    result = pipeline.cmd_ablate(cfg)
    print(json.dumps(result["mean"], indent=1, sort_keys=True))


if __name__ == "__main__":
    main()
