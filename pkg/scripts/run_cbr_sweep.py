#!/usr/bin/env python3
"""Sweep the channel bandwidth ratio at fixed SNR; the warm-start step is
chosen per point from the ratio table.

Usage: python scripts/run_cbr_sweep.py [--config configs/cbr_sweep.cfg]
"""

import argparse
import sys
from pathlib import Path

from gencomm.config import config_metadata, load_config
from gencomm.pipeline import sweep, write_results

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(ROOT / "configs" / "cbr_sweep.cfg"))
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    cfg = load_config(args.config)
    rows, aggregates = sweep(cfg, threads=args.threads)
    print(f"{'cbr':>9} {'k':>3} {'warm':>5} {'mse_coarse':>12} {'mse_refined':>12}")
    for rec in aggregates:
        if rec["kind"] != "mean":
            continue
        print(f"{rec['cbr']:9.5f} {rec['k']:3.0f} {rec['warm_start']:5.0f} "
              f"{rec['mse_coarse']:12.5f} {rec['mse_refined']:12.5f}")
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        write_results(rows, aggregates, config_metadata(cfg), args.out)
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
