#!/usr/bin/env python3
"""BER/FER of the rate-1/2 (3,6) side-channel code over an Eb/N0 grid.

With unit-amplitude per-dimension BPSK and this code rate, the configured
snr_db coincides with Eb/N0 in dB.
"""

import argparse
import sys

import numpy as np

from gencomm.ldpc import ldpc_make
from gencomm.sidechannel import measure_link


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=1024)
    parser.add_argument("--seed", type=int, default=7070)
    parser.add_argument("--points", type=float, nargs="+",
                        default=[0.0, 1.0, 2.0, 3.0, 4.0])
    parser.add_argument("--info-bits", type=int, default=200_000)
    parser.add_argument("--iters", type=int, default=50)
    args = parser.parse_args()

    code = ldpc_make(args.n, seed=args.seed)
    rng = np.random.default_rng(1)
    print("ebn0_db,info_bits,frames,ber,fer")
    for point in args.points:
        stats = measure_link(code, point, args.info_bits, rng,
                             max_iters=args.iters)
        print(f"{stats['snr_db']:g},{stats['info_bits']},{stats['frames']},"
              f"{stats['ber']:.3e},{stats['fer']:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
