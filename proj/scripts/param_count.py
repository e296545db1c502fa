#!/usr/bin/env python3
"""Independent parameter-count walk of the network layer plan.

Mirrors the documented architecture arithmetic (not the C++ code): encoder
stages conv3x3 s1 + conv3x3 s2 with channel doubling, per-stage attention
blocks, mirrored decoder convs after upsample+concat, final 1x1 conv. Used
to freeze expected counts into the model tests.
"""

import argparse


def conv(cout, cin, k):
    return cout * cin * k * k + cout


def lin(cout, cin):
    return cout * cin + cout


def count(bands, base, depth, rank, mode):
    total = 0
    for d in range(1, depth + 1):
        cd = base << (d - 1)
        prev = bands if d == 1 else base << (d - 2)
        total += conv(cd, prev, 3) + 2 * cd  # enc{d}.a + channel norm
        total += conv(cd, cd, 3) + 2 * cd    # enc{d}.b (stride 2) + channel norm
        if mode in ("spectral", "both"):
            total += lin(rank, cd) + lin(cd, rank)  # low-rank channel gate
        if mode in ("spatial", "both"):
            total += conv(1, 2, 7)  # mean/max summary -> gate map
    def dec_out(d):
        return (base << (d - 2)) if d > 1 else base
    for d in range(depth, 0, -1):
        below = (base << (depth - 1)) if d == depth else dec_out(d + 1)
        total += conv(dec_out(d), below + (base << (d - 1)), 3) + 2 * dec_out(d)
    total += conv(bands, base, 1)
    return total


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--bands", type=int, required=True)
    ap.add_argument("--base", type=int, default=32)
    ap.add_argument("--depth", type=int, default=3)
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--mode", choices=["none", "spatial", "spectral", "both"], default="both")
    args = ap.parse_args()
    print(count(args.bands, args.base, args.depth, args.rank, args.mode))


if __name__ == "__main__":
    main()
