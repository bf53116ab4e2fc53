"""Lp norms of psi_eps under isotropic and anisotropic dilations, with fitted exponents."""
import argparse
import math
from pathlib import Path

from kglab.fitting import EpsilonNet
from kglab.mass import DiracDelta, moderateness_witness, write_norm_table
from kglab.structure import DilationStructure, make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/mollifier", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    net = EpsilonNet(0.5, 2 ** -0.5, 6)
    for label, weights in (("isotropic", [1, 1]), ("anisotropic", [1, 2])):
        D = DilationStructure(weights)
        grid = make_grid(D, [2.0, 2.0], [32, 32])
        Q = float(D.Q)
        rows = []
        for p in (1.0, 2.0, 4.0, math.inf):
            w = moderateness_witness(DiracDelta(1.0), p, net, grid, min_nodes=16)
            rows.extend(w.rows())
            print(f"{label:11s} p={p:<4g} fitted={w.fit.slope:+.4f} target={Q * (1 - 1 / p):.4f}")
        write_norm_table(rows, args.out / f"psi_{label}.csv")


if __name__ == "__main__":
    main()
