"""Regularised bump masses against the exact-mass reference, for s = 1 and s = 0.4."""
import argparse
from pathlib import Path

from kglab.data import Gaussian
from kglab.experiments import SolverConfig, consistency_experiment
from kglab.fitting import EpsilonNet
from kglab.mass import Bounded
from kglab.spectral import RocklandSymbol
from kglab.structure import DilationStructure, make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/consistency", type=Path)
    args = ap.parse_args()
    D = DilationStructure([1])
    a = RocklandSymbol(D, [1])
    grid = make_grid(D, [16.0], [128])
    for s in (1.0, 0.4):
        rep = consistency_experiment(Bounded("gaussian", 1.0, 1.0), Gaussian(1.0, 0.5), EpsilonNet(), a, grid,
                                     SolverConfig(s=s, T=2.0, dt=0.02))
        rep.write(args.out, f"consistency_s{s:g}")
        floor = rep.criteria["floor"]
        print(f"s={s:g}  floor={floor:.3e}  plateau from index {rep.criteria['plateau_start']}")
        for r in rep.records:
            print(f"  eps={r['eps']:.5f}  C={r['C']:.3e}  C/floor={r['C'] / floor:9.2f}")
        print("  verdict:", rep.verdicts["consistency"])


if __name__ == "__main__":
    main()
