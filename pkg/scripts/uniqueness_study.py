"""Difference of two regularisations of the delta mass that differ by exp(-1/eps).

Prints D(eps) against exp(-1/eps) and the negligibility margins per power k.
"""
import argparse
import math
from pathlib import Path

from kglab.data import Gaussian
from kglab.experiments import SolverConfig, uniqueness_experiment
from kglab.fitting import EpsilonNet
from kglab.mass import DiracDelta
from kglab.spectral import RocklandSymbol
from kglab.structure import DilationStructure, make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/uniqueness", type=Path)
    ap.add_argument("--k-max", type=int, default=10)
    args = ap.parse_args()
    D = DilationStructure([1])
    rep = uniqueness_experiment(DiracDelta(1.0), Gaussian(1.0, 0.5), EpsilonNet(), RocklandSymbol(D, [1]),
                                make_grid(D, [16.0], [128]), SolverConfig(T=1.0, dt=0.01), k_max=args.k_max)
    rep.write(args.out)
    for r in rep.records:
        print(f"eps={r['eps']:.5f}  D={r['D']:.3e}  exp(-1/eps)={math.exp(-1 / r['eps']):.3e}")
    for k, m in rep.criteria["negligibility"]["margins"].items():
        print(f"k={k:>2}  tail margin={m:+.3f}")
    print("verdict:", rep.verdicts["negligibility"], "| cross-check:", rep.verdicts["cross_validation"])


if __name__ == "__main__":
    main()
