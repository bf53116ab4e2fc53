"""Existence sweeps for the delta and delta-squared masses on the line, for s = 1 and s = 0.4.

Writes one JSON report plus per-series CSVs per run under the output directory.
"""
import argparse
from pathlib import Path

from kglab.data import Gaussian
from kglab.experiments import SolverConfig, existence_sweep
from kglab.fitting import EpsilonNet
from kglab.mass import DeltaSquared, DiracDelta
from kglab.spectral import RocklandSymbol
from kglab.structure import DilationStructure, make_grid


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="out/existence", type=Path)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()
    D = DilationStructure([1])
    a = RocklandSymbol(D, [1])
    grid = make_grid(D, [16.0], [128])
    for s in (1.0, 0.4):
        for name, spec in (("delta", DiracDelta(1.0)), ("delta2", DeltaSquared())):
            cfg = SolverConfig(s=s, T=1.0, dt=0.01, workers=args.threads)
            rep = existence_sweep(spec, Gaussian(1.0, 0.5), EpsilonNet(), a, grid, cfg)
            rep.write(args.out, f"{name}_s{s:g}")
            print(f"{name:7s} s={s:<4g} S-slope={rep.fits['S']['slope']:+.4f} "
                  f"residual={rep.fits['S']['residual']:.3g} verdict={rep.verdicts['existence']}")


if __name__ == "__main__":
    main()
