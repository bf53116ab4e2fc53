"""kglab: a spectral laboratory for fractional Klein-Gordon equations with
singular masses on R^d with anisotropic dilations."""

__version__ = "0.1.0"

from .structure import (BoxGrid, ConfigurationError, DilationStructure, dilate, homogeneous_dimension,
                        make_grid)
from .spectral import (Field, RocklandSymbol, SpectralField, apply_power, convolve, forward, inverse,
                       l2_norm, symbol_eval)
from .mass import (Bounded, DeltaSquared, DiracDelta, InversePower, MollifierProfile, Perturbed,
                   RegularizedMass, Zero, lp_norm, moderateness_witness, mollifier_scale, regularize)
from .dynamics import (SolverState, Trajectory, free_flow, inhomogeneous_solve, mass_flow,
                       picard_duhamel_solve, solve, strang_step)
from .diagnostics import EnergyRecord, embedding_ratio, energy, estimate_ratio, sobolev_dot_norm, sobolev_h_norm
from .fitting import EpsilonNet, fit_exponent
from .experiments import (SolverConfig, SweepReport, consistency_experiment, existence_sweep,
                          negligibility_check, uniqueness_experiment)
