import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kglab.fitting import EpsilonNet, fit_exponent
from kglab.mass import DiracDelta, moderateness_witness
from kglab.structure import ConfigurationError, DilationStructure, make_grid


def test_default_net():
    net = EpsilonNet()
    v = net.values
    assert len(net) == 12 and v[0] == 0.5
    assert np.all(np.diff(v) < 0) and np.all((v > 0) & (v <= 1))
    np.testing.assert_allclose(v[1:] / v[:-1], 2 ** -0.5)
    assert net.mid_index == 5


@pytest.mark.parametrize("args", [(0.0, 0.5, 6), (1.5, 0.5, 6), (0.5, 1.0, 6), (0.5, 0.5, 4)])
def test_bad_nets(args):
    with pytest.raises(ConfigurationError):
        EpsilonNet(*args)


def test_fit_examples():
    eps = EpsilonNet().values
    f = fit_exponent(eps, eps ** -3.0)
    assert f.slope == pytest.approx(3.0, abs=1e-12) and f.residual < 1e-12
    f = fit_exponent(eps, np.full_like(eps, 7.0))
    assert abs(f.slope) < 1e-12 and f.intercept == pytest.approx(math.log(7.0))


@given(st.floats(-5, 5), st.floats(0.01, 100))
def test_fit_recovers_power_laws(N, C):
    eps = EpsilonNet(0.9, 0.6, 8).values
    f = fit_exponent(eps, C * eps ** -N)
    assert f.slope == pytest.approx(N, abs=1e-9)
    assert f.residual < 1e-9


def test_fit_errors():
    eps = EpsilonNet().values
    with pytest.raises(ValueError):
        fit_exponent(eps[:4], eps[:4])
    with pytest.raises(ValueError):
        fit_exponent(eps, -eps)
    with pytest.raises(ValueError):
        fit_exponent(eps, np.where(eps > 0.1, eps, 0.0))


def test_psi_sup_series_slope_is_q():
    D = DilationStructure([1, 2])
    g = make_grid(D, [2.0, 2.0], [32, 32])
    w = moderateness_witness(DiracDelta(1.0), math.inf, EpsilonNet(0.5, 2 ** -0.5, 6), g, min_nodes=12)
    assert w.exponent == pytest.approx(3.0, rel=0.01)
