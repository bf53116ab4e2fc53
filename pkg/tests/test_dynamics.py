import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kglab.data import Gaussian, RandomBandlimited
from kglab.dynamics import (SINC_SWITCH, NumericalFailure, OracleFailure, SolverState, StrangStepper,
                            default_dt, duhamel_quadrature, free_flow, inhomogeneous_solve, mass_flow,
                            picard_duhamel_solve, sin_over, solve, step_count, strang_step)
from kglab.mass import Bounded, DiracDelta, NegativeMassError, RegularizedMass, regularize
from kglab.spectral import Field, RocklandSymbol, apply_power, l2_norm
from kglab.structure import ConfigurationError, DilationStructure, make_grid


def state(grid, u, p, symbol, s=1.0, mass=None):
    return SolverState(0.0, Field(grid, u), Field(grid, p), symbol, s, mass)


def constant_mass(grid, c):
    return RegularizedMass(Bounded("constant", c), 0.0, Field.constant(grid, c))


def test_free_flow_examples(line_grid, laplacian_1d):
    x = line_grid.coords[0]
    e = np.exp(1j * x)
    out = free_flow(state(line_grid, e, 0 * e, laplacian_1d), math.pi)
    np.testing.assert_allclose(out.u.values, -e, atol=1e-14)
    out = free_flow(state(line_grid, 0 * e, e, laplacian_1d), math.pi)
    np.testing.assert_allclose(out.u.values, 0, atol=1e-14)
    np.testing.assert_allclose(out.p.values, -e, atol=1e-14)
    c, b = 1.5, -0.25
    out = free_flow(state(line_grid, np.full(32, c), np.full(32, b), laplacian_1d), 0.7)
    np.testing.assert_allclose(out.u.values, c + b * 0.7, atol=1e-14)
    np.testing.assert_allclose(out.p.values, b, atol=1e-14)
    assert out.t == pytest.approx(0.7)


def test_free_flow_is_a_group(line_grid, laplacian_1d, rng):
    st0 = state(line_grid, rng.standard_normal(32), rng.standard_normal(32), laplacian_1d, s=0.7)
    a = free_flow(free_flow(st0, 0.3), 0.45)
    b = free_flow(st0, 0.75)
    np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-12)
    back = free_flow(b, -0.75)
    np.testing.assert_allclose(back.u.values, st0.u.values, atol=1e-12)


def test_mass_flow_is_the_kick(line_grid, laplacian_1d):
    one = np.ones(32)
    st0 = state(line_grid, one, 0 * one, laplacian_1d, mass=constant_mass(line_grid, 4.0))
    out = mass_flow(st0, math.pi / 2)
    np.testing.assert_allclose(out.u.values, 1.0)
    np.testing.assert_allclose(out.p.values, -2 * math.pi)
    still = mass_flow(state(line_grid, one, 3 * one, laplacian_1d, mass=constant_mass(line_grid, 0.0)), 0.4)
    np.testing.assert_array_equal(still.u.values, one)
    np.testing.assert_array_equal(still.p.values, 3 * one)


@given(st.floats(-2, 2), st.integers(0, 10 ** 6))
def test_mass_flow_reversible(dt, seed):
    g = make_grid(DilationStructure([1]), [4.0], [16])
    r = np.random.default_rng(seed)
    m = RegularizedMass(Bounded(), 0.0, Field(g, r.uniform(0, 5, 16)))
    st0 = state(g, r.standard_normal(16), r.standard_normal(16), RocklandSymbol.laplacian(1), mass=m)
    back = mass_flow(mass_flow(st0, dt), -dt)
    np.testing.assert_allclose(back.p.values, st0.p.values, atol=1e-12 * (1 + 5 * abs(dt)))
    np.testing.assert_array_equal(back.u.values, st0.u.values)


def test_negative_mass_rejected(line_grid, laplacian_1d):
    bad = RegularizedMass(Bounded(), 0.0, Field.constant(line_grid, -1.0))
    with pytest.raises(NegativeMassError):
        mass_flow(state(line_grid, np.ones(32), np.ones(32), laplacian_1d, mass=bad), 0.1)


def test_strang_without_mass_is_free_flow(line_grid, laplacian_1d, rng):
    st0 = state(line_grid, rng.standard_normal(32), rng.standard_normal(32), laplacian_1d,
                mass=constant_mass(line_grid, 0.0))
    a = strang_step(st0, 0.37)
    b = free_flow(st0, 0.37)
    np.testing.assert_allclose(a.u.values, b.u.values, atol=1e-14)
    np.testing.assert_allclose(a.p.values, b.p.values, atol=1e-14)
    with pytest.raises(ValueError):
        strang_step(st0, -0.1)


def test_solve_matches_repeated_strang_steps(line_grid, laplacian_1d, rng):
    m = constant_mass(line_grid, 2.0)
    st0 = state(line_grid, rng.standard_normal(32), rng.standard_normal(32), laplacian_1d, mass=m)
    cur = st0
    for _ in range(20):
        cur = strang_step(cur, 0.05)
    traj = solve(st0.u, st0.p, m, laplacian_1d, 1.0, 1.0, 0.05, snapshot_stride=7)
    np.testing.assert_allclose(traj.final.u.values, cur.u.values, atol=1e-12)
    np.testing.assert_allclose(traj.final.p.values, cur.p.values, atol=1e-12)
    np.testing.assert_allclose(traj.times, [0.0, 0.35, 0.7, 1.0])


def test_dispersion_relation_second_order(line_grid, laplacian_1d):
    x = line_grid.coords[0]
    u0 = Field(line_grid, np.exp(1j * x))
    c, T = 3.0, 2.0
    exact = math.cos(T * math.sqrt(1 + c)) * u0.values
    errs = []
    for dt in (0.1, 0.05, 0.025):
        traj = solve(u0, Field.zeros(line_grid), constant_mass(line_grid, c), laplacian_1d, 1.0, T, dt)
        errs.append(np.max(np.abs(traj.final.u.values - exact)))
    assert 3.5 < errs[0] / errs[1] < 4.5 and 3.5 < errs[1] / errs[2] < 4.5


@pytest.mark.parametrize("s", [0.3, 1.0, 1.8])
def test_plane_wave_exact_at_every_snapshot(s):
    g = make_grid(DilationStructure([1, 2]), [5.0, 3.0], [16, 16])
    a = RocklandSymbol(g.structure, [2, 1])
    xi = np.array([2 * math.pi * 3 / 5.0, 2 * math.pi * -2 / 3.0])
    omega = a(xi) ** (s / 2)
    u0 = Field.from_function(g, lambda x, y: np.exp(1j * (xi[0] * x + xi[1] * y)))
    traj = solve(u0, Field.zeros(g), None, a, s, 3.0, 0.3, snapshot_stride=1)
    for st_ in traj.states:
        exact = math.cos(omega * st_.t) * u0.values
        assert np.max(np.abs(st_.u.values - exact)) <= 1e-10


def gaussian_problem(N=64, L=8.0):
    D = DilationStructure([1])
    g = make_grid(D, [L], [N])
    u0, u1 = Gaussian(1.0, 0.5, velocity=0.3)(g)
    return g, RocklandSymbol(D, [1]), u0, u1


def test_time_reversibility():
    g, a, u0, u1 = gaussian_problem()
    m = regularize(DiracDelta(1.0), 0.3, g)
    fwd = solve(u0, u1, m, a, 1.0, 2.0, 0.01).final
    back = solve(fwd.u, -fwd.p, m, a, 1.0, 2.0, 0.01).final
    assert l2_norm(back.u - u0) <= 1e-9 * l2_norm(u0)
    assert l2_norm(back.p + u1) <= 1e-9 * l2_norm(u0)


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_linearity(alpha, beta, seed):
    g, a, u0, u1 = gaussian_problem(N=32)
    w0, w1 = RandomBandlimited(seed, max_mode=4)(g)
    m = regularize(Bounded("gaussian", 2.0, 0.5), 0.5, g)

    def run(x, y):
        return solve(x, y, m, a, 0.8, 0.5, 0.05, keep_states=True).final.u

    lhs = run(alpha * u0 + beta * w0, alpha * u1 + beta * w1)
    rhs = alpha * run(u0, u1) + beta * run(w0, w1)
    scale = abs(alpha) * l2_norm(run(u0, u1)) + abs(beta) * l2_norm(run(w0, w1)) + 1e-300
    assert l2_norm(lhs - rhs) <= 1e-10 * scale


def test_real_data_stay_real():
    g, a, u0, u1 = gaussian_problem()
    traj = solve(u0, u1, regularize(DiracDelta(1.0), 0.25, g), a, 0.6, 1.0, 0.01)
    for st_ in traj.states:
        assert st_.u.is_real(1e-10) and st_.p.is_real(1e-10)


def test_trajectory_invariants():
    g, a, u0, u1 = gaussian_problem()
    traj = solve(u0, u1, None, a, 1.0, 1.2, 0.04, snapshot_stride=7)
    t = np.array(traj.times)
    assert t[0] == 0 and np.all(np.diff(t) > 0) and t[-1] == 1.2
    assert traj.steps == 30 and len(traj.states) == len(traj.energies) == len(t)


def test_step_control():
    assert step_count(1.0, 0.1) == 10
    with pytest.raises(ConfigurationError):
        step_count(1.0, 0.3)
    with pytest.raises(ConfigurationError):
        step_count(-1.0, 0.1)
    g, a, *_ = gaussian_problem()
    dt = default_dt(100.0, a, g, 1.0, 1.0)
    fastest = math.pi * 64 / 8.0
    assert dt <= min(0.1, 1 / fastest) / 10 + 1e-15
    assert step_count(1.0, dt) >= 100
    assert default_dt(0.0, a, make_grid(g.structure, [8.0], [4]), 1.0, 1.0) <= 0.01


def test_nonfinite_values_abort():
    g, a, *_ = gaussian_problem()
    src = np.zeros((10,) + g.shape)
    src[3, 5] = np.nan
    with pytest.raises(NumericalFailure):
        inhomogeneous_solve(src, None, a, 1.0, 1.0, 0.1, grid=g, snapshot_stride=1)


def test_sin_over_branches():
    omega = np.array([0.0, 1e-9, SINC_SWITCH * 0.999, SINC_SWITCH * 1.001, 2.0])
    t = 1.0
    want = np.array([1.0, 1.0] + [math.sin(w) / w for w in omega[2:]])
    np.testing.assert_allclose(sin_over(omega, t), want, rtol=1e-15)


# -- Picard-Duhamel oracle ---------------------------------------------------

def test_duhamel_constant_forcing():
    # v'' + omega^2 v = c from rest: v = c (1 - cos omega t) / omega^2, v' = c sin(omega t) / omega
    omega = np.array([0.7, 2.0, 5.0])
    c, T = 1.3, 2.0
    errs = []
    for n in (2001, 4001):
        dtau = T / (n - 1)
        g = np.full((n, 3), c, dtype=complex)
        t = dtau * np.arange(n)[:, None]
        v = duhamel_quadrature(g, omega, dtau)
        dv = duhamel_quadrature(g, omega, dtau, derivative=True)
        errs.append((np.max(np.abs(v - c * (1 - np.cos(omega * t)) / omega ** 2)),
                     np.max(np.abs(dv - c * np.sin(omega * t) / omega))))
    assert errs[0][0] < 5e-6 and errs[0][1] < 5e-6
    assert 3.8 < errs[0][0] / errs[1][0] < 4.2 and 3.8 < errs[0][1] / errs[1][1] < 4.2


def test_picard_without_mass_is_the_free_part():
    g, a, u0, u1 = gaussian_problem()
    u, info = picard_duhamel_solve(u0, u1, None, a, 1.0, 1.0, 0.01, full_output=True)
    free = free_flow(SolverState(0.0, u0, u1, a, 1.0), 1.0)
    assert info.iterations == [1]
    assert l2_norm(u - free.u) <= 1e-12 * l2_norm(u0)


def test_picard_agrees_with_strang():
    g, a, u0, u1 = gaussian_problem()
    m = regularize(DiracDelta(1.0), 0.25, g)
    us = solve(u0, u1, m, a, 1.0, 1.0, 0.005).final.u
    up, info = picard_duhamel_solve(u0, u1, m, a, 1.0, 1.0, 0.005, full_output=True)
    assert l2_norm(us - up) <= 1e-4 * l2_norm(up)
    assert info.subintervals > 1  # tau^2 sup m <= 1/2 forces restarts at this eps


def test_picard_reports_nonconvergence():
    g, a, u0, u1 = gaussian_problem()
    m = regularize(DiracDelta(1.0), 0.25, g)
    with pytest.raises(OracleFailure):
        picard_duhamel_solve(u0, u1, m, a, 1.0, 1.0, 0.01, max_iter=2)


# -- inhomogeneous problems --------------------------------------------------

def test_zero_source_gives_zero(line_grid, laplacian_1d):
    traj = inhomogeneous_solve(lambda t: np.zeros(32), None, laplacian_1d, 1.0, 1.0, 0.1, grid=line_grid)
    assert all(st_.u.max_abs() == 0 for st_ in traj.states)


def test_single_mode_source_closed_form(line_grid, laplacian_1d):
    x = line_grid.coords[0]
    k = 2
    e = np.exp(1j * k * x)
    omega = k ** 1.0  # a(k)^(s/2) with s = 1
    T = 3.0
    errs = []
    for dt in (0.05, 0.025):
        traj = inhomogeneous_solve(lambda t: e, None, laplacian_1d, 1.0, T, dt, grid=line_grid)
        exact = (1 - math.cos(omega * T)) / omega ** 2 * e
        errs.append(np.max(np.abs(traj.final.u.values - exact)))
    assert errs[0] < 1e-3 and 3.5 < errs[0] / errs[1] < 4.5


def test_difference_equation_residual():
    # U solves U'' + R U + m U = delta * u~ with zero data; check it a posteriori
    g, a, u0, u1 = gaussian_problem()
    m = regularize(DiracDelta(1.0), 0.3, g)
    delta = 0.05
    mt = RegularizedMass(m.spec, m.eps, Field(g, m.values + delta))
    res = []
    for dt in (0.01, 0.005):
        n = round(1.0 / dt)
        stepper = StrangStepper(u0, u1, mt, a, 1.0, dt)
        U = inhomogeneous_solve(lambda t: delta * stepper.step(), m, a, 1.0, 1.0, dt, grid=g,
                                snapshot_stride=1)
        ut = solve(u0, u1, mt, a, 1.0, 1.0, dt, snapshot_stride=1)
        worst = 0.0
        for i in range(1, n):
            Ui = U.states[i].u
            second = (U.states[i + 1].u.values - 2 * Ui.values + U.states[i - 1].u.values) / dt ** 2
            r = second + apply_power(a, 1.0, Ui).values + m.values * Ui.values - delta * ut.states[i].u.values
            worst = max(worst, math.sqrt(g.cell_volume * np.sum(np.abs(r) ** 2)))
        res.append(worst)
    scale = delta * l2_norm(u0)
    assert res[0] < 0.05 * scale
    assert 3.0 < res[0] / res[1] < 5.0
