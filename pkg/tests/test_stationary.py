"""Soliton family, boosts, the stationary residual and the connection ODE."""

import numpy as np
import pytest

from sswlab import wspace, stationary


def test_kappa0_values():
    assert abs(stationary.kappa0(3.0) - np.sqrt(2.0)) < 1e-15
    assert abs(stationary.kappa0(2.0) - 6.0) < 1e-13
    assert abs(stationary.kappa0(5.0) - 0.75 ** 0.25) < 1e-15
    with pytest.raises(ValueError):
        stationary.kappa0(1.0)


def test_soliton_params_validation():
    p = stationary.SolitonParams(0.5, 0.1)
    assert abs(p.lam - np.arctanh(0.5)) < 1e-15
    stationary.SolitonParams(0.5, 0.1, lam=np.arctanh(0.5))
    with pytest.raises(ValueError):
        stationary.SolitonParams(1.0, 0.0)
    with pytest.raises(ValueError):
        stationary.SolitonParams(0.5, 0.0, lam=0.9)


def test_kappa_values_pointwise():
    # p = 3, d = 0.5 at y = 0: sqrt(2) * sqrt(3)/2 = sqrt(1.5)
    assert abs(stationary.kappa_values(3.0, 0.5, np.array([0.0]))[0]
               - np.sqrt(1.5)) < 1e-15
    assert abs(stationary.kappa_values(3.0, 0.0, np.array([0.3]))[0]
               - np.sqrt(2.0)) < 1e-15


def test_kappa_profile_phase(grid64):
    params = stationary.SolitonParams(0.0, np.pi)
    f = stationary.kappa_profile(params, grid64)
    assert np.max(np.abs(f.values + np.sqrt(2.0))) < 1e-13
    th = 0.7
    rot = stationary.kappa_profile(stationary.SolitonParams(0.3, th), grid64)
    base = stationary.kappa_profile(stationary.SolitonParams(0.3, 0.0), grid64)
    assert np.max(np.abs(rot.values - np.exp(1j * th) * base.values)) < 1e-13


def test_lorentz_boost(grid128):
    g = grid128
    f0 = wspace.ScalarField(g, stationary.kappa_values(3.0, 0.0, g.nodes))
    assert np.max(np.abs(stationary.lorentz(f0, 0.0).values - f0.values)) == 0.0
    # boosting the rest soliton lands on the moving one
    for d in (0.4, -0.7):
        boosted = stationary.lorentz(f0, d)
        target = stationary.kappa_values(3.0, d, g.nodes)
        assert np.max(np.abs(boosted.values - target)) < 1e-10, d
    with pytest.raises(ValueError):
        stationary.lorentz(f0, 1.0)


def test_lorentz_group_law(grid128):
    g = grid128
    rng = np.random.default_rng(5)
    coeffs = rng.standard_normal(6) / (1 + np.arange(6)) ** 2
    f = wspace.ScalarField(g, np.polynomial.legendre.legval(g.nodes, coeffs))
    d1, d2 = 0.3, -0.45
    once = stationary.lorentz(stationary.lorentz(f, d1), d2)
    dsum = (d1 + d2) / (1.0 + d1 * d2)
    direct = stationary.lorentz(f, dsum)
    assert np.max(np.abs(once.values - direct.values)) < 1e-8
    # round trip: boost back with the opposite rapidity
    back = stationary.lorentz(stationary.lorentz(f, d1), -d1)
    assert np.max(np.abs(back.values - f.values)) < 1e-8


@pytest.mark.parametrize("d", [0.0, 0.7, -0.7])
def test_stationary_residual_on_solitons(grid128, d):
    f = wspace.ScalarField(grid128,
                           stationary.kappa_values(3.0, d, grid128.nodes))
    assert stationary.stationary_residual(f, 3.0) < 1e-8


def test_stationary_residual_phase_invariance(grid128):
    f = wspace.ScalarField(grid128,
                           stationary.kappa_values(3.0, 0.4, grid128.nodes))
    rot = wspace.ScalarField(grid128, np.exp(0.9j) * f.values)
    r0 = stationary.stationary_residual(f, 3.0)
    r1 = stationary.stationary_residual(rot, 3.0)
    assert abs(r0 - r1) < 1e-12


def test_stationary_residual_detects_wrong_amplitude(grid128):
    f = wspace.ScalarField(
        grid128, 1.1 * stationary.kappa_values(3.0, 0.0, grid128.nodes))
    assert stationary.stationary_residual(f, 3.0) > 1e-2


def test_stationary_residual_refinement():
    # fast boost: the profile is steep, so resolution actually matters
    g64 = wspace.build_grid(64, 3.0)
    g128 = wspace.build_grid(128, 3.0)
    r = {}
    for g in (g64, g128):
        f = wspace.ScalarField(g, stationary.kappa_values(3.0, 0.9, g.nodes))
        r[g.n] = stationary.stationary_residual(f, 3.0)
    assert r[128] < 1e-8
    assert r[64] > 10.0 * r[128] or r[64] < 1e-10


def test_connection_ode_rest_soliton():
    k0 = stationary.kappa0(3.0)
    traj = stationary.integrate_connection_ode(k0, 0.0, 8.0, 3.0)
    assert traj.branch == "connection"
    assert traj.mu == 0.0
    assert np.max(np.abs(traj.h)) == 0.0
    model = stationary.connection_profile(3.0, traj.xi_samples)
    assert np.max(np.abs(traj.v - model)) < 1e-9
    assert np.ptp(traj.energy_samples) < 1e-9
    assert np.max(np.abs(traj.r - np.abs(traj.v))) < 1e-14


def test_connection_ode_rotated_data():
    k0 = stationary.kappa0(3.0)
    traj = stationary.integrate_connection_ode(
        k0 * np.exp(1j * np.pi / 4), 0.0, 8.0, 3.0)
    assert traj.branch == "connection"
    model = stationary.connection_profile(3.0, traj.xi_samples)
    assert np.max(np.abs(np.abs(traj.v) - model)) < 1e-9
    center = len(traj.xi_samples) // 2
    assert abs(np.angle(traj.v[center]) - np.pi / 4) < 1e-12


def test_connection_ode_angular_momentum_branch():
    k0 = stationary.kappa0(3.0)
    traj = stationary.integrate_connection_ode(k0, 0.3j, 8.0, 3.0)
    assert traj.branch == "non-decaying"
    # mu = h(0)^2 r(0)^4 = (0.3 k0 / k0^2)^2 k0^4 with k0^2 = 2
    assert abs(traj.mu - 0.18) < 1e-12
    assert np.min(traj.r) > 0.5


def test_connection_ode_off_family_amplitude():
    k0 = stationary.kappa0(3.0)
    traj = stationary.integrate_connection_ode(1.3 * k0, 0.0, 8.0, 3.0)
    assert traj.branch == "non-decaying"
    assert np.min(traj.r) < 0.05


def test_connection_ode_negative_start():
    traj = stationary.integrate_connection_ode(
        -stationary.kappa0(3.0), 0.0, 8.0, 3.0)
    assert traj.branch == "connection"


def test_connection_ode_zero_data():
    with pytest.raises(ValueError):
        stationary.integrate_connection_ode(0.0, 0.0, 8.0, 3.0)


def test_connection_table_round_trip():
    traj = stationary.integrate_connection_ode(
        stationary.kappa0(3.0), 0.0, 8.0, 3.0)
    tab = stationary.connection_table(traj)
    lines = tab.strip().split("\n")
    assert lines[0] == "xi,re_v,im_v,r,h"
    assert len(lines) - 1 == len(traj.xi_samples)
    row = np.array(lines[1 + len(lines) // 2].split(","), dtype=float)
    i = len(lines) // 2
    assert abs(row[1] - traj.v[i].real) < 1e-12
    assert abs(row[3] - traj.r[i]) < 1e-12


def test_classify_stationary(grid128):
    g = grid128
    zero = stationary.classify_stationary(
        wspace.ScalarField(g, np.zeros(g.n)), tol=0.5)
    assert zero.kind == "zero"
    sol = wspace.ScalarField(
        g, np.exp(0.3j) * stationary.kappa_values(3.0, -0.4, g.nodes))
    cls = stationary.classify_stationary(sol, tol=0.5)
    assert cls.kind == "soliton"
    assert abs(cls.params.d + 0.4) < 1e-8
    assert abs(cls.params.theta - 0.3) < 1e-8
    assert cls.distance < 1e-8
    far = stationary.classify_stationary(
        wspace.ScalarField(g, 5.0 + 3.0 * g.nodes ** 2), tol=0.5)
    assert far.kind == "not-stationary"
    assert far.distance > 0.5
