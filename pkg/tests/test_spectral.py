"""Eigenbasis of the degenerate Legendre-type operator and quadratic forms."""

import numpy as np
import pytest

from sswlab import wspace, spectral, stationary


def scalar(grid, basis, n):
    return wspace.ScalarField(grid, basis.values[:, n])


def test_gamma_closed_forms():
    # gamma_n = -n (n + (p+3)/(p-1))
    assert spectral.gamma_n(3.0, 0) == 0.0
    assert spectral.gamma_n(3.0, 1) == -4.0
    assert spectral.gamma_n(3.0, 2) == -10.0
    assert spectral.gamma_n(2.0, 1) == -6.0
    assert spectral.gamma_n(2.0, 2) == -14.0


def test_ceps_coefficient():
    # 2 p (p+1) / (p-1)^2
    assert spectral.ceps_coefficient(3.0) == 6.0
    assert spectral.ceps_coefficient(2.0) == 12.0


def test_eigenbasis_structure(basis16, grid128):
    b = basis16
    assert np.ptp(b.values[:, 0]) < 1e-13
    ratio = b.values[:, 1] / grid128.nodes
    assert np.ptp(ratio) < 1e-12 * abs(ratio[0])
    gram = np.array([[wspace.integral_rho(grid128,
                                          b.values[:, m] * b.values[:, n])
                      for n in range(17)] for m in range(17)])
    assert np.max(np.abs(gram - np.eye(17))) < 1e-10
    assert b.diagnostics["orthogonality"] < 1e-12
    assert b.diagnostics["eigen_residual"] < 1e-8
    assert "construction" in b.diagnostics


def test_eigenbasis_evaluate(basis16, grid128):
    # evaluating at the grid nodes reproduces the stored samples
    for n in (0, 3, 7):
        dev = np.max(np.abs(basis16.evaluate(n, grid128.nodes)
                            - basis16.values[:, n]))
        assert dev < 1e-12
    # off-grid values follow the Legendre expansion, not interpolation noise
    yq = np.linspace(-0.95, 0.95, 7)
    assert np.all(np.isfinite(basis16.evaluate(5, yq)))


def test_eigenbasis_errors(grid64):
    with pytest.raises(ValueError):
        spectral.build_eigenbasis(2.0, 8, grid64)
    with pytest.raises(ValueError):
        spectral.build_eigenbasis(3.0, 40, grid64)
    gu = wspace.build_grid(64, 3.0, kind="uniform-interior")
    with pytest.raises(ValueError):
        spectral.build_eigenbasis(3.0, 8, gu)


def test_apply_L_eigenrelations(basis16, grid128):
    for n in range(9):
        h = scalar(grid128, basis16, n)
        Lh = spectral.apply_L(h)
        dev = np.sqrt(wspace.integral_rho(
            grid128, (Lh.values - spectral.gamma_n(3.0, n) * h.values) ** 2))
        assert dev < 1e-8, n


def test_apply_L_kills_constants(grid128):
    # differentiation noise piles up at the edge nodes; measure in L2rho
    Lc = spectral.apply_L(wspace.ScalarField(grid128, np.full(128, 2.7)))
    assert np.sqrt(wspace.integral_rho(grid128, Lc.values ** 2)) < 1e-9


def test_potential_closed_forms(grid128):
    y = grid128.nodes
    for d in (0.0, 0.5, -0.8):
        kap = stationary.kappa_values(3.0, d, y)
        c2 = 2.0  # 2(p+1)/(p-1)^2 at p = 3
        assert np.max(np.abs(spectral.psi_tilde(3.0, d, y)
                             - (kap ** 2 - c2))) < 1e-12
        assert np.max(np.abs(spectral.psi_check(3.0, d, y)
                             - (3.0 * kap ** 2 - c2))) < 1e-12


@pytest.mark.parametrize("d", [0.0, 0.5, -0.5, 0.9, -0.9])
def test_soliton_potential_identity(grid128, d):
    # L kappa(d) + psi_tilde kappa(d) vanishes in the weighted L2 norm
    kap = stationary.kappa_values(3.0, d, grid128.nodes)
    Lk = spectral.apply_L(wspace.ScalarField(grid128, kap))
    res = Lk.values + spectral.psi_tilde(3.0, d, grid128.nodes) * kap
    assert np.sqrt(wspace.integral_rho(grid128, res ** 2)) < 1e-9


def test_apply_L_self_adjoint(grid128):
    fields = spectral.random_fields(grid128, 6, seed=21)
    for q, r in zip(fields[:3], fields[3:]):
        f, h = q.first, r.first
        lhs = wspace.integral_rho(grid128,
                                  spectral.apply_L(
                                      wspace.ScalarField(grid128, f)).values * h)
        rhs = wspace.integral_rho(grid128,
                                  f * spectral.apply_L(
                                      wspace.ScalarField(grid128, h)).values)
        assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


def test_eigenbasis_completeness(basis16, grid128):
    f = np.exp(grid128.nodes)
    coeffs = np.array([wspace.integral_rho(grid128, f * basis16.values[:, n])
                       for n in range(17)])
    recon = basis16.values @ coeffs
    err = np.sqrt(wspace.integral_rho(grid128, (f - recon) ** 2))
    assert err < 1e-12


def test_poincare_gap(basis16, grid128):
    h1 = scalar(grid128, basis16, 1)
    h2 = scalar(grid128, basis16, 2)
    assert abs(spectral.poincare_gap_check(h1)) < 1e-12
    # gamma_2 - gamma_1 = -6 for the second mode
    assert abs(spectral.poincare_gap_check(h2) + 6.0) < 1e-10
    rng = np.random.default_rng(7)
    for _ in range(100):
        coeffs = rng.standard_normal(12) / (1 + np.arange(12)) ** 2
        vals = np.polynomial.legendre.legval(grid128.nodes, coeffs)
        vals -= wspace.integral_rho(grid128, vals) / (4.0 / 3.0)
        assert spectral.poincare_gap_check(
            wspace.ScalarField(grid128, vals)) <= 1e-8
    with pytest.raises(ValueError):
        spectral.poincare_gap_check(
            wspace.ScalarField(grid128, np.ones(128)))


def test_elliptic_solve(basis16, grid128):
    h0 = scalar(grid128, basis16, 0)
    h2 = scalar(grid128, basis16, 2)
    u0 = spectral.elliptic_solve(h0)
    assert np.max(np.abs(u0.values - h0.values)) < 1e-12
    u2 = spectral.elliptic_solve(h2)
    # (1 - L)^{-1} h2 = h2 / (1 - gamma_2) = h2 / 11
    assert np.max(np.abs(u2.values - h2.values / 11.0)) < 1e-12
    assert u2.meta["residual"] < 1e-8


def test_solve_eps_equation(basis16, grid128):
    h0 = scalar(grid128, basis16, 0)
    h1 = scalar(grid128, basis16, 1)
    u = spectral.solve_eps_equation(h0, 0.01)
    # the mean mode is resonant: amplitude 1 / (c_eps eps) = 100/6
    assert np.max(np.abs(u.values - h0.values * 100.0 / 6.0)) < 1e-12
    v = spectral.solve_eps_equation(h1, 0.0)
    assert np.max(np.abs(v.values - h1.values / spectral.gamma_n(3.0, 1))) < 1e-12
    with pytest.raises(ValueError):
        spectral.solve_eps_equation(h0, 0.0)
    with pytest.raises(ValueError):
        spectral.solve_eps_equation(h0, 0.5)


def test_quad_form_symmetry_and_errors(grid64):
    q, r = spectral.random_fields(grid64, 2, seed=2)
    for variant in ("real-part", "imag-part"):
        a = spectral.quad_form(q, r, 0.3, variant)
        assert abs(a - spectral.quad_form(r, q, 0.3, variant)) < 1e-12
    e = spectral.quad_form(q, r, 0.3, "eps", eps=0.2)
    assert abs(e - spectral.quad_form(r, q, 0.3, "eps", eps=0.2)) < 1e-12
    with pytest.raises(ValueError):
        spectral.quad_form(q, r, 0.3, "banana")
    with pytest.raises(ValueError):
        spectral.quad_form(q, r, 0.3, "eps")
    qc = wspace.StateField(grid64, 1j * q.first, q.second)
    with pytest.raises(ValueError):
        spectral.quad_form(qc, r, 0.3, "real-part")
    g32 = wspace.build_grid(32, 3.0)
    r32 = spectral.random_fields(g32, 1, seed=0)[0]
    with pytest.raises(ValueError):
        spectral.quad_form(q, r32, 0.3, "real-part")


def test_eps_form_nonnegative_on_constrained_fields(grid64):
    # after removing the resonant direction the corrected form is coercive
    worst = np.inf
    for d in (0.0, 0.3, -0.6):
        for q in spectral.random_fields(grid64, 60, seed=9):
            pr = spectral.hyperplane_project(q, d)
            val = spectral.quad_form(pr, pr, d, "eps", eps=0.4)
            worst = min(worst, val)
            assert val >= -1e-9, d
    assert worst < 10.0  # sanity: the samples are O(1), not degenerate


def test_hyperplane_project(grid64):
    for d in (0.0, 0.4, -0.7):
        for q in spectral.random_fields(grid64, 10, seed=4):
            pr = spectral.hyperplane_project(q, d)
            size = wspace.norms(pr)["H"]
            assert abs(spectral.constraint_functional(
                pr.first, d, grid64)) < 1e-12 * max(1.0, size)
            again = spectral.hyperplane_project(pr, d)
            assert np.max(np.abs(again.first - pr.first)) < 1e-12
            assert np.array_equal(pr.second, q.second)


def test_constraint_functional_closed_form(grid64):
    rng = np.random.default_rng(31)
    vals = np.polynomial.legendre.legval(
        grid64.nodes, rng.standard_normal(8) / (1 + np.arange(8)) ** 2)
    for d in (0.0, 0.5, -0.8):
        direct = (1.0 - d * d) ** 1.5 * wspace.integral_rho(
            grid64, vals * (1.0 + d * grid64.nodes) ** -3.0)
        got = spectral.constraint_functional(vals, d, grid64)
        assert abs(got - direct) < 1e-12 * max(1.0, abs(direct))


def test_random_fields_deterministic(grid64):
    a = spectral.random_fields(grid64, 3, seed=12)
    b = spectral.random_fields(grid64, 3, seed=12)
    c = spectral.random_fields(grid64, 3, seed=13)
    for qa, qb in zip(a, b):
        assert np.array_equal(qa.first, qb.first)
        assert np.array_equal(qa.second, qb.second)
    assert np.max(np.abs(a[0].first - c[0].first)) > 1e-3
    assert all(not np.iscomplexobj(q.first) for q in a)
