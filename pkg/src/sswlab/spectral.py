"""The degenerate operator L, its eigenbasis, and the quadratic forms.

L f = (1/rho) d/dy (rho (1-y^2) f') expands to
(1-y^2) f'' - (2(p+1)/(p-1)) y f', which is what the collocation code
evaluates; nothing ever divides by rho at the nodes.  L is self-adjoint
in L^2_rho with polynomial eigenfunctions h_n and eigenvalues
gamma_n = -n (n + (p+3)/(p-1)).
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import legendre as npleg

from . import _poly, stationary, wspace


def gamma_n(p, n):
    """Eigenvalue ladder gamma_n = -n(n + (p+3)/(p-1))."""
    n = np.asarray(n, dtype=np.float64)
    out = -n * (n + (p + 3.0) / (p - 1.0))
    return out if out.ndim else float(out)


def ceps_coefficient(p):
    """Zeroth-order coefficient 2p(p+1)/(p-1)^2 of the eps-perturbed solve."""
    return 2.0 * p * (p + 1.0) / (p - 1.0) ** 2


def psi_check(p, d, y):
    """Real-part potential p kappa^{p-1} - 2(p+1)/(p-1)^2."""
    kap = stationary.kappa_values(p, d, y)
    return p * kap ** (p - 1.0) - 2.0 * (p + 1.0) / (p - 1.0) ** 2


def psi_tilde(p, d, y):
    """Imaginary-part potential kappa^{p-1} - 2(p+1)/(p-1)^2."""
    kap = stationary.kappa_values(p, d, y)
    return kap ** (p - 1.0) - 2.0 * (p + 1.0) / (p - 1.0) ** 2


@dataclass
class EigenBasis:
    """Eigenpolynomials h_n of L, orthonormal in L^2_rho.

    values[:, n] holds h_n at the grid nodes; leg_coeffs[n] holds the
    Legendre-basis coefficients of h_n (a stable representation usable
    off the grid through numpy.polynomial.legendre.legval).
    """

    p: float
    max_n: int
    eigenvalues: np.ndarray
    values: np.ndarray
    leg_coeffs: np.ndarray
    grid: wspace.WeightedGrid
    diagnostics: dict

    def evaluate(self, n, y):
        """Evaluate h_n at arbitrary points from the stable representation."""
        return npleg.legval(np.asarray(y), self.leg_coeffs[n])


def build_eigenbasis(p, max_n, grid):
    """Orthonormal eigenbasis of L through degree max_n.

    Built by the symmetric Jacobi recurrence for the weight rho (an
    implementer's-choice alternative to Gram-Schmidt over monomials),
    renormalized against the grid quadrature, with the eigen-relation
    checked mode by mode on construction.
    """
    if p != grid.p:
        raise ValueError("exponent p must match the grid's exponent")
    if grid.kind != "gauss-interior":
        raise ValueError("eigenbasis requires a gauss-interior grid")
    if max_n > grid.metadata["exactness"] // 2:
        raise ValueError("max_n exceeds half the grid's quadrature exactness")
    alpha = 2.0 / (p - 1.0)
    vals, _, _ = _poly.eval_ortho(alpha, grid.nodes, max_n, np.float64, nderiv=0)
    nrm = np.sqrt(wspace.integral_rho(grid, (vals**2).T))
    vals = vals / nrm
    gram = (vals * grid._wrho[:, None]).T @ vals
    ortho_err = float(np.max(np.abs(gram - np.eye(max_n + 1))))
    if ortho_err > 1e-8:
        raise ValueError(
            f"loss of orthogonality {ortho_err:.2e} (grid too coarse for max_n={max_n})")
    eigs = gamma_n(p, np.arange(max_n + 1))
    eig_err = 0.0
    for n in range(max_n + 1):
        f = wspace.ScalarField(grid, vals[:, n])
        resid = apply_L(f).values - eigs[n] * vals[:, n]
        eig_err = max(eig_err, float(np.sqrt(wspace.integral_rho(grid, resid**2)))
                      / max(1.0, abs(eigs[n])))
    # Legendre coefficients by exact quadrature (degrees stay within n-1)
    leg = np.zeros((max_n + 1, max_n + 1))
    for k in range(max_n + 1):
        ek = np.zeros(k + 1)
        ek[k] = 1.0
        pk = npleg.legval(grid.nodes, ek)
        proj = wspace.integral_unit(grid, (vals.T * pk))
        leg[:, k] = (2.0 * k + 1.0) / 2.0 * proj
    return EigenBasis(
        p=float(p), max_n=int(max_n), eigenvalues=eigs, values=vals,
        leg_coeffs=leg, grid=grid,
        diagnostics={"orthogonality": ortho_err, "eigen_residual": eig_err,
                     "construction": "jacobi-recurrence"},
    )


def apply_L(f):
    """Collocation evaluation of L f in the expanded non-divergence form."""
    g = f.grid
    y = g.nodes
    if g._mach is not None:
        m = g._mach
        cu = m.Anu @ f.values
        d1 = m.dPu @ cu
        d2 = m.d2Pu @ cu
    else:
        d1 = g.diff_matrix @ f.values
        d2 = g.diff_matrix @ d1
    vals = (1.0 - y * y) * d2 - (2.0 * (g.p + 1.0) / (g.p - 1.0)) * y * d1
    return wspace.ScalarField(g, vals)


def _require_real(arr, what):
    if np.iscomplexobj(arr):
        if np.max(np.abs(arr.imag)) > 1e-10 * max(1.0, np.max(np.abs(arr))):
            raise ValueError(f"{what} expects real-valued data")
        return arr.real.copy()
    return arr


def poincare_gap_check(u):
    """Signed spectral-gap quantity int u L u rho - gamma_1 int u^2 rho.

    Nonpositive (to round-off) for every mean-zero u; zero exactly on the
    first eigenfunction.
    """
    g = u.grid
    vals = _require_real(u.values, "poincare_gap_check")
    l2 = float(wspace.integral_rho(g, vals**2))
    mean = float(wspace.integral_rho(g, vals))
    if abs(mean) > 1e-10 * max(1.0, np.sqrt(l2)):
        raise ValueError("field is not mean-zero against rho")
    lu = apply_L(wspace.ScalarField(g, vals)).values
    g1 = gamma_n(g.p, 1)
    return float(wspace.integral_rho(g, vals * lu)) - g1 * l2


def elliptic_solve(f, tol=1e-6):
    """Solve (-L + 1) g = f by eigen-expansion on the grid's full basis.

    The truncation residual |(-L+1)g - f|_{L^2_rho} is recorded in the
    returned field's meta and must stay below tol (raised otherwise); for
    smooth f it is spectrally small.
    """
    g = f.grid
    if g._mach is None:
        raise ValueError("elliptic solves require a gauss-interior grid")
    m = g._mach
    coeff = m.Anr @ f.values
    sol = m.Pr @ (coeff / (1.0 - m.gam))
    out = wspace.ScalarField(g, sol)
    resid_vals = sol - apply_L(out).values - f.values
    resid = float(np.sqrt(wspace.integral_rho(g, np.abs(resid_vals) ** 2).real))
    if resid > tol:
        raise ValueError(f"elliptic truncation residual {resid:.2e} above tolerance")
    out.meta = {"residual": resid}
    return out


def _solve_eps_modal(grid, coeff, eps, tol=1e-12):
    """Core of the eps-perturbed solve, acting on eigen-coefficients.

    Returns the coefficient vector of v with ((1-eps) L + eps c) v
    matching the given right-hand-side coefficients; shared between
    solve_eps_equation and the dual-state construction (whose singular
    forcing only exists in coefficient space).
    """
    m = grid._mach
    if not 0.0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 1/2)")
    c = ceps_coefficient(grid.p)
    denom = m.gam + (c - m.gam) * eps
    scale = float(np.max(np.abs(coeff))) or 1.0
    if eps == 0.0:
        if abs(coeff[0]) > tol * scale:
            raise ValueError("vanishing denominator: eps = 0 with nonzero-mean data")
        coeff = coeff.copy()
        coeff[0] = 0.0
        denom = denom.copy()
        denom[0] = 1.0
    if np.any(denom == 0.0):
        raise ValueError("vanishing denominator in the eps-perturbed solve")
    return coeff / denom


def solve_eps_equation(f, eps, tol=1e-12):
    """Solve (1-eps) L v + eps c v = f with c = 2p(p+1)/(p-1)^2.

    Eigen-expansion with denominators gamma_n + (c - gamma_n) eps.  The
    resonant n=0 mode has an O(eps) denominator; its amplification is
    reported in meta.  eps = 0 is allowed only for mean-zero f (the n=0
    denominator vanishes identically there).
    """
    g = f.grid
    if g._mach is None:
        raise ValueError("eigen-expansion solves require a gauss-interior grid")
    m = g._mach
    vcoeff = _solve_eps_modal(g, m.Anr @ f.values, eps, tol=tol)
    out = wspace.ScalarField(g, m.Pr @ vcoeff)
    out.meta = {"resonant_mode0": float(np.abs(vcoeff[0]))}
    return out


def quad_form(q, r, d, variant, eps=None):
    """Quadratic forms of the linearized energy.

    variant "real-part" uses the potential psi_check, "imag-part" uses
    psi_tilde; both evaluate
    int (-psi q1 r1 + q1' r1' (1-y^2) + q2 r2) rho.
    variant "eps" evaluates the eps-deformed imaginary-part form through
    the boost pull-back: the first component is transported by T_{-d},
    expanded in the eigenbasis, and weighted by the exact eigenvalue
    ladder -(1-eps) gamma_n - eps c.
    """
    if not wspace.same_grid(q.grid, r.grid):
        raise ValueError("grid mismatch between state fields")
    if not abs(d) < 1:
        raise ValueError("|d| < 1 required")
    g = q.grid
    q1 = _require_real(q.first, "quad_form")
    q2 = _require_real(q.second, "quad_form")
    r1 = _require_real(r.first, "quad_form")
    r2 = _require_real(r.second, "quad_form")
    if variant in ("real-part", "imag-part"):
        psi = psi_check(g.p, d, g.nodes) if variant == "real-part" \
            else psi_tilde(g.p, d, g.nodes)
        dq = g.diff_matrix @ q1
        dr = g.diff_matrix @ r1
        y2 = 1.0 - g.nodes * g.nodes
        return float(wspace.integral_rho(
            g, -psi * q1 * r1 + dq * dr * y2 + q2 * r2))
    if variant == "eps":
        if eps is None:
            raise ValueError("variant 'eps' needs the eps parameter")
        if g._mach is None:
            raise ValueError("variant 'eps' requires a gauss-interior grid")
        m = g._mach
        c = ceps_coefficient(g.p)
        cq = m.Anr @ stationary.lorentz(wspace.ScalarField(g, q1), -d).values
        cr = m.Anr @ stationary.lorentz(wspace.ScalarField(g, r1), -d).values
        lad = -(1.0 - eps) * m.gam - eps * c
        return float(np.sum(lad * cq * cr)
                     + (1.0 - eps) * wspace.integral_rho(g, q2 * r2))
    raise ValueError(f"unknown quad_form variant: {variant!r}")


def constraint_functional(q1_values, d, grid):
    """Discrete functional whose kernel is the boosted-mean-zero hyperplane.

    Equals int T_{-d}(q1) rho in closed form:
    (1-d^2)^(p/(p-1)) int q1 (1+dy)^(-2p/(p-1)) rho dy.
    """
    p = grid.p
    w = (1.0 - d * d) ** (p / (p - 1.0)) \
        * (1.0 + d * grid.nodes) ** (-2.0 * p / (p - 1.0))
    return complex(wspace.integral_rho(grid, w * np.asarray(q1_values)))


def hyperplane_project(q, d):
    """Project a state onto the hyperplane int T_{-d}(q1) rho = 0.

    Subtracts the unique multiple of the boosted constant mode
    kappa(d,.)/kappa0 from the first component; the second component is
    untouched (the constraint does not involve it).
    """
    if not abs(d) < 1:
        raise ValueError("|d| < 1 required")
    g = q.grid
    mode = stationary.kappa_values(g.p, d, g.nodes) / stationary.kappa0(g.p)
    ell_mode = constraint_functional(mode, d, g).real
    q1 = np.array(q.first, copy=True)
    for _ in range(2):  # one correction pass keeps the residual at round-off
        ell = constraint_functional(q1, d, g)
        q1 = q1 - (ell / ell_mode) * mode
    return wspace.StateField(g, q1, q.second.copy())


def random_fields(grid, count, seed=0, degree=24, kind="state"):
    """Smooth random test corpus: truncated eigen-expansions.

    Coefficients are standard normals damped by 1/(1+n)^2, drawn from a
    seeded generator; degree defaults to 24 as everywhere in the tests.
    """
    rng = np.random.default_rng(seed)
    alpha = 2.0 / (grid.p - 1.0)
    vals, _, _ = _poly.eval_ortho(alpha, grid.nodes, degree, np.float64, nderiv=0)
    nrm = np.sqrt(wspace.integral_rho(grid, (vals**2).T))
    vals = vals / nrm
    damp = 1.0 / (1.0 + np.arange(degree + 1)) ** 2
    out = []
    for _ in range(count):
        if kind == "state":
            c1 = rng.standard_normal(degree + 1) * damp
            c2 = rng.standard_normal(degree + 1) * damp
            out.append(wspace.StateField(grid, vals @ c1, vals @ c2))
        else:
            c1 = rng.standard_normal(degree + 1) * damp
            out.append(wspace.ScalarField(grid, vals @ c1))
    return out
