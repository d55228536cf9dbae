"""The stationary family, its boost transform, and the ODE characterization.

Nonzero stationary solutions in similarity variables form a two-parameter
family e^{i theta} kappa(d, y) with |d| < 1; d is generated by a Lorentz
boost acting on the constant solution kappa0, and the additive parameter
of that group is the rapidity lam = arctanh d.  On the line, stationary
profiles correspond to connections of a conservative ODE in the unwound
variable xi with kappa0 / cosh^(2/(p-1)) as the decaying branch.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import _poly, wspace

PHASE_THRESHOLD = 1e-10  # |v| below this leaves the phase rate undefined


def kappa0(p):
    """The constant stationary amplitude (2(p+1)/(p-1)^2)^(1/(p-1))."""
    if p <= 1.0 + 1e-6:
        raise ValueError("p too close to 1; the amplitude diverges")
    return (2.0 * (p + 1.0) / (p - 1.0) ** 2) ** (1.0 / (p - 1.0))


@dataclass
class SolitonParams:
    """Parameters (d, theta) of the stationary solution e^{i theta} kappa(d,.).

    theta is stored unreduced; comparisons should use angular distance.
    lam is the rapidity arctanh d, the additive boost parameter.
    """

    d: float
    theta: float
    lam: float = None

    def __post_init__(self):
        if not abs(self.d) < 1:
            raise ValueError("soliton parameter d must satisfy |d| < 1")
        lam = math.atanh(self.d)
        if self.lam is None:
            self.lam = lam
        elif abs(self.lam - lam) > 1e-14 * max(1.0, abs(lam)):
            raise ValueError("inconsistent rapidity: lam != arctanh d")


def kappa_values(p, d, y):
    """Real profile kappa(d, y) = kappa0 (1-d^2)^(1/(p-1)) / (1+dy)^(2/(p-1))."""
    e = 1.0 / (p - 1.0)
    return kappa0(p) * (1.0 - d * d) ** e / (1.0 + d * np.asarray(y)) ** (2.0 * e)


def kappa_profile(params, grid):
    """Complex field e^{i theta} kappa(d, .) sampled on the grid."""
    vals = kappa_values(grid.p, params.d, grid.nodes)
    return wspace.ScalarField(grid, np.exp(1j * params.theta) * vals)


def lorentz(f, d):
    """Boost T_d of a scalar field, resampled on its own grid.

    T_d(f)(Y) = (1-d^2)^(1/(p-1)) / (1+dY)^(2/(p-1)) * f((Y+d)/(1+dY)),
    with f evaluated off the nodes by barycentric interpolation.  T_d maps
    the constant kappa0 to kappa(d, .) and is additive in the rapidity.
    """
    if not abs(d) < 1:
        raise ValueError("boost parameter must satisfy |d| < 1")
    g = f.grid
    if d == 0.0:
        return wspace.ScalarField(g, f.values.copy())
    Y = g.nodes
    ymap = (Y + d) / (1.0 + d * Y)
    vals = _poly.bary_interp(g.nodes, g.bary(), f.values, ymap)
    e = 1.0 / (g.p - 1.0)
    pref = (1.0 - d * d) ** e / (1.0 + d * Y) ** (2.0 * e)
    return wspace.ScalarField(g, pref * vals)


def stationary_residual(f, p):
    """Weighted L^2_rho norm of the stationary equation applied to f.

    The equation is (1/rho)(rho (1-y^2) f')' - (2(p+1)/(p-1)^2) f
    + |f|^{p-1} f = 0.  On gauss-interior grids the operator is applied
    through the modal eigenvalue ladder in extended precision, so the
    returned number reflects true truncation rather than the float64
    round-off floor of repeated differentiation.
    """
    g = f.grid
    if p != g.p:
        raise ValueError("exponent p must match the grid's exponent")
    c2 = 2.0 * (p + 1.0) / (p - 1.0) ** 2
    if g.kind == "gauss-interior":
        m = g.machinery_ld()
        if np.iscomplexobj(f.values):
            v = f.values.astype(np.clongdouble)
        else:
            v = f.values.astype(np.longdouble)
        lv = m.apply_l(v)
        resid = lv - c2 * v + np.abs(v) ** (p - 1.0) * v
        val = np.sqrt(np.sum(m.wrho * np.abs(resid) ** 2))
        return float(val)
    v = f.values
    dv = g.diff_matrix @ v
    d2v = g.diff_matrix @ dv
    y = g.nodes
    lv = (1.0 - y * y) * d2v - (2.0 * (p + 1.0) / (p - 1.0)) * y * dv
    resid = lv - c2 * v + np.abs(v) ** (p - 1.0) * v
    return float(np.sqrt(wspace.integral_rho(g, np.abs(resid) ** 2).real))


@dataclass
class ConnectionTrajectory:
    """Solution samples of the unwound stationary ODE v'' + |v|^{p-1}v = c0 v."""

    xi_samples: np.ndarray
    v: np.ndarray
    v_prime: np.ndarray
    r: np.ndarray
    h: np.ndarray
    mu: float
    p: float
    energy_samples: np.ndarray
    branch: str  # "zero" | "connection" | "non-decaying"


def connection_profile(p, xi):
    """The decaying connection kappa0 / cosh^(2/(p-1))(xi)."""
    return kappa0(p) / np.cosh(np.asarray(xi)) ** (2.0 / (p - 1.0))


def integrate_connection_ode(v0, v0p, xi_max, p, n_samples=1601, tol=1e-12):
    """Integrate the stationary ODE on [-xi_max, xi_max].

    The complex equation v'' + |v|^{p-1} v - c0 v = 0 with c0 = 4/(p-1)^2
    conserves the angular momentum mu = h(0)^2 r(0)^4 (r = |v|, h = phase
    rate) and the scalar energy 0.5 r'^2 + mu/(2 r^2) - c0 r^2 / 2
    + r^{p+1}/(p+1).  The trajectory is labeled "connection" when it
    matches a rotated translate of kappa0/cosh^(2/(p-1)).
    """
    v0 = complex(v0)
    v0p = complex(v0p)
    if v0 == 0 and v0p == 0:
        raise ValueError("initial data must be nonzero")
    if abs(v0) < PHASE_THRESHOLD:
        raise ValueError("|v(0)| below the phase threshold; mu undefined")
    c0 = 4.0 / (p - 1.0) ** 2

    def rhs(_, z):
        v = z[0] + 1j * z[1]
        acc = c0 * v - np.abs(v) ** (p - 1.0) * v
        return [z[2], z[3], acc.real, acc.imag]

    z0 = [v0.real, v0.imag, v0p.real, v0p.imag]
    xs = np.linspace(-xi_max, xi_max, n_samples)
    sols = {}
    for sign in (-1.0, 1.0):
        t_eval = xs[xs * sign >= 0][:: int(sign)]
        sol = solve_ivp(rhs, (0.0, sign * xi_max), z0, method="DOP853",
                        rtol=tol, atol=tol, t_eval=t_eval, dense_output=False)
        if not sol.success:
            raise RuntimeError(f"connection ODE integration failed: {sol.message}")
        sols[sign] = sol
    zl = sols[-1.0].y[:, ::-1]
    zr = sols[1.0].y
    z = np.concatenate([zl[:, :-1], zr], axis=1)
    v = z[0] + 1j * z[1]
    vp = z[2] + 1j * z[3]

    r = np.abs(v)
    h = np.full_like(r, np.nan)
    mask = r > PHASE_THRESHOLD
    h[mask] = (np.conj(v[mask]) * vp[mask]).imag / r[mask] ** 2
    i0 = n_samples // 2
    mu = float(h[i0] ** 2 * r[i0] ** 4)

    rp = np.zeros_like(r)
    rp[mask] = (np.conj(v[mask]) * vp[mask]).real / r[mask]
    with np.errstate(divide="ignore", invalid="ignore"):
        energy = 0.5 * rp**2 + np.where(mask, mu / (2.0 * r**2), 0.0) \
            - 0.5 * c0 * r**2 + r ** (p + 1.0) / (p + 1.0)

    k0 = kappa0(p)
    if r.max() < 1e-12 * k0:
        branch = "zero"
    else:
        branch = "non-decaying"
        if abs(mu) < 1e-8 * k0**4:
            ipk = int(np.argmax(r))
            if 0 < ipk < len(xs) - 1:
                # parabolic refinement of the modulus peak
                y0, y1, y2 = r[ipk - 1], r[ipk], r[ipk + 1]
                denom = y0 - 2 * y1 + y2
                shift = 0.5 * (y0 - y2) / denom if denom != 0 else 0.0
                xi_pk = xs[ipk] + shift * (xs[1] - xs[0])
            else:
                xi_pk = xs[ipk]
            theta0 = float(np.angle(v[ipk]))
            model = np.exp(1j * theta0) * connection_profile(p, xs - xi_pk)
            if np.max(np.abs(v - model)) < 1e-6 * k0:
                branch = "connection"

    return ConnectionTrajectory(
        xi_samples=xs, v=v, v_prime=vp, r=r, h=h, mu=mu, p=p,
        energy_samples=energy, branch=branch,
    )


def connection_table(traj):
    """Comma-separated table (xi, Re v, Im v, r, h) of a trajectory."""
    lines = ["xi,re_v,im_v,r,h"]
    for k in range(len(traj.xi_samples)):
        lines.append("%.17g,%.17g,%.17g,%.17g,%.17g" % (
            traj.xi_samples[k], traj.v[k].real, traj.v[k].imag,
            traj.r[k], traj.h[k]))
    return "\n".join(lines) + "\n"


@dataclass
class StationaryClass:
    """Classification of a field against the stationary family."""

    kind: str  # "zero" | "soliton" | "not-stationary"
    params: SolitonParams = None
    distance: float = 0.0


def classify_stationary(f, tol):
    """Classify f as zero, a member e^{i theta} kappa(d,.), or neither.

    The fit seeds theta from the phase at the modulus maximizer and d from
    the closed-form modulus ratio at the extreme nodes, then refines both
    by Gauss-Newton in the (rapidity, theta) chart.  Acceptance compares
    the H0 distance to the fitted member against tol.
    """
    g = f.grid
    p = g.p
    nrm = wspace.norms(f)["H0"]
    if nrm < tol:
        return StationaryClass("zero", None, nrm)
    amp = np.abs(f.values)
    jstar = int(np.argmax(amp))
    theta = float(np.angle(f.values[jstar]))
    ratio = amp[-1] / amp[0]
    t = ratio ** ((p - 1.0) / 2.0)
    ymax = g.nodes[-1]
    d_seed = (1.0 - t) / ((1.0 + t) * ymax)
    d = float(np.clip(d_seed, -0.999999, 0.999999))
    lam = math.atanh(d)

    def h0_inner(u, w):
        du = g.diff_matrix @ u
        dw = g.diff_matrix @ w
        y2 = 1.0 - g.nodes * g.nodes
        vals = (u * np.conj(w) + du * np.conj(dw) * y2)
        return complex(wspace.integral_rho(g, vals))

    for _ in range(20):
        d = math.tanh(lam)
        kap = kappa_values(p, d, g.nodes)
        model = np.exp(1j * theta) * kap
        res = f.values - model
        # columns of the Gauss-Newton Jacobian in (lam, theta)
        e = 1.0 / (p - 1.0)
        f0 = (1.0 - d * d) ** e * (g.nodes + d) / (1.0 + d * g.nodes) ** (2.0 * e + 1.0)
        col_lam = -np.exp(1j * theta) * (2.0 * kappa0(p) / (p - 1.0)) * f0
        col_theta = 1j * model
        # normal equations over the real inner product Re<.,.>_{H0}
        a11 = h0_inner(col_lam, col_lam).real
        a12 = h0_inner(col_lam, col_theta).real
        a22 = h0_inner(col_theta, col_theta).real
        b1 = h0_inner(res, col_lam).real
        b2 = h0_inner(res, col_theta).real
        det = a11 * a22 - a12 * a12
        if det <= 0:
            break
        dlam = (a22 * b1 - a12 * b2) / det
        dtheta = (a11 * b2 - a12 * b1) / det
        lam += dlam
        theta += dtheta
        if abs(dlam) + abs(dtheta) < 1e-15:
            break
    d = math.tanh(lam)
    model = np.exp(1j * theta) * kappa_values(p, d, g.nodes)
    dist = np.sqrt(max(_h0_dist_sq(g, f.values - model), 0.0))
    if dist < tol:
        return StationaryClass("soliton", SolitonParams(d, theta), dist)
    return StationaryClass("not-stationary", None, dist)


def _h0_dist_sq(g, vals):
    dv = g.diff_matrix @ vals
    y2 = 1.0 - g.nodes * g.nodes
    return float(wspace.integral_rho(
        g, np.abs(vals) ** 2 + np.abs(dv) ** 2 * y2).real)
