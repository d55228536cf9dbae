"""Time integration: self-similar flow, physical-space blow-up, transform.

The self-similar equation is advanced as a first-order system in
(w, dw/ds) by explicit RK4 with modal space derivatives; the physical
equation by method-of-lines RK4 on a uniform x-grid.  The similarity
transform connects the two with the blow-up time estimated from the
growth of sup|u|.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import least_squares

from . import stationary, wspace


def _c2(p):
    return 2.0 * (p + 1.0) / (p - 1.0) ** 2


def _c3(p):
    return (p + 3.0) / (p - 1.0)


def energy(state, p):
    """Conserved-up-to-dissipation energy of a (w, dw/ds) pair."""
    g = state.grid
    if p != g.p:
        raise ValueError("exponent p must match the grid's exponent")
    w, v = state.first, state.second
    if g._mach is not None:
        dw = g._mach.dPu @ (g._mach.Anu @ w)
    else:
        dw = g.diff_matrix @ w
    dens = (0.5 * np.abs(v) ** 2
            + 0.5 * np.abs(dw) ** 2 * (1.0 - g.nodes ** 2)
            + (p + 1.0) / (p - 1.0) ** 2 * np.abs(w) ** 2
            - np.abs(w) ** (p + 1.0) / (p + 1.0))
    return float(wspace.integral_rho(g, dens))


def dissipation_rate(state, p):
    """Instantaneous energy dissipation (4/(p-1)) int |dw/ds|^2 rho/(1-y^2)."""
    return 4.0 / (p - 1.0) * float(
        wspace.integral_sing(state.grid, np.abs(state.second) ** 2))


def ball_norms(state):
    """Unweighted size |w|_{H^1(-1,1)} + |dw/ds|_{L^2(-1,1)} of a state."""
    g = state.grid
    dw = g.diff_matrix @ state.first
    h1_sq = wspace.integral_unit(g, np.abs(state.first) ** 2
                                 + np.abs(dw) ** 2).real
    l2_sq = wspace.integral_unit(g, np.abs(state.second) ** 2).real
    return float(np.sqrt(h1_sq) + np.sqrt(l2_sq))


def cfl_limit(grid):
    """Largest stable RK4 step for the grid (empirical policy, c = 0.5)."""
    y = grid.nodes
    gaps = np.diff(y)
    speed = 1.0 + np.abs(0.5 * (y[1:] + y[:-1]))
    return 0.5 * float(np.min(gaps / speed))


def _rhs(grid, p, w, v):
    m = grid._mach
    if m is not None:
        lw = m.Pr @ (m.gam * (m.Anr @ w))
        dv = m.dPu @ (m.Anu @ v)
    else:
        d1 = grid.diff_matrix @ w
        lw = grid.diff_matrix @ ((1.0 - grid.nodes ** 2) * d1) \
            - 4.0 / (p - 1.0) * grid.nodes * d1
        dv = grid.diff_matrix @ v
    wdot = v
    vdot = (lw - _c2(p) * w + np.abs(w) ** (p - 1.0) * w
            - _c3(p) * v - 2.0 * grid.nodes * dv)
    return wdot, vdot


def _rk4(grid, p, w, v, ds):
    k1w, k1v = _rhs(grid, p, w, v)
    k2w, k2v = _rhs(grid, p, w + 0.5 * ds * k1w, v + 0.5 * ds * k1v)
    k3w, k3v = _rhs(grid, p, w + 0.5 * ds * k2w, v + 0.5 * ds * k2v)
    k4w, k4v = _rhs(grid, p, w + ds * k3w, v + ds * k3v)
    return (w + ds / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w),
            v + ds / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v))


def step_selfsimilar(state, ds, p):
    """One explicit RK4 step of the self-similar system."""
    g = state.grid
    if p != g.p:
        raise ValueError("exponent p must match the grid's exponent")
    limit = cfl_limit(g)
    if ds > limit:
        raise ValueError(f"ds={ds:.3e} above the CFL bound {limit:.3e}")
    w, v = _rk4(g, p, np.asarray(state.first, dtype=complex),
                np.asarray(state.second, dtype=complex), ds)
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise FloatingPointError("state became non-finite during the step")
    return wspace.StateField(g, w, v)


def explicit_degenerate_solution(d, mu, grid, s):
    """The exact degenerate pair that slides off the soliton family.

    First component kappa0 (1-d^2)^{1/(p-1)} (1+mu e^s+dy)^{-2/(p-1)};
    at mu=0 this is exactly (kappa(d,.), 0), for mu>0 it decays to zero
    as s grows.
    """
    p = grid.p
    if not abs(d) < 1:
        raise ValueError("|d| < 1 required")
    y = grid.nodes
    base = 1.0 + mu * np.exp(s) + d * y
    if np.min(base) <= 0.0:
        raise ValueError("denominator 1 + mu e^s + dy must stay positive")
    k0 = stationary.kappa0(p)
    amp = k0 * (1.0 - d * d) ** (1.0 / (p - 1.0))
    w = amp * base ** (-2.0 / (p - 1.0))
    v = -(2.0 * mu * np.exp(s) / (p - 1.0)) * amp * base ** (-(p + 1.0) / (p - 1.0))
    return wspace.StateField(grid, w, v)


def _exp_filter(grid, w, v):
    # damp the top 10% of modes; optional device against grid-scale noise
    m = grid._mach
    k = np.arange(m.Pu.shape[1])
    k0 = int(0.9 * k[-1])
    damp = np.ones_like(k, dtype=float)
    hi = k > k0
    damp[hi] = np.exp(-36.0 * ((k[hi] - k0) / (k[-1] - k0)) ** 2)
    wf = m.Pu @ (damp * (m.Anu @ w))
    vf = m.Pu @ (damp * (m.Anu @ v))
    return wf, vf


@dataclass
class SelfSimilarRun:
    """Trajectory of the self-similar flow with its energy bookkeeping."""

    grid: wspace.WeightedGrid
    p: float
    s_samples: np.ndarray
    states: list
    energies: np.ndarray
    dissipation: np.ndarray
    policy: dict
    monitors: dict = field(default_factory=dict)

    def dissipation_identity_residual(self):
        """|dE/ds + dissipation| per interior sample (4th-order dE/ds)."""
        s, E = self.s_samples, self.energies
        if len(s) < 5:
            return np.zeros(0)
        h = s[1] - s[0]
        dE = (-E[4:] + 8.0 * E[3:-1] - 8.0 * E[1:-3] + E[:-4]) / (12.0 * h)
        return np.abs(dE + self.dissipation[2:-2])


def run_selfsimilar(initial, s_span, p, monitors=None, ds=None, ds_out=0.01,
                    energy_tol=1e-6, filtering=False):
    """Integrate the self-similar system over s_span = (s0, s1).

    Samples every ds_out, recording energy, the dissipation-identity
    data, and any monitor callbacks (name -> f(s, state)).  Raises if a
    state goes non-finite or the energy increases by more than
    10 x energy_tol between samples (a solver bug, not physics).
    """
    g = initial.grid
    if p != g.p:
        raise ValueError("exponent p must match the grid's exponent")
    s0, s1 = float(s_span[0]), float(s_span[1])
    if not s1 > s0:
        raise ValueError("s_span must be increasing")
    limit = cfl_limit(g)
    if ds is None:
        ds = limit
    elif ds > limit:
        raise ValueError(f"ds={ds:.3e} above the CFL bound {limit:.3e}")
    n_sub = max(1, int(np.ceil(ds_out / ds)))
    ds_eff = ds_out / n_sub
    n_out = int(np.round((s1 - s0) / ds_out))
    w = np.asarray(initial.first, dtype=complex).copy()
    v = np.asarray(initial.second, dtype=complex).copy()

    s_samples = [s0]
    states = [wspace.StateField(g, w.copy(), v.copy())]
    energies = [energy(states[0], p)]
    dissip = [dissipation_rate(states[0], p)]
    mon_out = {name: [fn(s0, states[0])] for name, fn in (monitors or {}).items()}

    for k in range(n_out):
        for _ in range(n_sub):
            w, v = _rk4(g, p, w, v, ds_eff)
            if filtering:
                w, v = _exp_filter(g, w, v)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
            raise FloatingPointError(
                f"state became non-finite at s={s0 + (k + 1) * ds_out:.4f}")
        s = s0 + (k + 1) * ds_out
        st = wspace.StateField(g, w.copy(), v.copy())
        E = energy(st, p)
        if E > energies[-1] + 10.0 * energy_tol:
            raise RuntimeError(
                f"energy increased by {E - energies[-1]:.3e} at s={s:.4f}; "
                "the integrator is outside its stability envelope")
        s_samples.append(s)
        states.append(st)
        energies.append(E)
        dissip.append(dissipation_rate(st, p))
        for name, fn in (monitors or {}).items():
            mon_out[name].append(fn(s, st))

    return SelfSimilarRun(
        grid=g, p=float(p), s_samples=np.array(s_samples), states=states,
        energies=np.array(energies), dissipation=np.array(dissip),
        policy={"ds": ds_eff, "cfl_limit": limit, "ds_out": ds_out,
                "filtering": bool(filtering), "scheme": "rk4-modal"},
        monitors={k: np.array(vv) for k, vv in mon_out.items()},
    )


@dataclass
class PhysicalRun:
    """Physical-space trajectory with blow-up-time estimate."""

    x_grid: np.ndarray
    p: float
    cone: dict
    dt: float
    t_stored: np.ndarray
    u_stored: np.ndarray
    ut_stored: np.ndarray
    t_trace: np.ndarray
    sup_trace: np.ndarray
    That: float
    fit: dict
    halted: str


def _fit_blowup_time(t_arr, sup_arr, p, sup_cap):
    """Fit sup|u| ~ C (T-t)^{-2/(p-1)} on the top half-decade of samples.

    Wider windows mix in pre-asymptotic growth and bias T; the half
    decade below the last resolved amplitude is where the power law has
    set in while the explicit scheme still resolves the solution.
    """
    valid = sup_arr <= sup_cap
    t_v, s_v = t_arr[valid], sup_arr[valid]
    if len(t_v) < 10:
        raise RuntimeError("too few resolved samples to fit the blow-up time")
    top = s_v[-1]
    window = s_v >= top / np.sqrt(10.0)
    t_w, s_w = t_v[window], s_v[window]
    if len(t_w) < 10:
        keep = min(len(t_v), 50)
        t_w, s_w = t_v[-keep:], s_v[-keep:]
    rate = 2.0 / (p - 1.0)
    # initial guess: local log-derivative gives T - t
    i0, i1 = len(t_w) // 2, len(t_w) - 1
    slope = (np.log(s_w[i1]) - np.log(s_w[i0])) / (t_w[i1] - t_w[i0])
    T0 = t_w[i1] + rate / max(slope, 1e-12)
    logC0 = np.log(s_w[i1]) - rate * np.log(max(T0 - t_w[i1], 1e-300))

    def resid(params):
        logC, T = params
        tau = np.maximum(T - t_w, 1e-300)
        return np.log(s_w) - (logC - rate * np.log(tau))

    sol = least_squares(resid, x0=[logC0, T0],
                        bounds=([-np.inf, t_w[-1] + 1e-12], [np.inf, np.inf]))
    logC, T = sol.x
    return float(T), {"C": float(np.exp(logC)), "rate": rate,
                      "window": [float(t_w[0]), float(t_w[-1])],
                      "n_fit": int(len(t_w)), "cost": float(sol.cost)}


def run_physical(u0, u1, x_grid, cone, p, cfl=0.4, t_max=10.0, overflow=1e12):
    """Method-of-lines RK4 for the physical wave equation until blow-up.

    Centered second differences in x with homogeneous Dirichlet ends,
    dt = cfl dx.  Halts when sup|u| exceeds the overflow threshold and
    fits the blow-up time from the growth of sup|u| (only samples the
    explicit scheme still resolves enter the fit).  Raises if nothing
    blows up before t_max.
    """
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise ValueError("x_grid must be a 1-D array with at least 8 points")
    if not 0.0 < cone.get("delta0", 0.0) < 1.0:
        raise ValueError("cone slope delta0 must lie in (0, 1)")
    if not x[0] < cone["x0"] < x[-1]:
        raise ValueError("cone vertex x0 must lie inside x_grid")
    dx = x[1] - x[0]
    dt = cfl * dx
    cmplx = np.iscomplexobj(u0) or np.iscomplexobj(u1)
    dtype = complex if cmplx else float
    u = np.asarray(u0, dtype=dtype).copy()
    ut = np.asarray(u1, dtype=dtype).copy()
    if u.shape != x.shape or ut.shape != x.shape:
        raise ValueError("data shape must match x_grid")

    def rhs(u, ut):
        uxx = np.zeros_like(u)
        uxx[1:-1] = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / dx ** 2
        return ut, uxx + np.abs(u) ** (p - 1.0) * u

    t = 0.0
    t_trace, sup_trace = [0.0], [float(np.max(np.abs(u)))]
    t_st, u_st, ut_st = [0.0], [u.copy()], [ut.copy()]
    stride, since = 1, 0
    halted = "t_max"
    n_steps = int(np.ceil(t_max / dt))
    for _ in range(n_steps):
        k1u, k1v = rhs(u, ut)
        k2u, k2v = rhs(u + 0.5 * dt * k1u, ut + 0.5 * dt * k1v)
        k3u, k3v = rhs(u + 0.5 * dt * k2u, ut + 0.5 * dt * k2v)
        k4u, k4v = rhs(u + dt * k3u, ut + dt * k3v)
        u = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        ut = ut + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        t += dt
        sup = float(np.max(np.abs(u)))
        t_trace.append(t)
        sup_trace.append(sup)
        since += 1
        if since >= stride:
            t_st.append(t)
            u_st.append(u.copy())
            ut_st.append(ut.copy())
            since = 0
            if len(t_st) >= 1200:  # thin the archive, keep memory bounded
                t_st, u_st, ut_st = t_st[::2], u_st[::2], ut_st[::2]
                stride *= 2
        if not np.isfinite(sup) or sup > overflow:
            halted = "overflow"
            break
    if halted != "overflow":
        raise RuntimeError(f"no blow-up detected within t_max={t_max}")

    sup_cap = (0.4 / (dt * np.sqrt(p))) ** (2.0 / (p - 1.0))
    That, fit = _fit_blowup_time(np.array(t_trace), np.array(sup_trace), p, sup_cap)
    return PhysicalRun(
        x_grid=x, p=float(p), cone=dict(cone), dt=dt,
        t_stored=np.array(t_st), u_stored=np.array(u_st),
        ut_stored=np.array(ut_st), t_trace=np.array(t_trace),
        sup_trace=np.array(sup_trace), That=That, fit=fit, halted=halted)


def to_selfsimilar(run, x0, That, grid=None, s_max=None):
    """Transform stored physical frames into self-similar states.

    For each stored t < That with the light cone inside the x-grid,
    interpolates u and its derivatives by cubic splines and applies the
    similarity change of variables; returns StateFields carrying s in
    their meta.
    """
    if grid is None:
        grid = wspace.build_grid(64, run.p)
    p = run.p
    rate = 2.0 / (p - 1.0)
    # frames past this amplitude were not resolved by the explicit scheme
    sup_cap = (0.4 / (run.dt * np.sqrt(p))) ** (2.0 / (p - 1.0))
    out = []
    for i, t in enumerate(run.t_stored):
        tau = That - t
        if tau <= 0.0:
            break
        if x0 - tau < run.x_grid[0] or x0 + tau > run.x_grid[-1]:
            continue
        u_row, ut_row = run.u_stored[i], run.ut_stored[i]
        if not np.all(np.isfinite(u_row)) or np.max(np.abs(u_row)) > sup_cap:
            continue
        xq = x0 + tau * grid.nodes
        if np.iscomplexobj(u_row):
            spl = CubicSpline(run.x_grid, u_row.real), CubicSpline(run.x_grid, u_row.imag)
            uval = spl[0](xq) + 1j * spl[1](xq)
            uxval = spl[0](xq, 1) + 1j * spl[1](xq, 1)
            spl_t = CubicSpline(run.x_grid, ut_row.real), CubicSpline(run.x_grid, ut_row.imag)
            utval = spl_t[0](xq) + 1j * spl_t[1](xq)
        else:
            spl = CubicSpline(run.x_grid, u_row)
            uval, uxval = spl(xq), spl(xq, 1)
            utval = CubicSpline(run.x_grid, ut_row)(xq)
        w = tau ** rate * uval
        # d/ds at fixed y: s = -log(T-t), x = x0 + (T-t) y
        ws = tau ** (rate + 1.0) * utval - rate * w - grid.nodes * tau ** (rate + 1.0) * uxval
        st = wspace.StateField(grid, w, ws)
        st.meta = {"s": float(-np.log(tau)), "t": float(t)}
        out.append(st)
    if not out:
        raise ValueError("no stored samples inside the requested cone")
    if s_max is not None and s_max > out[-1].meta["s"]:
        raise ValueError(
            f"requested s={s_max:.3f} beyond available samples "
            f"(last s={out[-1].meta['s']:.3f})")
    return out
