"""Discrete weighted spaces on (-1,1).

The weight rho(y) = (1-y^2)^(2/(p-1)) degenerates at both endpoints and
the continuous problem imposes no boundary condition there, so every
grid keeps its nodes strictly inside the interval.  A grid carries three
quadratures: against the unit weight (quad_weights), against rho, and
against rho/(1-y^2), plus a dense collocation differentiation matrix.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _poly


def eval_weight(y, p):
    """Weight rho(y) = (1-y^2)^(2/(p-1)) for |y| < 1."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    y = np.asarray(y, dtype=np.float64)
    if np.any(np.abs(y) >= 1):
        raise ValueError("weight is only defined for |y| < 1")
    out = (1.0 - y * y) ** (2.0 / (p - 1.0))
    return out if out.ndim else float(out)


@dataclass
class WeightedGrid:
    """Interior collocation grid for the weighted spaces on (-1,1)."""

    p: float
    nodes: np.ndarray
    quad_weights: np.ndarray
    rho: np.ndarray
    diff_matrix: np.ndarray
    metadata: dict
    _mach: object = field(default=None, repr=False)
    _wrho: np.ndarray = field(default=None, repr=False)
    _wsing: np.ndarray = field(default=None, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.nodes)

    @property
    def kind(self):
        return self.metadata["kind"]

    def machinery_ld(self):
        """Extended-precision twin of the collocation machinery (lazy)."""
        if self.kind != "gauss-interior":
            raise ValueError("extended-precision machinery requires a gauss-interior grid")
        if "ld" not in self._cache:
            self._cache["ld"] = _poly.GridMachinery(self.n, self.p, dtype=np.longdouble)
        return self._cache["ld"]

    def bary(self):
        """Barycentric weights of the node set (lazy)."""
        if "bary" not in self._cache:
            self._cache["bary"] = _poly.bary_weights(self.nodes)
        return self._cache["bary"]


def build_grid(n, p, kind="gauss-interior"):
    """Build an n-node interior grid for exponent p.

    gauss-interior places the nodes at the Gauss points of the weight
    (1-y^2)^(2/(p-1)-1); folding one power of (1-y^2) into the weights
    then integrates f*rho exactly through degree 2n-3 and f*rho/(1-y^2)
    through 2n-1.  quad_weights integrate against the unit weight
    (interpolatory, exact through degree n-1).  uniform-interior is a
    composite-midpoint / finite-difference fallback used in robustness
    probes.
    """
    if not isinstance(n, (int, np.integer)) or n < 8:
        raise ValueError("n too small (need an integer n >= 8)")
    if p <= 1:
        raise ValueError("p must exceed 1")
    if kind == "gauss-interior":
        mach = _poly.GridMachinery(n, p, dtype=np.float64)
        nodes = mach.x
        qw = mach.qw
        if np.any(qw <= 0):
            raise ValueError("interpolatory unit weights lost positivity; reduce n")
        diff = mach.dPu @ mach.Anu
        metadata = {
            "n": int(n),
            "p": float(p),
            "kind": kind,
            "exactness": int(n - 1),
            "rho_exactness": int(2 * n - 3),
            "sing_exactness": int(2 * n - 1),
            "nodes": "gauss points of (1-y^2)^(2/(p-1)-1), Newton-polished",
        }
        grid = WeightedGrid(
            p=float(p),
            nodes=nodes,
            quad_weights=qw,
            rho=eval_weight(nodes, p),
            diff_matrix=diff,
            metadata=metadata,
            _mach=mach,
            _wrho=mach.wrho,
            _wsing=mach.wsing,
        )
        return grid
    if kind == "uniform-interior":
        h = 2.0 / n
        nodes = -1.0 + h * (np.arange(n) + 0.5)
        rho = eval_weight(nodes, p)
        diff = np.zeros((n, n))
        for j in range(1, n - 1):
            diff[j, j - 1] = -0.5 / h
            diff[j, j + 1] = 0.5 / h
        diff[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
        diff[-1, -3:] = np.array([0.5, -2.0, 1.5]) / h
        metadata = {
            "n": int(n),
            "p": float(p),
            "kind": kind,
            "exactness": 1,
            "rho_exactness": 1,
            "sing_exactness": 1,
            "nodes": "cell midpoints",
        }
        return WeightedGrid(
            p=float(p),
            nodes=nodes,
            quad_weights=np.full(n, h),
            rho=rho,
            diff_matrix=diff,
            metadata=metadata,
            _mach=None,
            _wrho=h * rho,
            _wsing=h * rho / (1.0 - nodes * nodes),
        )
    raise ValueError(f"unknown grid kind: {kind!r}")


def same_grid(g1, g2):
    """Whether two grids are interchangeable for field operations."""
    if g1 is g2:
        return True
    return (
        g1.p == g2.p
        and g1.kind == g2.kind
        and g1.n == g2.n
        and np.array_equal(g1.nodes, g2.nodes)
    )


def _as_values(values, n):
    v = np.asarray(values)
    if v.shape != (n,):
        raise ValueError(f"field length {v.shape} does not match grid size {n}")
    if not np.issubdtype(v.dtype, np.inexact):
        v = v.astype(np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("field contains non-finite entries")
    return v


@dataclass
class ScalarField:
    """Complex samples of a scalar function at the grid nodes."""

    grid: WeightedGrid
    values: np.ndarray
    meta: dict = None

    def __post_init__(self):
        self.values = _as_values(self.values, self.grid.n)


@dataclass
class StateField:
    """Sampled pair (w, ds_w): the dynamical state in similarity variables."""

    grid: WeightedGrid
    first: np.ndarray
    second: np.ndarray
    meta: dict = None

    def __post_init__(self):
        self.first = _as_values(self.first, self.grid.n)
        self.second = _as_values(self.second, self.grid.n)


def integral_rho(grid, values):
    """Quadrature of values against rho."""
    return np.sum(grid._wrho * np.asarray(values), axis=-1)


def integral_sing(grid, values):
    """Quadrature of values against rho/(1-y^2)."""
    return np.sum(grid._wsing * np.asarray(values), axis=-1)


def integral_unit(grid, values):
    """Quadrature of values against the unit weight."""
    return np.sum(grid.quad_weights * np.asarray(values), axis=-1)


def inner_phi(q, r):
    """Hermitian inner product of two states.

    phi(q, r) = int (q1 conj(r1) + q1' conj(r1') (1-y^2) + q2 conj(r2)) rho,
    with derivatives taken through the grid's differentiation matrix.
    Conjugate-symmetric to round-off.
    """
    if not same_grid(q.grid, r.grid):
        raise ValueError("grid mismatch between state fields")
    g = q.grid
    dq = g.diff_matrix @ q.first
    dr = g.diff_matrix @ r.first
    y2 = 1.0 - g.nodes * g.nodes
    integrand = (
        q.first * np.conj(r.first)
        + dq * np.conj(dr) * y2
        + q.second * np.conj(r.second)
    )
    val = complex(integral_rho(g, integrand))
    if not (np.iscomplexobj(q.first) or np.iscomplexobj(q.second)
            or np.iscomplexobj(r.first) or np.iscomplexobj(r.second)):
        return val.real
    return val


def _h0_sq(grid, values):
    dv = grid.diff_matrix @ values
    y2 = 1.0 - grid.nodes * grid.nodes
    return float(integral_rho(grid, np.abs(dv) ** 2 * y2 + np.abs(values) ** 2).real)


def norms(f):
    """All norms of a field: H, H0, L2rho and L^(p+1)_rho.

    For a ScalarField the state norm H treats the field as (f, 0); for a
    StateField the scalar norms (H0, L2rho, Lp1rho) refer to the first
    component.
    """
    g = f.grid
    if isinstance(f, StateField):
        first, second = f.first, f.second
    else:
        first, second = f.values, np.zeros_like(f.values)
    h_sq = _h0_sq(g, first) + float(integral_rho(g, np.abs(second) ** 2).real)
    p = g.p
    return {
        "H": float(np.sqrt(max(h_sq, 0.0))),
        "H0": float(np.sqrt(_h0_sq(g, first))),
        "L2rho": float(np.sqrt(integral_rho(g, np.abs(first) ** 2).real)),
        "Lp1rho": float(integral_rho(g, np.abs(first) ** (p + 1.0)).real ** (1.0 / (p + 1.0))),
    }


def hardy_sobolev_ratio(h):
    """Composite trace/embedding ratio of a scalar field.

    [ (int h^2 rho/(1-y^2))^(1/2) + |h|_{L^{p+1}_rho}
      + sup |h| (1-y^2)^(1/(p-1)) ] / |h|_{H0}.
    Bounded uniformly over the smooth test corpus.
    """
    g = h.grid
    denom = np.sqrt(_h0_sq(g, h.values))
    if denom == 0.0:
        raise ValueError("hardy_sobolev_ratio of the zero field")
    p = g.p
    t1 = float(np.sqrt(integral_sing(g, np.abs(h.values) ** 2).real))
    t2 = float(integral_rho(g, np.abs(h.values) ** (p + 1.0)).real ** (1.0 / (p + 1.0)))
    t3 = float(np.max(np.abs(h.values) * np.sqrt(g.rho)))
    return (t1 + t2 + t3) / denom
