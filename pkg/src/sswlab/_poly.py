"""Orthonormal symmetric Jacobi polynomials and Gauss-type quadrature.

Only the symmetric weight (1-x^2)^a on (-1,1) is needed here.  Every
routine takes a dtype argument so one code path serves both the fast
float64 machinery and the extended-precision (numpy.longdouble)
diagnostics used for truncation studies.
"""

import numpy as np
from scipy.special import gammaln, roots_jacobi


def recurrence(a, K, dtype=np.float64):
    """Three-term recurrence data for the orthonormal family of (1-x^2)^a.

    Parameters
    ----------
    a : float
        Weight exponent, a > -1.
    K : int
        Highest degree needed.
    dtype : numpy dtype
        Arithmetic precision for the returned arrays.

    Returns
    -------
    mu0 : scalar
        Total mass of the weight, used to normalize degree 0.
    b : ndarray, shape (K,)
        b[k-1] = sqrt(beta_k) so that the orthonormal polynomials satisfy
        p_{k+1}(x) = (x p_k(x) - b_k p_{k-1}(x)) / b_{k+1}.
    """
    dt = np.dtype(dtype).type
    aa = dt(a)
    mu0 = dt(np.exp((2.0 * float(a) + 1.0) * np.log(2.0)
                    + 2.0 * gammaln(float(a) + 1.0) - gammaln(2.0 * float(a) + 2.0)))
    ks = np.arange(1, K + 1, dtype=dtype)
    with np.errstate(invalid="ignore", divide="ignore"):
        beta = ks * (ks + 2 * aa) / ((2 * ks + 2 * aa + 1) * (2 * ks + 2 * aa - 1))
    if K >= 1:
        # the general formula is 0/0 at k=1 when a = -1/2; this closed form
        # is the correct limit for every a
        beta[0] = dt(1) / (3 + 2 * aa)
    return mu0, np.sqrt(beta)


def eval_ortho(a, x, K, dtype=np.float64, nderiv=2):
    """Evaluate the orthonormal polynomials of (1-x^2)^a and derivatives.

    Returns (P, dP, d2P), each of shape (len(x), K+1); entries beyond
    nderiv are None.
    """
    x = np.asarray(x, dtype=dtype)
    n = x.shape[0]
    mu0, b = recurrence(a, max(K, 1), dtype)
    P = np.zeros((n, K + 1), dtype=dtype)
    dP = np.zeros_like(P) if nderiv >= 1 else None
    d2P = np.zeros_like(P) if nderiv >= 2 else None
    P[:, 0] = 1 / np.sqrt(mu0)
    if K >= 1:
        P[:, 1] = x * P[:, 0] / b[0]
        if nderiv >= 1:
            dP[:, 1] = P[:, 0] / b[0]
    for k in range(1, K):
        P[:, k + 1] = (x * P[:, k] - b[k - 1] * P[:, k - 1]) / b[k]
        if nderiv >= 1:
            dP[:, k + 1] = (P[:, k] + x * dP[:, k] - b[k - 1] * dP[:, k - 1]) / b[k]
        if nderiv >= 2:
            d2P[:, k + 1] = (2 * dP[:, k] + x * d2P[:, k] - b[k - 1] * d2P[:, k - 1]) / b[k]
    return P, dP, d2P


def gauss_rule(n, a):
    """n-point Gauss rule for the weight (1-x^2)^a, in longdouble.

    Nodes are seeded from the float64 Jacobi roots and polished with
    Newton steps on the orthonormal recurrence; weights come from the
    Christoffel function 1 / sum_k p_k(x)^2.
    """
    x0, _ = roots_jacobi(n, float(a), float(a))
    x = x0.astype(np.longdouble)
    for _ in range(3):
        P, dP, _ = eval_ortho(a, x, n, np.longdouble, nderiv=1)
        x = x - P[:, n] / dP[:, n]
    x = (x - x[::-1]) / 2  # the weight is even; keep the node set symmetric
    P, _, _ = eval_ortho(a, x, n - 1, np.longdouble, nderiv=0)
    w = 1.0 / np.sum(P * P, axis=1)
    w = (w + w[::-1]) / 2
    return x, w


def unit_weights(x, w_gauss, a):
    """Interpolatory quadrature weights against the unit weight on nodes x.

    For a == 0 the Gauss weights already integrate dx.  Otherwise solve
    the orthonormal-Legendre moment system with one step of iterative
    refinement carried in longdouble.
    """
    n = len(x)
    if a == 0:
        return np.array(w_gauss, dtype=np.longdouble, copy=True)
    P, _, _ = eval_ortho(0.0, x, n - 1, np.longdouble, nderiv=0)
    V = P.T.copy()  # V[k, j] = Le_k(x_j)
    m = np.zeros(n, dtype=np.longdouble)
    m[0] = np.sqrt(np.longdouble(2))  # integral of the constant mode
    V64 = V.astype(np.float64)
    qw = np.linalg.solve(V64, m.astype(np.float64)).astype(np.longdouble)
    resid = m - V @ qw
    qw = qw + np.linalg.solve(V64, resid.astype(np.float64)).astype(np.longdouble)
    return qw


def bary_weights(x):
    """Barycentric interpolation weights for arbitrary distinct nodes.

    Computed through logarithms so clustered Gauss nodes do not over- or
    underflow; only the (irrelevant) common scale is dropped.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    logw = np.zeros(n)
    sign = np.ones(n)
    for j in range(n):
        diff = x[j] - x
        diff = np.delete(diff, j)
        logw[j] = -np.sum(np.log(np.abs(diff)))
        sign[j] = np.prod(np.sign(diff))
    logw -= logw.max()
    return sign * np.exp(logw)


def bary_interp(x, w, fvals, xq):
    """Barycentric interpolation of nodal data fvals onto query points xq."""
    x = np.asarray(x, dtype=np.float64)
    xq = np.asarray(xq, dtype=np.float64)
    fvals = np.asarray(fvals)
    num = np.zeros(xq.shape, dtype=fvals.dtype)
    den = np.zeros(xq.shape, dtype=np.float64)
    exact = np.full(xq.shape, -1, dtype=np.int64)
    for j in range(len(x)):
        diff = xq - x[j]
        hit = diff == 0.0
        if np.any(hit):
            exact[hit] = j
            diff[hit] = 1.0
        c = w[j] / diff
        num = num + c * fvals[j]
        den = den + c
    out = num / den
    mask = exact >= 0
    if np.any(mask):
        out[mask] = fvals[exact[mask]]
    return out


class GridMachinery:
    """Collocation matrices attached to a Gauss-type grid.

    Carries the differentiation bases for the plain weight (exponent a,
    used for nodal derivatives) and the spectral basis for the full
    weight (exponent alpha = a+1), with the eigenvalue ladder of the
    degenerate operator.  Built in a chosen dtype.
    """

    def __init__(self, n, p, dtype=np.float64):
        self.dtype = np.dtype(dtype)
        ld = np.longdouble
        alpha = 2.0 / (p - 1.0)
        a = alpha - 1.0
        x_ld, w_ld = gauss_rule(n, a)
        qw_ld = unit_weights(x_ld, w_ld, a)
        wrho_ld = w_ld * (1 - x_ld * x_ld)

        def cast(v):
            return np.asarray(v, dtype=dtype)

        self.a = a
        self.alpha = alpha
        self.p = p
        self.n = n
        self.x = cast(x_ld)
        self.wsing = cast(w_ld)        # integrates f * rho / (1-y^2)
        self.wrho = cast(wrho_ld)      # integrates f * rho
        self.qw = cast(qw_ld)          # integrates f against unit weight
        xs = x_ld if self.dtype == np.dtype(ld) else self.x.astype(dtype)

        # derivative basis: orthonormal family of (1-x^2)^a through degree n-1
        Pu, dPu, d2Pu = eval_ortho(a, xs, n - 1, dtype, nderiv=2)
        self.Pu, self.dPu, self.d2Pu = Pu, dPu, d2Pu
        self.Anu = (Pu * cast(w_ld)[:, None]).T  # nodal values -> u-coefficients

        # spectral basis: orthonormal family of rho = (1-x^2)^alpha, degree n-2
        Kr = n - 2
        Pr, dPr, _ = eval_ortho(alpha, xs, Kr, dtype, nderiv=1)
        # quadrature-exact renormalization keeps discrete orthonormality tight
        nrm = np.sqrt(np.sum(self.wrho[:, None] * np.asarray(Pr) ** 2, axis=0))
        Pr = Pr / nrm
        dPr = dPr / nrm
        self.Pr, self.dPr = Pr, dPr
        self.Anr = (Pr * self.wrho[:, None]).T   # nodal values -> rho-coefficients
        ks = np.arange(Kr + 1, dtype=dtype)
        c3 = (p + 3.0) / (p - 1.0)
        self.gam = -ks * (ks + np.asarray(c3, dtype=dtype))

    def deriv(self, f):
        """First derivative at the nodes through the u-basis."""
        return self.dPu @ (self.Anu @ f)

    def deriv2(self, f):
        """Second derivative at the nodes through the u-basis."""
        return self.d2Pu @ (self.Anu @ f)

    def apply_l(self, f):
        """Degenerate operator in modal eigen form (exact on the basis)."""
        return self.Pr @ (self.gam * (self.Anr @ f))
