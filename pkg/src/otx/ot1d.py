"""Optimal transport on the real line: sorted matchings, an exact assignment
solver, the CDF coupling and quantile-coupling costs."""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import CoordinateCost, LpCost, RejectedInputError, UnsupportedCapabilityError
from .dist1d import Empirical, Finite, Gaussian, norm_cdf

HUNGARIAN_LIMIT = 512


@dataclass(frozen=True)
class Matching:
    """A bijection between two equal-size samples.

    ``target_of[s]`` is the target index matched to source index ``s``.
    """

    target_of: np.ndarray
    total_cost: float

    @property
    def pairs(self):
        return [(int(s), int(t)) for s, t in enumerate(self.target_of)]


def _cost_fn(c):
    if isinstance(c, CoordinateCost):
        return c.pairwise
    return lambda xs, ys: np.asarray(c(np.asarray(xs)[:, None], np.asarray(ys)[None, :]), dtype=float)


def _check_sizes(X, Y):
    X = np.asarray(X, dtype=float).reshape(-1)
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if X.size != Y.size or X.size == 0:
        raise RejectedInputError(f"matching needs equal non-empty sizes, got {X.size} and {Y.size}")
    return X, Y


def monotone_match(X, Y, c, convex=True):
    """Match the i-th smallest of X to the i-th smallest of Y.

    Ties are broken by original index. Only optimal for costs convex in
    |a - b|; with ``convex=False`` the exact assignment solver is used.
    """
    X, Y = _check_sizes(X, Y)
    if not convex:
        return hungarian_match(X, Y, c)
    sx = np.argsort(X, kind="stable")
    sy = np.argsort(Y, kind="stable")
    target_of = np.empty(X.size, dtype=int)
    target_of[sx] = sy
    total = float(np.sum(c(X, Y[target_of])))
    return Matching(target_of, total)


def linear_assignment(C):
    """Minimum-cost perfect assignment for a square cost matrix.

    Returns ``col_of_row``.
    """
    C = np.asarray(C, dtype=float)
    k = C.shape[0]
    if C.ndim != 2 or C.shape != (k, k):
        raise RejectedInputError("assignment needs a square cost matrix")
    rows, cols = linear_sum_assignment(C)
    col_of_row = np.empty(k, dtype=int)
    col_of_row[rows] = cols
    return col_of_row


def hungarian_match(X, Y, c):
    """Exact minimum-cost matching for an arbitrary cost (k <= 512)."""
    X, Y = _check_sizes(X, Y)
    if X.size > HUNGARIAN_LIMIT:
        raise RejectedInputError(f"assignment oracle limited to k <= {HUNGARIAN_LIMIT}")
    C = _cost_fn(c)(X, Y)
    target_of = linear_assignment(C)
    return Matching(target_of, float(C[np.arange(X.size), target_of].sum()))


def cdf_transport(x, mu, nu, rng):
    """Push ``x ~ mu`` to a draw of ``nu`` through the monotone coupling.

    Draws t uniformly on [F_mu(x-), F_mu(x)] and returns F_nu^{-1}(t). For
    continuous laws in the upper half the survival functions are used, so
    the map stays accurate far into the tail. Accepts scalars or arrays.
    """
    scalar = np.ndim(x) == 0
    x = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.asarray(rng.uniform(x.size), dtype=float).reshape(x.shape)
    if mu == nu and mu.is_continuous:
        out = x.copy()
        return float(out[0]) if scalar else out
    p0 = np.asarray(mu.cdf_left(x), dtype=float)
    p1 = np.asarray(mu.cdf(x), dtype=float)
    t = p0 + u * (p1 - p0)
    t = np.minimum(t, np.nextafter(1.0, 0.0))
    out = np.asarray(nu.inv_cdf(t), dtype=float).copy()
    if mu.is_continuous and hasattr(mu, "sf") and hasattr(nu, "inv_sf"):
        upper = p1 > 0.5
        if np.any(upper):
            out[upper] = nu.inv_sf(mu.sf(x[upper]))
    return float(out[0]) if scalar else out


def _finite_quantile_cost(mu, nu, c):
    cuts = np.union1d(mu._cum, nu._cum)
    cuts = cuts[(cuts > 0) & (cuts <= 1.0)]
    lo = np.concatenate([[0.0], cuts[:-1]])
    width = cuts - lo
    keep = width > 0
    lo, width = lo[keep], width[keep]
    mid = lo + 0.5 * width
    a = mu.inv_cdf(mid)
    b = nu.inv_cdf(mid)
    return float(np.sum(width * c(a, b)))


def _phi(z):
    with np.errstate(over="ignore", invalid="ignore"):
        out = np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
    return np.where(np.isfinite(z), out, 0.0)


def _zphi(z):
    with np.errstate(over="ignore", invalid="ignore"):
        out = z * _phi(z)
    return np.where(np.isfinite(z), out, 0.0)


def _finite_gaussian_cost(fin, g, p):
    # quantile segment of each atom mapped into standardised Gaussian space
    hi = fin._cum
    lo = np.concatenate([[0.0], hi[:-1]])
    a = np.where(lo > 0, g.inv_cdf(np.minimum(lo, np.nextafter(1.0, 0.0))), -np.inf)
    a = (a - g.mean) / g.stddev
    b = np.full_like(hi, np.inf)
    inner = hi < 1.0
    b[inner] = (g.inv_cdf(hi[inner]) - g.mean) / g.stddev
    x = (fin.values - g.mean) / g.stddev

    def m0(s, t):
        return norm_cdf(t) - norm_cdf(s)

    def m1(s, t):
        return _phi(s) - _phi(t)

    if p == 2.0:
        m2 = (norm_cdf(b) - _zphi(b)) - (norm_cdf(a) - _zphi(a))
        seg = x * x * m0(a, b) - 2.0 * x * m1(a, b) + m2
    else:
        cpt = np.clip(x, a, b)
        seg = (x * m0(a, cpt) - m1(a, cpt)) + (m1(cpt, b) - x * m0(cpt, b))
    return float(g.stddev**p * np.sum(np.maximum(seg, 0.0)))


def ot_cost_1d(mu, nu, c, quadrature_points=100_000):
    """T_c(mu, nu) for a convex cost, via the quantile coupling

        int_0^1 c(F_mu^{-1}(t), F_nu^{-1}(t)) dt.

    Exact for two finite laws and for finite-vs-Gaussian under |a-b| and
    |a-b|^2; otherwise a midpoint rule with nodes clamped to [1e-9, 1-1e-9].
    """
    if not getattr(c, "is_convex", False):
        raise RejectedInputError("quantile coupling is only optimal for convex costs")
    for d in (mu, nu):
        if not d.has_inv_cdf:
            raise UnsupportedCapabilityError(f"{d.kind} has no inverse CDF")
    if isinstance(mu, Finite) and isinstance(nu, Finite):
        return _finite_quantile_cost(mu, nu, c)
    if isinstance(c, LpCost) and c.p in (1.0, 2.0):
        if isinstance(mu, Finite) and type(nu) is Gaussian:
            return _finite_gaussian_cost(mu, nu, c.p)
        if isinstance(nu, Finite) and type(mu) is Gaussian:
            return _finite_gaussian_cost(nu, mu, c.p)
    n = int(quadrature_points)
    t = (np.arange(n) + 0.5) / n
    t = np.clip(t, 1e-9, 1.0 - 1e-9)
    return float(np.mean(c(mu.inv_cdf(t), nu.inv_cdf(t))))


def empirical_transport_cost(mu, k, c, replications, rng):
    """Monte Carlo estimate of E_{X ~ mu^k} T_c(U_X, mu).

    Replication ``r`` draws from ``rng.substream(r)``. Returns
    ``(mean, stderr)``.
    """
    k = int(k)
    replications = int(replications)
    if k < 1 or replications < 1:
        raise RejectedInputError("need k >= 1 and replications >= 1")
    values = np.empty(replications)
    for r in range(replications):
        X = mu.sample(rng.substream(r), k)
        values[r] = ot_cost_1d(Empirical(X), mu, c)
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(replications)) if replications > 1 else float("nan")
    return mean, stderr
