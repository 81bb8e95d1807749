"""Reductions that let the Gaussian set transport serve other spaces.

A reduction from (mu_1, c_1) to (mu_2, c_2) is a pair of maps: ``f`` pushes
mu_1 onto mu_2 (possibly with randomness) and ``g`` pushes mu_2 back, with
c_1(x_1, g(x_2')) <= alpha * c_2(f(x_1), x_2'). Any set transport on the
intermediate space then becomes one on the source space, with cost scaled
by alpha.
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import RejectedInputError
from .dist1d import Gaussian, norm_cdf, norm_ppf, standard_normals
from .seqsampler import HalfSpace, Intersection, OutsideBall, Preimage
from .transporter import compose, set_transport

SPHERE_CONSTANT = 1.52


@dataclass
class Reduction:
    """Maps ``f`` (source to intermediate, takes an rng) and ``g``
    (intermediate to source, deterministic), both acting on (m, n) arrays."""

    name: str
    n: int
    f: Callable
    g: Callable
    lipschitz_alpha: float
    online_flag: bool
    sample_source: Callable

    def forward(self, points, rng):
        return self.f(_rows(points, self.n), rng)

    def backward(self, points):
        return self.g(_rows(points, self.n))


def _rows(points, n):
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.shape[1] != n:
        raise RejectedInputError(f"expected points of dimension {n}, got {points.shape[1]}")
    return points


# ---------------------------------------------------------------------------
# Cube


def cube_gauss_reduction(n):
    """Unit cube with uniform measure versus the standard Gaussian.

    ``f`` applies the normal quantile function coordinatewise and ``g`` the
    normal CDF; since the CDF is 1-Lipschitz, alpha = 1.
    """
    n = int(n)
    if n < 1:
        raise RejectedInputError("n must be positive")

    def f(u, rng=None):
        if np.any((u <= 0) | (u >= 1)):
            raise RejectedInputError("cube points must lie in the open unit cube")
        return norm_ppf(u)

    def g(z):
        return norm_cdf(z)

    def sample(rng, m):
        return rng.uniform_open_closed((m, n)) * (1 - 2**-53)

    return Reduction("cube", n, f, g, 1.0, True, sample)


# ---------------------------------------------------------------------------
# Sphere


def rescale(points, d):
    """Scale every row to Euclidean length ``d`` (scalar or per row)."""
    norms = np.linalg.norm(points, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise RejectedInputError("cannot rescale the origin")
    return points * (np.reshape(d, (-1, 1)) / norms)


def uniform_sphere(n, rng, m):
    """``m`` uniform points on the sphere of radius sqrt(n)."""
    z = standard_normals(rng, m * n).reshape(m, n)
    return rescale(z, math.sqrt(n))


def sample_radius(n, rng, m, chunk=None):
    """Norms of standard Gaussian vectors conditioned on norm >= sqrt(n).

    Rejection from the unconditioned law. Returns ``(radii, trials)``.
    """
    out = np.empty(m)
    filled = trials = 0
    chunk = chunk or max(16, 3 * m)
    while filled < m:
        z = standard_normals(rng, chunk * n).reshape(chunk, n)
        r2 = np.einsum("ij,ij->i", z, z)
        good = np.sqrt(r2[r2 >= n])
        take = min(good.size, m - filled)
        if take:
            # trials counted up to and including the last accepted draw
            last = np.flatnonzero(r2 >= n)[take - 1]
            trials += last + 1
        else:
            trials += chunk
        out[filled : filled + take] = good[:take]
        filled += take
    return out, trials


def spherical_distance(z, w):
    """Geodesic distance sqrt(n) * arccos(<z, w> / n) on the sphere of
    radius sqrt(n).

    Evaluated as 2 sqrt(n) atan2(|z - w|, |z + w|), which agrees on the
    sphere and stays accurate for nearly equal or antipodal points, where
    arccos of a rounded cosine does not.
    """
    z = np.asarray(z, dtype=float)
    w = np.asarray(w, dtype=float)
    n = z.shape[-1]
    return 2.0 * math.sqrt(n) * np.arctan2(np.linalg.norm(z - w, axis=-1), np.linalg.norm(z + w, axis=-1))


def sphere_gauss_reduction(n):
    """Uniform sphere of radius sqrt(n) versus the standard Gaussian
    conditioned to lie outside the ball of radius sqrt(n).

    ``f`` keeps the direction and draws a new radius from the conditioned
    radius law; ``g`` projects radially back onto the sphere, which is a
    contraction outside the ball (alpha = 1 in l_2).
    """
    n = int(n)
    if n < 1:
        raise RejectedInputError("n must be positive")
    root = math.sqrt(n)

    def f(x, rng):
        d, _ = sample_radius(n, rng, x.shape[0])
        return rescale(x, d)

    def g(z):
        norms = np.linalg.norm(z, axis=1)
        if np.any(norms < root * (1 - 1e-12)):
            raise RejectedInputError("sphere projection needs points outside the ball of radius sqrt(n)")
        return rescale(z, root)

    def sample(rng, m):
        return uniform_sphere(n, rng, m)

    return Reduction("sphere", n, f, g, 1.0, False, sample)


def sphere_set_transport_cost_bound(epsilon):
    """l_2 cost bound sqrt(2 ln 1/eps) + 1.52 for the uniform sphere; the
    spherical-distance bound is pi times this."""
    if not 0 < epsilon <= 1:
        raise RejectedInputError("epsilon must lie in (0, 1]")
    return math.sqrt(2.0 * math.log(1.0 / epsilon)) + SPHERE_CONSTANT


def outside_ball_probability(n):
    """P(||z||_2 >= sqrt(n)) for z standard Gaussian in dimension n."""
    from scipy.special import gammaincc

    return float(gammaincc(n / 2.0, n / 2.0))


# ---------------------------------------------------------------------------
# Applying a reduction


def gaussian_inner(n, cost, k, shortcut=None):
    """Factory for the set transport on the plain Gaussian space."""
    marginals = [Gaussian()] * n

    def build(S2, epsilon_hint):
        return set_transport(marginals, S2, cost, k, epsilon_hint, shortcut)

    return build


def outside_ball_inner(n, cost, k, shortcut=None, trial_cap=10**5):
    """Factory for the set transport on the Gaussian conditioned outside
    the ball: map back to the plain Gaussian, then into ball-complement and
    S2 together.

    Late rounds can have conditional acceptance far below the overall
    measure (a short prefix must be made up by few coordinates), hence the
    generous default ``trial_cap``.
    """
    marginals = [Gaussian()] * n
    ball_eps = outside_ball_probability(n)

    def build(S2, epsilon_hint):
        E = OutsideBall(math.sqrt(n))
        back = set_transport(marginals, E, cost, k, ball_eps, shortcut, trial_cap).inverted()
        E2 = OutsideBall(math.sqrt(n))
        forth = set_transport(marginals, Intersection(E2, S2), cost, k, epsilon_hint * ball_eps, shortcut, trial_cap)
        return compose(back, forth)

    return build


def apply_reduction(r, inner, S, X, rng, epsilon_hint):
    """Set transport on the source space through a reduction.

    Maps source points ``X`` with f, runs the inner transport against the
    pulled-back set S2 = {z : g(z) in S}, and returns g of its outputs
    together with the inner batch result.
    """
    X = _rows(X, r.n)
    S2 = Preimage(S, r.g)
    stage = inner(S2, epsilon_hint)
    Z = r.forward(X, rng)
    res = stage.run_batch(Z, rng)
    return r.backward(res.outputs), res


def cube_halfspace(n, epsilon, coordinate=0):
    """{u : u_j >= 1 - epsilon} on the unit cube."""
    a = np.zeros(n)
    a[coordinate] = 1.0
    return HalfSpace(a, 1.0 - epsilon)
