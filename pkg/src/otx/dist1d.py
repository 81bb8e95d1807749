"""One-dimensional distributions with sampling, CDF and generalised inverse CDF.

The inverse CDF follows the strict-inequality convention

    F^{-1}(t) = inf{x : F(x) > t},

so for a finite distribution with atoms 10 and 20 of mass 1/2 each,
``inv_cdf(0.5) == 20``.
"""

import math

import numpy as np
from scipy import special

from .core import (
    ConfigurationError,
    DivergenceUndefinedError,
    RejectedInputError,
    UnsupportedCapabilityError,
)


def norm_cdf(z):
    return special.ndtr(z)


def norm_sf(z):
    return special.ndtr(np.negative(z))


def norm_ppf(t):
    return special.ndtri(t)


def norm_isf(s):
    return -special.ndtri(s)


def box_muller(u1, u2):
    """Map u1 in (0, 1], u2 in [0, 1) to two independent standard normals."""
    r = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * np.asarray(u2)
    return r * np.cos(angle), r * np.sin(angle)


def gaussian_pair(rng):
    """Two independent N(0, 1) draws from one Box-Muller transform."""
    a, b = box_muller(rng.uniform_open_closed(), rng.uniform())
    return float(a), float(b)


def standard_normals(rng, size):
    """``size`` N(0, 1) draws generated pairwise by Box-Muller."""
    m = (size + 1) // 2
    a, b = box_muller(rng.uniform_open_closed(m), rng.uniform(m))
    return np.concatenate([a, b])[:size]


def _check_t(t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(~(t_arr >= 0.0)) or np.any(~(t_arr < 1.0)):
        raise RejectedInputError("inverse CDF argument must lie in [0, 1)")
    return t_arr


def _scalar(value, like):
    return float(value) if np.ndim(like) == 0 else value


class Dist1D:
    kind = None
    can_sample = True
    has_cdf = True
    has_inv_cdf = True
    is_continuous = True

    def sample(self, rng, size=None):
        if not self.can_sample:
            raise UnsupportedCapabilityError(f"{self.kind} cannot be sampled")
        u = rng.uniform(1 if size is None else size)
        out = self.inv_cdf(u)
        return float(out[0]) if size is None else out

    def cdf(self, x):
        raise NotImplementedError

    def cdf_left(self, x):
        """Left limit of the CDF; equals the CDF away from atoms."""
        return self.cdf(x)

    def inv_cdf(self, t):
        raise NotImplementedError

    def parameters(self):
        raise NotImplementedError

    def to_json(self):
        return {"kind": self.kind, "parameters": self.parameters()}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(repr(self.to_json()))

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.parameters().items())
        return f"{type(self).__name__}({args})"


class Gaussian(Dist1D):
    kind = "gaussian"

    def __init__(self, mean=0.0, stddev=1.0):
        if not stddev > 0:
            raise RejectedInputError("stddev must be positive")
        self.mean = float(mean)
        self.stddev = float(stddev)

    def sample(self, rng, size=None):
        z = standard_normals(rng, 1 if size is None else size)
        out = self.mean + self.stddev * z
        return float(out[0]) if size is None else out

    def cdf(self, x):
        return _scalar(norm_cdf((np.asarray(x, dtype=float) - self.mean) / self.stddev), x)

    def sf(self, x):
        return _scalar(norm_sf((np.asarray(x, dtype=float) - self.mean) / self.stddev), x)

    def inv_cdf(self, t):
        t_arr = _check_t(t)
        return _scalar(self.mean + self.stddev * norm_ppf(t_arr), t)

    def inv_sf(self, s):
        return _scalar(self.mean + self.stddev * norm_isf(np.asarray(s, dtype=float)), s)

    def parameters(self):
        return {"mean": self.mean, "stddev": self.stddev}


class Uniform(Dist1D):
    kind = "uniform"

    def __init__(self, lo=0.0, hi=1.0):
        if not lo < hi:
            raise RejectedInputError("uniform needs lo < hi")
        self.lo = float(lo)
        self.hi = float(hi)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar(np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0), x)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return _scalar(np.clip((self.hi - x) / (self.hi - self.lo), 0.0, 1.0), x)

    def inv_cdf(self, t):
        t_arr = _check_t(t)
        return _scalar(self.lo + t_arr * (self.hi - self.lo), t)

    def inv_sf(self, s):
        s = np.asarray(s, dtype=float)
        return _scalar(self.hi - s * (self.hi - self.lo), s)

    def parameters(self):
        return {"lo": self.lo, "hi": self.hi}


class TruncatedGaussian(Dist1D):
    """N(mean, stddev^2) conditioned on [lo, hi]; bounds may be infinite.

    Upper-tail intervals are handled through survival functions so that
    deep truncations keep their relative accuracy.
    """

    kind = "truncated_gaussian"

    def __init__(self, mean=0.0, stddev=1.0, lo=-math.inf, hi=math.inf):
        if not stddev > 0:
            raise RejectedInputError("stddev must be positive")
        if not lo < hi:
            raise RejectedInputError("truncation needs lo < hi")
        self.mean = float(mean)
        self.stddev = float(stddev)
        self.lo = float(lo)
        self.hi = float(hi)
        self._a = (self.lo - self.mean) / self.stddev
        self._b = (self.hi - self.mean) / self.stddev
        self._upper = self._a > 0
        if self._upper:
            self._sa, self._sb = float(norm_sf(self._a)), float(norm_sf(self._b))
            self.mass = self._sa - self._sb
        else:
            self._ca, self._cb = float(norm_cdf(self._a)), float(norm_cdf(self._b))
            self.mass = self._cb - self._ca
        if not self.mass > 0:
            raise RejectedInputError("truncation interval has no mass")

    def _z(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.mean) / self.stddev, self._a, self._b)

    def cdf(self, x):
        z = self._z(x)
        if self._upper:
            out = (self._sa - norm_sf(z)) / self.mass
        else:
            out = (norm_cdf(z) - self._ca) / self.mass
        return _scalar(np.clip(out, 0.0, 1.0), x)

    def sf(self, x):
        z = self._z(x)
        if self._upper:
            out = (norm_sf(z) - self._sb) / self.mass
        else:
            out = (self._cb - norm_cdf(z)) / self.mass
        return _scalar(np.clip(out, 0.0, 1.0), x)

    def inv_cdf(self, t):
        t_arr = _check_t(t)
        if self._upper:
            z = norm_isf(self._sa - t_arr * self.mass)
        else:
            z = norm_ppf(self._ca + t_arr * self.mass)
        z = np.clip(z, self._a, self._b)
        return _scalar(self.mean + self.stddev * z, t)

    def inv_sf(self, s):
        s_arr = np.asarray(s, dtype=float)
        if self._upper:
            z = norm_isf(self._sb + s_arr * self.mass)
        else:
            z = norm_ppf(self._cb - s_arr * self.mass)
        z = np.clip(z, self._a, self._b)
        return _scalar(self.mean + self.stddev * z, s)

    def parameters(self):
        return {"mean": self.mean, "stddev": self.stddev, "lo": self.lo, "hi": self.hi}


class Finite(Dist1D):
    """Finitely supported distribution; duplicate values are merged."""

    kind = "finite"
    is_continuous = False

    def __init__(self, values, probs=None):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size == 0:
            raise RejectedInputError("finite distribution needs at least one atom")
        if probs is None:
            probs = np.full(values.size, 1.0 / values.size)
        probs = np.asarray(probs, dtype=float).reshape(-1)
        if probs.shape != values.shape:
            raise RejectedInputError("values and probabilities differ in length")
        if not np.all(np.isfinite(values)):
            raise RejectedInputError("atoms must be finite")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12 * max(1, values.size):
            raise RejectedInputError("probabilities must be non-negative and sum to 1")
        order = np.argsort(values, kind="stable")
        values, probs = values[order], probs[order]
        uniq, inverse = np.unique(values, return_inverse=True)
        merged = np.zeros(uniq.size)
        np.add.at(merged, inverse, probs)
        keep = merged > 0
        self.values = uniq[keep]
        self.probs = merged[keep]
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        self._cum = cum

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x_arr, side="right")
        out = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return _scalar(out, x)

    def cdf_left(self, x):
        x_arr = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x_arr, side="left")
        out = np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)
        return _scalar(out, x)

    def inv_cdf(self, t):
        t_arr = _check_t(t)
        idx = np.searchsorted(self._cum, t_arr, side="right")
        idx = np.minimum(idx, self.values.size - 1)
        return _scalar(self.values[idx], t)

    def parameters(self):
        return {"atoms": [[float(v), float(p)] for v, p in zip(self.values, self.probs)]}


def point_mass(value):
    return Finite([value], [1.0])


class Empirical(Finite):
    """Uniform distribution over a multiset; CDF values are exact counts / k."""

    kind = "empirical"

    def __init__(self, values):
        raw = np.sort(np.asarray(values, dtype=float).reshape(-1))
        if raw.size == 0:
            raise RejectedInputError("empirical distribution needs at least one value")
        super().__init__(raw)
        self.sorted_values = raw
        self.k = raw.size

    def cdf(self, x):
        x_arr = np.asarray(x, dtype=float)
        return _scalar(np.searchsorted(self.sorted_values, x_arr, side="right") / self.k, x)

    def cdf_left(self, x):
        x_arr = np.asarray(x, dtype=float)
        return _scalar(np.searchsorted(self.sorted_values, x_arr, side="left") / self.k, x)

    def inv_cdf(self, t):
        t_arr = _check_t(t)
        idx = np.minimum(np.floor(t_arr * self.k).astype(int), self.k - 1)
        return _scalar(self.sorted_values[idx], t)

    def parameters(self):
        return {"values": self.sorted_values.tolist()}


def dist_from_json(obj):
    kind = obj.get("kind")
    params = obj.get("parameters", {})
    if kind == "gaussian":
        return Gaussian(params.get("mean", 0.0), params.get("stddev", 1.0))
    if kind == "uniform":
        return Uniform(params.get("lo", 0.0), params.get("hi", 1.0))
    if kind == "truncated_gaussian":
        return TruncatedGaussian(
            params.get("mean", 0.0),
            params.get("stddev", 1.0),
            params.get("lo", -math.inf),
            params.get("hi", math.inf),
        )
    if kind == "finite":
        atoms = params["atoms"]
        return Finite([a[0] for a in atoms], [a[1] for a in atoms])
    if kind == "empirical":
        return Empirical(params["values"])
    raise ConfigurationError(f"unknown distribution kind {kind!r}")


def sample(d, rng, size=None):
    return d.sample(rng, size)


def cdf(d, x):
    if not d.has_cdf:
        raise UnsupportedCapabilityError(f"{d.kind} has no CDF")
    return d.cdf(x)


def inv_cdf(d, t):
    if not d.has_inv_cdf:
        raise UnsupportedCapabilityError(f"{d.kind} has no inverse CDF")
    return d.inv_cdf(t)


def kl_divergence(nu, mu):
    """KL(nu, mu) in nats.

    Supported pairs: two finite distributions, two Gaussians, and a
    truncated Gaussian against its untruncated parent.
    """
    if isinstance(nu, Finite) and isinstance(mu, Finite):
        mu_p = dict(zip(mu.values.tolist(), mu.probs.tolist()))
        total = 0.0
        for v, p in zip(nu.values.tolist(), nu.probs.tolist()):
            q = mu_p.get(v, 0.0)
            if q <= 0:
                raise DivergenceUndefinedError(f"atom {v} of nu lies outside the support of mu")
            total += p * math.log(p / q)
        return max(total, 0.0)
    if type(nu) is Gaussian and type(mu) is Gaussian:
        r = nu.stddev / mu.stddev
        d = (nu.mean - mu.mean) / mu.stddev
        return 0.5 * (r * r + d * d - 1.0) - math.log(r)
    if isinstance(nu, TruncatedGaussian) and type(mu) is Gaussian:
        if nu.mean != mu.mean or nu.stddev != mu.stddev:
            raise UnsupportedCapabilityError("truncated Gaussian KL needs the untruncated parent as mu")
        return -math.log(nu.mass)
    if type(nu) is Gaussian and isinstance(mu, TruncatedGaussian):
        raise DivergenceUndefinedError("a Gaussian is not supported inside a truncation")
    raise UnsupportedCapabilityError(f"no KL formula for ({nu.kind}, {mu.kind})")
