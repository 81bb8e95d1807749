"""Shared types: errors, linear coordinate costs, cost aggregation, bound
calculators and the reproducible random stream."""

import math

import numpy as np


class OTError(Exception):
    """Base class for all errors raised by otx."""


class RejectedInputError(OTError, ValueError):
    pass


class UnsupportedCapabilityError(OTError):
    pass


class DivergenceUndefinedError(OTError, ValueError):
    pass


class ConfigurationError(OTError, ValueError):
    pass


class InternalInconsistencyError(OTError, RuntimeError):
    pass


class BudgetExhaustedError(OTError, RuntimeError):
    """A rejection loop ran past its trial cap.

    ``trials`` is the number of trials spent on the failing draw; ``partial``
    is filled in by callers that have statistics worth keeping.
    """

    def __init__(self, message, trials=None, partial=None):
        super().__init__(message)
        self.trials = trials
        self.partial = partial


# ---------------------------------------------------------------------------
# Points


def as_point(x, n=None):
    """Validate and convert ``x`` to a 1-d float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise RejectedInputError("a point must be a non-empty 1-d vector")
    if not np.all(np.isfinite(arr)):
        raise RejectedInputError("point coordinates must be finite")
    if n is not None and arr.size != n:
        raise RejectedInputError(f"expected dimension {n}, got {arr.size}")
    return arr


def as_prefix(prefix, n):
    arr = np.asarray(prefix, dtype=float).reshape(-1)
    if arr.size > n:
        raise RejectedInputError(f"prefix of length {arr.size} exceeds dimension {n}")
    return arr


# ---------------------------------------------------------------------------
# One-dimensional coordinate costs


class CoordinateCost:
    """A one-dimensional cost c_i(a, b), vectorised over numpy broadcasting."""

    name = None
    is_metric = False
    is_convex = False

    def __call__(self, a, b):
        raise NotImplementedError

    def pairwise(self, xs, ys):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        return self(xs[:, None], ys[None, :])

    def to_json(self):
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(repr(self.to_json()))

    def __repr__(self):
        return f"{type(self).__name__}({self.to_json()})"


class LpCost(CoordinateCost):
    """|a - b|^p; convex in |a - b| for p >= 1.

    ``is_metric`` refers to the induced l_p metric whose p-th power is this
    linear cost, which is the hypothesis the transporter needs.
    """

    name = "lp"
    is_metric = True
    is_convex = True

    def __init__(self, p=2.0):
        p = float(p)
        if not p >= 1:
            raise RejectedInputError("lp cost needs p >= 1")
        self.p = p

    def __call__(self, a, b):
        d = np.abs(np.subtract(a, b, dtype=float))
        if self.p == 1.0:
            return d
        if self.p == 2.0:
            return d * d
        return d**self.p

    def to_json(self):
        return {"name": "lp", "p": self.p}


class HammingCost(CoordinateCost):
    name = "hamming"
    is_metric = True
    is_convex = False

    def __call__(self, a, b):
        return np.not_equal(a, b).astype(float)

    def to_json(self):
        return {"name": "hamming"}


class TabulatedCost(CoordinateCost):
    """Cost read from a table indexed by (row value, column value).

    Used for the small discrete fixtures, where the two sides may even live
    on different alphabets. Values absent from the table are an error.
    """

    name = "tabulated"

    def __init__(self, rows, cols, matrix, is_metric=False):
        self.rows = [float(v) for v in rows]
        self.cols = [float(v) for v in cols]
        m = np.asarray(matrix, dtype=float)
        if m.shape != (len(self.rows), len(self.cols)):
            raise RejectedInputError("tabulated cost matrix has the wrong shape")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise RejectedInputError("tabulated costs must be finite and non-negative")
        self.matrix = m
        self.is_metric = bool(is_metric)
        self._rindex = {v: i for i, v in enumerate(self.rows)}
        self._cindex = {v: j for j, v in enumerate(self.cols)}

    def _lookup(self, index, values):
        values = np.asarray(values, dtype=float)
        flat = values.reshape(-1)
        try:
            idx = np.fromiter((index[float(v)] for v in flat), dtype=int, count=flat.size)
        except KeyError as exc:
            raise RejectedInputError(f"value {exc.args[0]} not in tabulated cost") from None
        return idx.reshape(values.shape)

    def __call__(self, a, b):
        ia = self._lookup(self._rindex, a)
        ib = self._lookup(self._cindex, b)
        ia, ib = np.broadcast_arrays(ia, ib)
        return self.matrix[ia, ib]

    def transposed(self):
        return TabulatedCost(self.cols, self.rows, self.matrix.T, self.is_metric)

    def to_json(self):
        return {
            "name": "tabulated",
            "rows": self.rows,
            "cols": self.cols,
            "matrix": self.matrix.tolist(),
            "is_metric": self.is_metric,
        }


def coordinate_cost_from_json(obj):
    name = obj.get("name")
    if name == "lp":
        return LpCost(obj.get("p", 2.0))
    if name == "hamming":
        return HammingCost()
    if name == "tabulated":
        return TabulatedCost(obj["rows"], obj["cols"], obj["matrix"], obj.get("is_metric", False))
    raise ConfigurationError(f"unknown coordinate cost {name!r}")


# ---------------------------------------------------------------------------
# Linear costs


class CostSpec:
    """Linear cost c(x, y) = sum_i c_i(x_i, y_i) with Wasserstein exponent p.

    ``coordinate_cost`` is either one CoordinateCost shared by every
    coordinate or a list with one entry per coordinate.
    """

    def __init__(self, p=2.0, coordinate_cost=None):
        p = float(p)
        if not p >= 1:
            raise RejectedInputError("Wasserstein exponent p must be >= 1")
        self.p = p
        if coordinate_cost is None:
            coordinate_cost = LpCost(p)
        if isinstance(coordinate_cost, CoordinateCost):
            self._shared = coordinate_cost
            self._per = None
        else:
            self._shared = None
            self._per = list(coordinate_cost)
            if not self._per:
                raise RejectedInputError("empty coordinate cost list")

    @classmethod
    def lp(cls, p=2.0):
        """l_p^p cost: coordinate costs |a - b|^p."""
        return cls(p, LpCost(p))

    @classmethod
    def hamming(cls):
        return cls(1.0, HammingCost())

    @property
    def dimension(self):
        return None if self._per is None else len(self._per)

    def coordinate(self, i):
        if self._per is None:
            return self._shared
        return self._per[i]

    def costs(self, n):
        if self._per is None:
            return [self._shared] * n
        if len(self._per) != n:
            raise RejectedInputError(f"cost has {len(self._per)} coordinates, points have {n}")
        return list(self._per)

    def transposed(self):
        """Cost with the roles of the two points swapped."""
        def flip(c):
            return c.transposed() if hasattr(c, "transposed") else c
        if self._per is None:
            return CostSpec(self.p, flip(self._shared))
        return CostSpec(self.p, [flip(c) for c in self._per])

    @property
    def is_metric(self):
        costs = [self._shared] if self._per is None else self._per
        return all(c.is_metric for c in costs)

    def to_json(self):
        if self._per is None:
            return {"p": self.p, "coordinate_cost": self._shared.to_json()}
        return {"p": self.p, "coordinate_costs": [c.to_json() for c in self._per]}

    @classmethod
    def from_json(cls, obj):
        if "coordinate_costs" in obj:
            return cls(obj["p"], [coordinate_cost_from_json(c) for c in obj["coordinate_costs"]])
        return cls(obj.get("p", 2.0), coordinate_cost_from_json(obj.get("coordinate_cost", {"name": "lp", "p": obj.get("p", 2.0)})))

    def __repr__(self):
        return f"CostSpec({self.to_json()})"


class CostSample:
    """Realised per-coordinate costs of one coupled pair."""

    __slots__ = ("per_coordinate", "total")

    def __init__(self, per_coordinate):
        self.per_coordinate = np.asarray(per_coordinate, dtype=float)
        self.total = float(np.sum(self.per_coordinate))

    def __repr__(self):
        return f"CostSample(total={self.total!r}, per_coordinate={self.per_coordinate.tolist()!r})"


def eval_cost(spec, x, y):
    x = as_point(x)
    y = as_point(y)
    if x.size != y.size:
        raise RejectedInputError(f"dimension mismatch: {x.size} vs {y.size}")
    costs = spec.costs(x.size)
    per = np.array([float(c(a, b)) for c, a, b in zip(costs, x, y)])
    return CostSample(per)


def wasserstein_p_cost(spec, samples):
    """(mean of realised totals)^(1/p)."""
    totals = [s.total if isinstance(s, CostSample) else float(s) for s in samples]
    if not totals:
        raise RejectedInputError("need at least one cost sample")
    return float(np.mean(totals)) ** (1.0 / spec.p)


# ---------------------------------------------------------------------------
# Bound calculators


def talagrand_bound(p, n, kl):
    """Transport-entropy bound n^(1-p/2) (2 KL)^(p/2) on the online l_p^p
    cost from the standard Gaussian; only valid for 1 <= p <= 2."""
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise RejectedInputError("the transport-entropy bound only holds for p in [1, 2]")
    if int(n) < 1 or kl < 0:
        raise RejectedInputError("need n >= 1 and kl >= 0")
    return float(n) ** (1.0 - p / 2.0) * (2.0 * kl) ** (p / 2.0)


def moment_constant(p):
    """C_p = (2^p + 1) / ((2^p - 1)(1 - 2^-p)(1 - 2^(1/2 - p)))."""
    p = float(p)
    if not p >= 1:
        raise RejectedInputError("need p >= 1")
    two_p = 2.0**p
    return (two_p + 1.0) / ((two_p - 1.0) * (1.0 - 1.0 / two_p) * (1.0 - 2.0 ** (0.5 - p)))


def empirical_bound(p, k):
    """Upper bound on the expected l_p^p cost between N(0, 1) and a size-k
    empirical sample of it:

        C_p * 2^(1 + 3p/2) * Gamma(p + 1)^(p / (2p + 1)) * k^(-1/2)
    """
    p = float(p)
    if not p >= 1 or int(k) < 1:
        raise RejectedInputError("need p >= 1 and k >= 1")
    q = 2.0 * p + 1.0
    return moment_constant(p) * 2.0 ** (1.0 + 1.5 * p) * math.gamma(p + 1.0) ** (p / q) / math.sqrt(k)


def small_delta(p, n, k, scale=1.0):
    """The empirical slack 2 (sum_i T^Em_k(mu_i))^(1/p) for n Gaussian
    coordinates of standard deviation ``scale``, using empirical_bound."""
    return 2.0 * (n * scale**p * empirical_bound(p, k)) ** (1.0 / p)


# ---------------------------------------------------------------------------
# Randomness


_MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based random stream fully determined by (seed, stream_id).

    Wraps numpy's Philox generator keyed by the 128-bit pair, so draws do not
    depend on scheduling or on which other streams exist.
    """

    def __init__(self, seed, stream_id=0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed <= _MASK64 and 0 <= stream_id <= _MASK64):
            raise RejectedInputError("seed and stream_id must be unsigned 64-bit integers")
        self.seed = seed
        self.stream_id = stream_id
        self.generator = np.random.Generator(np.random.Philox(key=[seed, stream_id]))

    def substream(self, j):
        """Independent child stream number ``j``."""
        ss = np.random.SeedSequence([self.seed, self.stream_id, int(j)])
        child = int(ss.generate_state(2, dtype=np.uint64)[0])
        return RngStream(self.seed, child)

    def uniform(self, size=None):
        """Uniform on [0, 1)."""
        return self.generator.random(size)

    def uniform_open_closed(self, size=None):
        """Uniform on (0, 1]: a 53-bit integer mapped to (m + 1) / 2^53."""
        m = self.generator.integers(0, 1 << 53, size=size, dtype=np.int64)
        return (m + 1) * (1.0 / (1 << 53))

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"
