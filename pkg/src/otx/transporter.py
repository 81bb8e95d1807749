"""The k-sample online empirical transporter and what is built on top of it.

In round i the forward map sees x_i, draws k samples of y_i from the target
given the outputs so far, hides x_i among k - 1 fresh source draws, matches
the two k-sets optimally and outputs the target sample matched to x_i.
Because x_i is exchangeable with the fresh draws, the output is an exact
draw from the target conditional for every k; larger k only lowers the cost.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ConfigurationError,
    CostSample,
    CostSpec,
    InternalInconsistencyError,
    RejectedInputError,
    as_point,
)
from .dist1d import dist_from_json
from .ot1d import cdf_transport, hungarian_match
from .seqsampler import (
    ConditionedSampler,
    CostLedger,
    FiniteSampler,
    ProductSampler,
    oracle_from_json,
)


@dataclass
class TransportRecord:
    """One coupled pair. ``x`` lives on the source side and ``y`` on the
    target side whichever way the map ran."""

    x: np.ndarray
    y: np.ndarray
    cost_sample: CostSample
    ledger: CostLedger
    direction: str = "forward"

    @property
    def input(self):
        return self.x if self.direction == "forward" else self.y

    @property
    def output(self):
        return self.y if self.direction == "forward" else self.x


@dataclass
class BatchResult:
    """Many independent records run side by side."""

    inputs: np.ndarray
    outputs: np.ndarray
    per_coordinate: np.ndarray
    ledger: CostLedger
    stages: list = field(default_factory=list)

    @property
    def totals(self):
        return self.per_coordinate.sum(axis=1)

    def __len__(self):
        return self.inputs.shape[0]


def _law_id(obj):
    return json.dumps(obj, sort_keys=True)


def _random_rank(others, x, rng):
    """Rank of x among ``others`` rows with ties broken uniformly."""
    less = (others < x[:, None]).sum(axis=1)
    ties = (others == x[:, None]).sum(axis=1)
    u = rng.uniform(x.size)
    return less + np.floor(u * (ties + 1)).astype(np.int64)


def _grouped(prefixes, fn, out):
    """Call ``fn(rows, prefix)`` once per distinct prefix."""
    if prefixes.shape[1] == 0:
        fn(np.arange(prefixes.shape[0]), prefixes[:0].reshape(-1))
        return out
    uniq, inv = np.unique(prefixes, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    for g in range(uniq.shape[0]):
        fn(np.flatnonzero(inv == g), uniq[g])
    return out


class OnlineTransporter:
    """Online transport between a product law and a sequential sampler.

    Parameters
    ----------
    source : list of Dist1D
        The product marginals mu_1, ..., mu_n.
    target : SequentialSampler
        Sampler for nu.
    cost : CostSpec
        Per-coordinate costs; must be a metric (c^p linear).
    k : int
        Batch size per round.
    direction : {"forward", "inverse"}
        ``forward`` maps source points to target points, ``inverse`` the
        other way.
    shortcut : dict, optional
        ``{"source_cdf": bool, "target_cdf": bool}``. A side with a known
        CDF is coupled exactly through the quantile map instead of through
        its empirical k-set.
    """

    def __init__(self, source, target, cost, k, direction="forward", shortcut=None):
        self.source = list(source)
        self.target = target
        self.cost = cost
        if isinstance(k, bool) or int(k) != k or k < 1:
            raise RejectedInputError(f"k must be a positive integer, got {k!r}")
        self.k = int(k)
        self.n = len(self.source)
        if self.n != target.n:
            raise ConfigurationError(f"source has {self.n} coordinates, target has {target.n}")
        if direction not in ("forward", "inverse"):
            raise ConfigurationError(f"unknown direction {direction!r}")
        self.direction = direction
        self.costs = cost.costs(self.n)
        if not cost.is_metric:
            raise ConfigurationError("the transporter needs a metric cost")
        shortcut = dict(shortcut or {})
        self.source_cdf = bool(shortcut.get("source_cdf", False))
        self.target_cdf = bool(shortcut.get("target_cdf", False))
        if self.source_cdf and not all(d.has_cdf and d.has_inv_cdf for d in self.source):
            raise ConfigurationError("source_cdf shortcut needs CDFs for every source marginal")
        if (self.source_cdf or self.target_cdf) and not all(c.is_convex for c in self.costs):
            raise ConfigurationError("CDF shortcuts are only optimal for convex costs")
        if self.target_cdf and isinstance(target, ConditionedSampler):
            raise ConfigurationError("a rejection-conditioned target exposes no CDF")

    # ------------------------------------------------------------------
    # identification, used to check compositions

    @property
    def source_law(self):
        return _law_id({"kind": "product", "marginals": [d.to_json() for d in self.source]})

    @property
    def target_law(self):
        return _law_id(self.target.to_json())

    @property
    def input_law(self):
        return self.source_law if self.direction == "forward" else self.target_law

    @property
    def output_law(self):
        return self.target_law if self.direction == "forward" else self.source_law

    def inverted(self):
        """The same transporter run the other way."""
        other = "inverse" if self.direction == "forward" else "forward"
        return OnlineTransporter(
            self.source,
            self.target,
            self.cost,
            self.k,
            other,
            {"source_cdf": self.source_cdf, "target_cdf": self.target_cdf},
        )

    # ------------------------------------------------------------------
    # single rounds

    def _target_law(self, prefix):
        law = self.target.conditional(prefix)
        if law is None or not (law.has_cdf and law.has_inv_cdf):
            raise ConfigurationError("target_cdf shortcut needs exact conditional CDFs from the target")
        return law

    def _target_draws(self, prefixes, count, rng, ledger):
        m, i = prefixes.shape
        if count == 0:
            return np.empty((m, 0))
        rows = np.repeat(prefixes, count, axis=0)
        if m == 1 and not self.target.in_support(prefixes[0]):
            raise InternalInconsistencyError(f"target returned bottom at round {i + 1}")
        return np.asarray(self.target.next_batch(rows, rng, ledger), dtype=float).reshape(m, count)

    def _source_draws(self, i, count, m, rng, ledger):
        if count == 0:
            return np.empty((m, 0))
        if ledger is not None:
            ledger.source_draws_per_round[i] += m * count
        return np.asarray(self.source[i].sample(rng, m * count), dtype=float).reshape(m, count)

    def _forward_round(self, i, xi, prefixes, rng, ledger):
        m, k = xi.size, self.k
        mu = self.source[i]
        c = self.costs[i]
        if self.source_cdf and self.target_cdf:
            out = np.empty(m)

            def push(rows, prefix):
                out[rows] = cdf_transport(xi[rows], mu, self._target_law(prefix), rng)

            return _grouped(prefixes, push, out)
        if self.target_cdf:
            fresh = self._source_draws(i, k - 1, m, rng, ledger)
            r = _random_rank(fresh, xi, rng)
            t = (r + rng.uniform(m)) / k
            t = np.minimum(t, np.nextafter(1.0, 0.0))
            out = np.empty(m)

            def quantile(rows, prefix):
                out[rows] = self._target_law(prefix).inv_cdf(t[rows])

            return _grouped(prefixes, quantile, out)
        Y = self._target_draws(prefixes, k, rng, ledger)
        if self.source_cdf:
            p0 = np.asarray(mu.cdf_left(xi), dtype=float)
            p1 = np.asarray(mu.cdf(xi), dtype=float)
            t = p0 + rng.uniform(m) * (p1 - p0)
            r = np.minimum(np.floor(t * k).astype(np.int64), k - 1)
            return np.sort(Y, axis=1, kind="stable")[np.arange(m), r]
        fresh = self._source_draws(i, k - 1, m, rng, ledger)
        if c.is_convex:
            r = _random_rank(fresh, xi, rng)
            return np.sort(Y, axis=1, kind="stable")[np.arange(m), r]
        hidden = rng.integers(0, k, size=m)
        out = np.empty(m)
        for row in range(m):
            X = np.insert(fresh[row], hidden[row], xi[row])
            match = hungarian_match(X, Y[row], c)
            out[row] = Y[row, match.target_of[hidden[row]]]
        return out

    def _inverse_round(self, i, yi, prefixes, rng, ledger):
        m, k = yi.size, self.k
        mu = self.source[i]
        c = self.costs[i]
        if self.source_cdf and self.target_cdf:
            out = np.empty(m)

            def push(rows, prefix):
                out[rows] = cdf_transport(yi[rows], self._target_law(prefix), mu, rng)

            return _grouped(prefixes, push, out)
        if self.source_cdf:
            fresh = self._target_draws(prefixes, k - 1, rng, ledger)
            r = _random_rank(fresh, yi, rng)
            t = np.minimum((r + rng.uniform(m)) / k, np.nextafter(1.0, 0.0))
            return np.asarray(mu.inv_cdf(t), dtype=float)
        X = self._source_draws(i, k, m, rng, ledger)
        if self.target_cdf:
            p0, p1 = np.empty(m), np.empty(m)

            def bounds(rows, prefix):
                law = self._target_law(prefix)
                p0[rows] = law.cdf_left(yi[rows])
                p1[rows] = law.cdf(yi[rows])

            _grouped(prefixes, bounds, None)
            t = p0 + rng.uniform(m) * (p1 - p0)
            r = np.minimum(np.floor(t * k).astype(np.int64), k - 1)
            return np.sort(X, axis=1, kind="stable")[np.arange(m), r]
        fresh = self._target_draws(prefixes, k - 1, rng, ledger)
        if c.is_convex:
            r = _random_rank(fresh, yi, rng)
            return np.sort(X, axis=1, kind="stable")[np.arange(m), r]
        hidden = rng.integers(0, k, size=m)
        out = np.empty(m)
        for row in range(m):
            Yrow = np.insert(fresh[row], hidden[row], yi[row])
            match = hungarian_match(X[row], Yrow, c)
            source_of = np.argsort(match.target_of)
            out[row] = X[row, source_of[hidden[row]]]
        return out

    def step(self, i, value, prefix, rng, ledger=None):
        """One round for a single record.

        Forward: ``value`` is x_i and ``prefix`` holds y_1..y_{i-1}; returns
        y_i. Inverse: ``value`` is y_i, ``prefix`` holds the target-side
        prefix y_1..y_{i-1}; returns x_i.
        """
        prefix = np.asarray(prefix, dtype=float).reshape(1, -1)
        if prefix.shape[1] != i or not 0 <= i < self.n:
            raise RejectedInputError("prefix length must equal the round index")
        value = np.array([float(value)])
        if self.direction == "forward":
            return float(self._forward_round(i, value, prefix, rng, ledger)[0])
        return float(self._inverse_round(i, value, prefix, rng, ledger)[0])

    # ------------------------------------------------------------------
    # whole points

    def run_batch(self, points, rng, ledger=None):
        """Map every row of ``points`` (shape (m, n)) in the configured
        direction. Rows are independent records sharing one stream."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 2 or points.shape[1] != self.n:
            raise RejectedInputError(f"expected points of shape (m, {self.n})")
        if not np.all(np.isfinite(points)):
            raise RejectedInputError("points must be finite")
        m = points.shape[0]
        ledger = CostLedger(self.n) if ledger is None else ledger
        out = np.empty_like(points)
        for i in range(self.n):
            if self.direction == "forward":
                out[:, i] = self._forward_round(i, points[:, i], out[:, :i], rng, ledger)
            else:
                out[:, i] = self._inverse_round(i, points[:, i], points[:, :i], rng, ledger)
        x, y = (points, out) if self.direction == "forward" else (out, points)
        per = np.column_stack([c(x[:, i], y[:, i]) for i, c in enumerate(self.costs)]) if m else np.empty((0, self.n))
        return BatchResult(points, out, np.asarray(per, dtype=float), ledger)

    def apply(self, point, rng):
        point = as_point(point, self.n)
        res = self.run_batch(point.reshape(1, -1), rng)
        x, y = (point, res.outputs[0]) if self.direction == "forward" else (res.outputs[0], point)
        return TransportRecord(x, y, CostSample(res.per_coordinate[0]), res.ledger, self.direction)

    def transport(self, x, rng):
        """Forward map of one source point."""
        t = self if self.direction == "forward" else self.inverted()
        return t.apply(x, rng)

    def inverse_transport(self, y, rng):
        """Inverse map of one target point back to the product source."""
        t = self if self.direction == "inverse" else self.inverted()
        return t.apply(y, rng)

    # ------------------------------------------------------------------

    def to_config(self):
        return {
            "n": self.n,
            "k": self.k,
            "p": self.cost.p,
            "cost": self.cost.to_json(),
            "source_marginals": [d.to_json() for d in self.source],
            "target": self.target.to_json(),
            "shortcut": {"source_cdf": self.source_cdf, "target_cdf": self.target_cdf},
            "epsilon_hint": getattr(self.target, "epsilon_hint", None),
            "direction": self.direction,
        }

    def __repr__(self):
        return f"OnlineTransporter(n={self.n}, k={self.k}, direction={self.direction!r})"


def sampler_from_json(obj, marginals=None):
    from .oracle_exact import DiscreteSpace

    kind = obj.get("kind")
    if kind == "product":
        return ProductSampler([dist_from_json(d) for d in obj.get("marginals", marginals or [])])
    if kind == "finite":
        return FiniteSampler(DiscreteSpace.from_json(obj["space"]))
    if kind == "conditioned":
        base = sampler_from_json(obj.get("base", {"kind": "product", "marginals": marginals}), marginals)
        S = oracle_from_json(obj["set"])
        return ConditionedSampler(base, S, obj["epsilon_hint"], obj.get("trial_cap"))
    raise ConfigurationError(f"unknown target kind {kind!r}")


def transporter_from_config(obj):
    """Build an OnlineTransporter from its JSON description."""
    try:
        marginals = [dist_from_json(d) for d in obj["source_marginals"]]
        cost = CostSpec.from_json(obj["cost"]) if "cost" in obj else CostSpec.lp(obj.get("p", 2.0))
        target = dict(obj["target"])
        if target.get("kind") == "conditioned" and "epsilon_hint" not in target:
            target["epsilon_hint"] = obj["epsilon_hint"]
        sampler = sampler_from_json(target, [d.to_json() for d in marginals])
        t = OnlineTransporter(
            marginals,
            sampler,
            cost,
            obj["k"],
            obj.get("direction", "forward"),
            obj.get("shortcut"),
        )
    except KeyError as exc:
        raise ConfigurationError(f"transporter config lacks {exc.args[0]!r}") from None
    if "n" in obj and obj["n"] != t.n:
        raise ConfigurationError("declared n does not match the marginals")
    return t


# ---------------------------------------------------------------------------
# Composition


class IdentityStage:
    """Leaves points unchanged; cost 0."""

    def __init__(self, law, n, cost):
        self.input_law = self.output_law = law
        self.n = n
        self.cost = cost

    def run_batch(self, points, rng, ledger=None):
        points = np.asarray(points, dtype=float)
        ledger = CostLedger(self.n) if ledger is None else ledger
        return BatchResult(points, points.copy(), np.zeros_like(points), ledger)

    def apply(self, point, rng):
        point = as_point(point, self.n)
        return TransportRecord(point, point.copy(), CostSample(np.zeros(self.n)), CostLedger(self.n))


class ComposedStage:
    """Run ``first`` and feed its output into ``second``.

    The cost of the composite is measured directly between the input of the
    first stage and the output of the second.
    """

    def __init__(self, first, second):
        if first.output_law != second.input_law:
            raise ConfigurationError("the first stage's output law differs from the second stage's input law")
        if first.n != second.n:
            raise ConfigurationError("stages differ in dimension")
        self.first = first
        self.second = second
        self.n = first.n
        self.cost = first.cost
        self.input_law = first.input_law
        self.output_law = second.output_law

    def run_batch(self, points, rng, ledger=None):
        ledger = CostLedger(self.n) if ledger is None else ledger
        a = self.first.run_batch(points, rng, ledger)
        b = self.second.run_batch(a.outputs, rng, ledger)
        costs = self.cost.costs(self.n)
        per = np.column_stack([c(a.inputs[:, i], b.outputs[:, i]) for i, c in enumerate(costs)])
        return BatchResult(a.inputs, b.outputs, np.asarray(per, dtype=float), ledger, [a, b])

    def apply(self, point, rng):
        point = as_point(point, self.n)
        res = self.run_batch(point.reshape(1, -1), rng)
        return TransportRecord(point, res.outputs[0], CostSample(res.per_coordinate[0]), res.ledger)


def compose(first, second):
    return ComposedStage(first, second)


# ---------------------------------------------------------------------------
# Set transports


def set_transport(marginals, S, cost, k, epsilon_hint, shortcut=None, trial_cap=None):
    """Transporter from the product law to the product law conditioned on S."""
    marginals = list(marginals)
    target = ConditionedSampler(ProductSampler(marginals), S, epsilon_hint, trial_cap)
    return OnlineTransporter(marginals, target, cost, k, "forward", shortcut)


def concentrate(marginals, S, cost, k, epsilon_hint, x, rng, shortcut=None):
    """Map ``x`` into S; returns ``(y, distance)`` with distance the
    l_p distance (c(x, y))^(1/p)."""
    t = set_transport(marginals, S, cost, k, epsilon_hint, shortcut)
    rec = t.transport(x, rng)
    return rec.y, rec.cost_sample.total ** (1.0 / cost.p)
