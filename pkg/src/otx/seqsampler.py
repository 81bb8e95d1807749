"""Sequential samplers: answer "draw coordinate i given the prefix" queries.

A sampler returns ``None`` (bottom) for prefixes outside its support. All
draws go through an explicitly passed RngStream, and every call can be
charged to a CostLedger.
"""

import math
import subprocess

import numpy as np

from .core import (
    BudgetExhaustedError,
    InternalInconsistencyError,
    RejectedInputError,
    as_point,
)
from .dist1d import Finite, norm_isf, norm_sf


class CostLedger:
    """Counters for one sampling or transport session.

    ``calls_per_round[i]`` counts draws requested from the sampler at round
    i, ``total_sampler_cost`` accumulates the declared sampling cost of the
    underlying oracle (one unit per base draw unless declared otherwise) and
    ``membership_queries`` counts membership-oracle invocations.
    """

    def __init__(self, n):
        self.n = int(n)
        self.calls_per_round = np.zeros(self.n, dtype=np.int64)
        self.membership_per_round = np.zeros(self.n, dtype=np.int64)
        self.source_draws_per_round = np.zeros(self.n, dtype=np.int64)
        self.total_sampler_cost = 0.0
        self.base_calls = 0

    @property
    def membership_queries(self):
        return int(self.membership_per_round.sum())

    def record_calls(self, i, count, cost):
        self.calls_per_round[i] += count
        self.total_sampler_cost += cost

    def merge(self, other):
        self.calls_per_round += other.calls_per_round
        self.membership_per_round += other.membership_per_round
        self.source_draws_per_round += other.source_draws_per_round
        self.total_sampler_cost += other.total_sampler_cost
        self.base_calls += other.base_calls
        return self

    def to_json(self):
        return {
            "calls_per_round": self.calls_per_round.tolist(),
            "membership_per_round": self.membership_per_round.tolist(),
            "source_draws_per_round": self.source_draws_per_round.tolist(),
            "total_sampler_cost": self.total_sampler_cost,
            "membership_queries": self.membership_queries,
        }

    def __repr__(self):
        return (
            f"CostLedger(calls={self.calls_per_round.tolist()}, "
            f"membership={self.membership_queries}, cost={self.total_sampler_cost})"
        )


class SequentialSampler:
    """Base class. Subclasses implement ``_draw(prefix, rng, m)`` returning
    ``m`` draws of coordinate ``len(prefix)`` or ``None`` for bottom, and
    may override ``_draw_batch`` for rows with different prefixes."""

    n = 0
    label = "sampler"
    kind = "abstract"

    def sc(self, i):
        """Declared cost of one call at round ``i`` (0-based)."""
        return 1.0

    def conditional(self, prefix):
        """Exact law of the next coordinate, when the sampler knows it."""
        return None

    def in_support(self, prefix):
        """Whether ``prefix`` has positive mass (samplers that cannot tell
        answer True and report bottom from ``next``)."""
        return True

    def _round(self, prefix):
        prefix = np.asarray(prefix, dtype=float).reshape(-1)
        if prefix.size >= self.n:
            raise RejectedInputError(f"prefix of length {prefix.size} leaves nothing to sample (n = {self.n})")
        return prefix, prefix.size

    def next(self, prefix, rng, size=None, ledger=None):
        """Draw coordinate ``len(prefix)`` given ``prefix``.

        Returns a float (or an array of ``size`` independent draws), or
        ``None`` if the prefix is outside the support.
        """
        prefix, i = self._round(prefix)
        m = 1 if size is None else int(size)
        out = self._draw(prefix, rng, m, ledger)
        if out is None:
            return None
        if ledger is not None:
            ledger.record_calls(i, m, m * self.sc(i))
        return float(out[0]) if size is None else out

    def next_batch(self, prefixes, rng, ledger=None):
        """One draw per row of ``prefixes`` (shape (m, i)); bottom raises."""
        prefixes = np.asarray(prefixes, dtype=float)
        m, i = prefixes.shape
        if i >= self.n:
            raise RejectedInputError("prefix length must be below n")
        out = self._draw_batch(prefixes, rng, ledger)
        if ledger is not None:
            ledger.record_calls(i, m, m * self.sc(i))
        return out

    def _draw_batch(self, prefixes, rng, ledger):
        out = np.empty(prefixes.shape[0])
        for r, row in enumerate(prefixes):
            v = self._draw(row, rng, 1, ledger)
            if v is None:
                raise InternalInconsistencyError("bottom returned for an in-support prefix")
            out[r] = v[0]
        return out

    def _draw(self, prefix, rng, m, ledger):
        raise NotImplementedError


class ProductSampler(SequentialSampler):
    """Independent coordinates; the prefix values are ignored."""

    kind = "product"

    def __init__(self, marginals):
        self.marginals = list(marginals)
        if not self.marginals:
            raise RejectedInputError("need at least one marginal")
        for d in self.marginals:
            if not d.can_sample:
                raise RejectedInputError(f"{d.kind} marginal cannot be sampled")
        self.n = len(self.marginals)
        self.label = "product"

    def conditional(self, prefix):
        return self.marginals[len(prefix)]

    def _draw(self, prefix, rng, m, ledger):
        return np.asarray(self.marginals[prefix.size].sample(rng, m), dtype=float).reshape(-1)

    def _draw_batch(self, prefixes, rng, ledger):
        d = self.marginals[prefixes.shape[1]]
        return np.asarray(d.sample(rng, prefixes.shape[0]), dtype=float).reshape(-1)

    def to_json(self):
        return {"kind": "product", "marginals": [d.to_json() for d in self.marginals]}


def product_sampler(marginals):
    return ProductSampler(marginals)


class FiniteSampler(SequentialSampler):
    """Exact conditional sampling from a DiscreteSpace table."""

    kind = "finite"

    def __init__(self, space):
        self.space = space
        self.n = space.n
        self.label = "finite"
        self._cache = {}

    def _conditional_law(self, prefix):
        key = tuple(float(v) for v in prefix)
        if key not in self._cache:
            idx = self.space.indices(key)
            probs = None if idx is None else self.space.conditional(idx)
            if probs is None:
                self._cache[key] = None
            else:
                cum = np.cumsum(probs)
                cum[-1] = 1.0
                self._cache[key] = (probs, cum)
        return self._cache[key]

    def in_support(self, prefix):
        return self._conditional_law(np.asarray(prefix, dtype=float).reshape(-1)) is not None

    def conditional(self, prefix):
        law = self._conditional_law(np.asarray(prefix, dtype=float).reshape(-1))
        if law is None:
            return None
        return Finite(self.space.alphabets[len(prefix)], law[0])

    def _draw(self, prefix, rng, m, ledger):
        law = self._conditional_law(prefix)
        if law is None:
            return None
        u = rng.uniform(m)
        j = np.minimum(np.searchsorted(law[1], u, side="right"), law[1].size - 1)
        return self.space.alphabets[prefix.size][j]

    def _round_table(self, i):
        key = ("round", i)
        if key not in self._cache:
            block = self.space.prefix_table(i + 1).reshape(-1, self.space.shape[i])
            mass = block.sum(axis=1)
            with np.errstate(invalid="ignore", divide="ignore"):
                cum = np.cumsum(block / mass[:, None], axis=1)
            cum[:, -1] = 1.0
            self._cache[key] = (cum, mass > 0)
        return self._cache[key]

    def _prefix_keys(self, prefixes):
        m, i = prefixes.shape
        if i == 0:
            return np.zeros(m, dtype=np.int64)
        idx = []
        for j in range(i):
            alpha = self.space.alphabets[j]
            order = np.argsort(alpha)
            pos = np.minimum(np.searchsorted(alpha[order], prefixes[:, j]), alpha.size - 1)
            if np.any(alpha[order][pos] != prefixes[:, j]):
                raise InternalInconsistencyError("prefix value outside the alphabet")
            idx.append(order[pos])
        return np.ravel_multi_index(tuple(idx), self.space.shape[:i])

    def _draw_batch(self, prefixes, rng, ledger):
        i = prefixes.shape[1]
        cum, valid = self._round_table(i)
        keys = self._prefix_keys(prefixes)
        if not np.all(valid[keys]):
            raise InternalInconsistencyError("bottom returned for an in-support prefix")
        u = rng.uniform(prefixes.shape[0])
        j = np.minimum((cum[keys] <= u[:, None]).sum(axis=1), cum.shape[1] - 1)
        return self.space.alphabets[i][j]

    def to_json(self):
        return {"kind": "finite", "space": self.space.to_json()}


def finite_sampler(space):
    return FiniteSampler(space)


# ---------------------------------------------------------------------------
# Membership oracles


class MembershipOracle:
    """Deterministic set membership with a query counter.

    Subclasses implement ``_test_many(points)`` on an (m, n) array.
    """

    label = "set"

    def __init__(self):
        self.queries = 0

    def contains(self, point):
        return bool(self.contains_many(np.asarray(point, dtype=float).reshape(1, -1))[0])

    def contains_many(self, points):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise RejectedInputError("contains_many expects an (m, n) array")
        self.queries += points.shape[0]
        return np.asarray(self._test_many(points), dtype=bool)

    def _test_many(self, points):
        raise NotImplementedError

    def to_json(self):
        # identifies the set within one process only
        return {"kind": self.label, "object": id(self)}

    def __contains__(self, point):
        return self.contains(point)


class FullSpace(MembershipOracle):
    label = "full"

    def _test_many(self, points):
        return np.ones(points.shape[0], dtype=bool)

    def to_json(self):
        return {"kind": "full"}


class HalfSpace(MembershipOracle):
    """{x : <a, x> >= threshold}."""

    label = "halfspace"

    def __init__(self, normal, threshold):
        super().__init__()
        self.normal = np.asarray(normal, dtype=float).reshape(-1)
        self.threshold = float(threshold)
        if not np.any(self.normal):
            raise RejectedInputError("halfspace normal must be non-zero")

    @classmethod
    def gaussian(cls, n, epsilon, normal=None):
        """Halfspace of standard Gaussian measure exactly ``epsilon``."""
        if not 0 < epsilon <= 1:
            raise RejectedInputError("epsilon must lie in (0, 1]")
        a = np.zeros(n) if normal is None else np.asarray(normal, dtype=float)
        if normal is None:
            a[0] = 1.0
        threshold = -math.inf if epsilon == 1 else float(np.linalg.norm(a) * norm_isf(epsilon))
        return cls(a, threshold)

    def gaussian_measure(self):
        """Measure under the standard Gaussian of matching dimension."""
        if self.threshold == -math.inf:
            return 1.0
        return float(norm_sf(self.threshold / np.linalg.norm(self.normal)))

    def _test_many(self, points):
        return points @ self.normal >= self.threshold

    def to_json(self):
        return {"kind": "halfspace", "normal": self.normal.tolist(), "threshold": self.threshold}


class Intersection(MembershipOracle):
    """Both sets; the second is only asked about points inside the first."""

    label = "intersection"

    def __init__(self, first, second):
        super().__init__()
        self.first = first
        self.second = second

    def _test_many(self, points):
        out = self.first.contains_many(points)
        if np.any(out):
            out[out] = self.second.contains_many(points[out])
        return out

    def to_json(self):
        return {"kind": "intersection", "sets": [self.first.to_json(), self.second.to_json()]}


class OutsideBall(MembershipOracle):
    """{x : ||x||_2 >= radius}."""

    label = "outside_ball"

    def __init__(self, radius):
        super().__init__()
        self.radius = float(radius)

    def _test_many(self, points):
        return np.einsum("ij,ij->i", points, points) >= self.radius**2

    def to_json(self):
        return {"kind": "outside_ball", "radius": self.radius}


class Preimage(MembershipOracle):
    """{z : g(z) in S} for a deterministic point map ``g``."""

    label = "preimage"

    def __init__(self, inner, g):
        super().__init__()
        self.inner = inner
        self.g = g

    def _test_many(self, points):
        return self.inner.contains_many(np.asarray(self.g(points), dtype=float))

    def to_json(self):
        return {"kind": "preimage", "set": self.inner.to_json(), "map": getattr(self.g, "__qualname__", repr(self.g))}


class PredicateOracle(MembershipOracle):
    """Wraps a Python predicate on single points (or on batches if
    ``vectorized``)."""

    label = "predicate"

    def __init__(self, fn, vectorized=False):
        super().__init__()
        self.fn = fn
        self.vectorized = vectorized

    def _test_many(self, points):
        if self.vectorized:
            return self.fn(points)
        return np.fromiter((bool(self.fn(p)) for p in points), dtype=bool, count=points.shape[0])


class ExternalProcessOracle(MembershipOracle):
    """Membership answered by a child process.

    Each query writes one line of space-separated floats to the process and
    reads back one line, ``1`` or ``0``.
    """

    label = "external"

    def __init__(self, command):
        super().__init__()
        self.command = command
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
            shell=isinstance(command, str),
        )

    def _ask(self, point):
        line = " ".join(format(float(v), ".17g") for v in point)
        self._proc.stdin.write(line + "\n")
        self._proc.stdin.flush()
        reply = self._proc.stdout.readline().strip()
        if reply not in ("0", "1"):
            raise InternalInconsistencyError(f"membership process replied {reply!r}")
        return reply == "1"

    def _test_many(self, points):
        return np.fromiter((self._ask(p) for p in points), dtype=bool, count=points.shape[0])

    def close(self):
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def to_json(self):
        return {"kind": "external", "command": self.command}


def oracle_from_json(obj):
    kind = obj.get("kind")
    if kind == "full":
        return FullSpace()
    if kind == "halfspace":
        if "epsilon" in obj:
            return HalfSpace.gaussian(obj["n"], obj["epsilon"], obj.get("normal"))
        return HalfSpace(obj["normal"], obj["threshold"])
    if kind == "intersection":
        first, second = (oracle_from_json(s) for s in obj["sets"])
        return Intersection(first, second)
    if kind == "outside_ball":
        return OutsideBall(obj["radius"])
    if kind == "external":
        return ExternalProcessOracle(obj["command"])
    raise RejectedInputError(f"unknown membership oracle kind {kind!r}")


# ---------------------------------------------------------------------------
# Rejection-conditioned sampler


class ConditionedSampler(SequentialSampler):
    """Sampler for base | S by rejection.

    To draw coordinate i after the prefix, the suffix is completed with the
    base sampler and the full point is tested against S; accepted points
    contribute their i-th coordinate, rejected ones are discarded. Several
    requested draws are processed together, each pending slot making one
    fresh trial per pass.

    ``trial_cap`` bounds the trials of a single slot (default
    ``ceil(50 / epsilon_hint)``). The expected count averaged over prefixes
    is ``1 / nu(S)``, but a particular prefix can leave S much less likely
    than that, so sets whose membership hinges on late coordinates may need
    a larger cap.
    """

    kind = "conditioned"

    def __init__(self, base, S, epsilon_hint, trial_cap=None):
        if not 0 < epsilon_hint <= 1:
            raise RejectedInputError("epsilon_hint must lie in (0, 1]")
        self.base = base
        self.S = S
        self.n = base.n
        self.epsilon_hint = float(epsilon_hint)
        self.trial_cap = int(trial_cap) if trial_cap is not None else math.ceil(50.0 / epsilon_hint)
        if self.trial_cap < 1:
            raise RejectedInputError("trial_cap must be positive")
        self.label = f"{base.label}|{S.label}"

    def in_support(self, prefix):
        return self.base.in_support(prefix)

    def _rejection(self, prefixes, rng, ledger):
        m, i = prefixes.shape
        out = np.empty(m)
        pending = np.arange(m)
        trials = 0
        while pending.size:
            trials += 1
            if trials > self.trial_cap:
                raise BudgetExhaustedError(
                    f"rejection sampling exceeded {self.trial_cap} trials at round {i + 1}",
                    trials=trials - 1,
                    partial=m - pending.size,
                )
            pts = np.empty((pending.size, self.n))
            pts[:, :i] = prefixes[pending]
            for j in range(i, self.n):
                pts[:, j] = self.base.next_batch(pts[:, :j], rng)
                if ledger is not None:
                    ledger.base_calls += pending.size
                    ledger.total_sampler_cost += pending.size * self.base.sc(j)
            ok = self.S.contains_many(pts)
            if ledger is not None:
                ledger.membership_per_round[i] += pending.size
            out[pending[ok]] = pts[ok, i]
            pending = pending[~ok]
        if ledger is not None:
            ledger.calls_per_round[i] += m
        return out

    def next(self, prefix, rng, size=None, ledger=None):
        prefix, i = self._round(prefix)
        if not self.in_support(prefix):
            return None
        m = 1 if size is None else int(size)
        out = self._rejection(np.broadcast_to(prefix, (m, i)), rng, ledger)
        return float(out[0]) if size is None else out

    def next_batch(self, prefixes, rng, ledger=None):
        prefixes = np.asarray(prefixes, dtype=float)
        if prefixes.shape[1] >= self.n:
            raise RejectedInputError("prefix length must be below n")
        return self._rejection(prefixes, rng, ledger)

    def to_json(self):
        return {
            "kind": "conditioned",
            "base": self.base.to_json(),
            "set": self.S.to_json(),
            "epsilon_hint": self.epsilon_hint,
            "trial_cap": self.trial_cap,
        }


def conditioned_sampler(base, S, epsilon_hint, trial_cap=None):
    return ConditionedSampler(base, S, epsilon_hint, trial_cap)


def full_sample(sampler, rng, ledger=None):
    """Extend the empty prefix one coordinate at a time; returns
    ``(point, ledger)``."""
    ledger = CostLedger(sampler.n) if ledger is None else ledger
    y = np.empty(sampler.n)
    for i in range(sampler.n):
        v = sampler.next(y[:i], rng, ledger=ledger)
        if v is None:
            raise InternalInconsistencyError(f"sampler returned bottom on its own prefix at round {i + 1}")
        y[i] = v
    return as_point(y), ledger
