"""Exact computations on small finite product alphabets.

Everything here enumerates outcomes explicitly and solves linear programs,
so it is only meant for desk-scale instances used as ground truth:
offline optimal transport, the Delta and Lambda functions, greedy
couplings, and the optimal online coupling / online transport costs.
"""

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .core import (
    CostSpec,
    HammingCost,
    InternalInconsistencyError,
    RejectedInputError,
    TabulatedCost,
)

MAX_OUTCOMES = 2**20
MAX_JOINT = 10**6
_LP_OPTIONS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
    "presolve": True,
}


class DiscreteSpace:
    """A distribution on a finite product alphabet, stored as a full table.

    ``table[i_1, ..., i_n]`` is the probability of the outcome
    ``(alphabets[0][i_1], ..., alphabets[n-1][i_n])``.
    """

    def __init__(self, alphabets, table):
        self.alphabets = [np.asarray(a, dtype=float).reshape(-1) for a in alphabets]
        if not self.alphabets:
            raise RejectedInputError("need at least one coordinate")
        for a in self.alphabets:
            if a.size == 0 or np.unique(a).size != a.size:
                raise RejectedInputError("alphabets must be non-empty with distinct values")
        self.shape = tuple(a.size for a in self.alphabets)
        if math.prod(self.shape) > MAX_OUTCOMES:
            raise RejectedInputError("outcome space exceeds the oracle scale of 2^20")
        table = np.asarray(table, dtype=float)
        if table.shape != self.shape:
            raise RejectedInputError(f"table shape {table.shape} does not match alphabets {self.shape}")
        if np.any(table < 0) or abs(table.sum() - 1.0) > 1e-12:
            raise RejectedInputError("probabilities must be non-negative and sum to 1")
        self.table = table
        self._index = [{float(v): j for j, v in enumerate(a)} for a in self.alphabets]

    @classmethod
    def product(cls, marginals):
        """Product of ``(values, probs)`` pairs or Finite distributions."""
        alphabets, probs = [], []
        for m in marginals:
            if hasattr(m, "values") and hasattr(m, "probs"):
                values, p = m.values, m.probs
            else:
                values, p = m
            alphabets.append(values)
            probs.append(np.asarray(p, dtype=float))
        table = probs[0]
        for p in probs[1:]:
            table = np.multiply.outer(table, p)
        return cls(alphabets, table)

    @classmethod
    def uniform(cls, alphabets):
        shape = tuple(len(a) for a in alphabets)
        return cls(alphabets, np.full(shape, 1.0 / math.prod(shape)))

    @property
    def n(self):
        return len(self.alphabets)

    @property
    def size(self):
        return self.table.size

    def outcomes(self):
        grids = np.meshgrid(*self.alphabets, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def probs(self):
        return self.table.reshape(-1)

    def indices(self, values):
        try:
            return tuple(self._index[i][float(v)] for i, v in enumerate(values))
        except KeyError:
            return None

    def prefix_table(self, i):
        """Marginal table of the first ``i`` coordinates."""
        if i == self.n:
            return self.table
        return self.table.sum(axis=tuple(range(i, self.n)))

    def conditional(self, prefix_idx):
        """Conditional law of coordinate ``len(prefix_idx)`` given the
        prefix (as alphabet indices); ``None`` if the prefix has no mass."""
        i = len(prefix_idx)
        block = self.prefix_table(i + 1)[tuple(prefix_idx)]
        mass = block.sum()
        if mass <= 0:
            return None
        return block / mass

    def marginal(self, i):
        axes = tuple(j for j in range(self.n) if j != i)
        return self.table.sum(axis=axes) if axes else self.table

    def is_product(self, tol=1e-10):
        prod = self.marginal(0)
        for i in range(1, self.n):
            prod = np.multiply.outer(prod, self.marginal(i))
        return bool(np.max(np.abs(prod - self.table)) <= tol)

    def to_json(self):
        return {"alphabets": [a.tolist() for a in self.alphabets], "table": self.table.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["alphabets"], obj["table"])

    def __repr__(self):
        return f"DiscreteSpace(shape={self.shape})"


@dataclass
class DiscreteCoupling:
    """Joint table between the outcomes of ``mu`` (rows) and ``nu`` (columns)."""

    mu: DiscreteSpace
    nu: DiscreteSpace
    joint: np.ndarray

    def check(self, tol=1e-10):
        rows = np.abs(self.joint.sum(axis=1) - self.mu.probs()).max()
        cols = np.abs(self.joint.sum(axis=0) - self.nu.probs()).max()
        return rows <= tol and cols <= tol

    def tensor(self):
        return self.joint.reshape(self.mu.shape + self.nu.shape)


def cost_matrix(mu, nu, cost):
    """Matrix of total linear costs between all outcome pairs."""
    if mu.n != nu.n:
        raise RejectedInputError("spaces differ in dimension")
    xs, ys = mu.outcomes(), nu.outcomes()
    C = np.zeros((xs.shape[0], ys.shape[0]))
    for i, c in enumerate(cost.costs(mu.n)):
        C += c.pairwise(xs[:, i], ys[:, i])
    return C


def _solve(objective, A_eq, b_eq):
    res = linprog(
        objective,
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs",
        options=_LP_OPTIONS,
    )
    if res.status != 0:
        raise InternalInconsistencyError(f"LP solver failed: {res.message}")
    return float(res.fun), res.x


def _marginal_rows(N, M):
    rows = sparse.kron(sparse.identity(N), np.ones((1, M)))
    cols = sparse.kron(np.ones((1, N)), sparse.identity(M))
    return sparse.vstack([rows, cols]).tocsr()


# ---------------------------------------------------------------------------
# One-dimensional exact transport between finite laws


def _northwest(p, q):
    plan = np.zeros((p.size, q.size))
    p, q = p.copy(), q.copy()
    i = j = 0
    while i < p.size and j < q.size:
        m = min(p[i], q[j])
        plan[i, j] += m
        p[i] -= m
        q[j] -= m
        if p[i] <= q[j]:
            i += 1
        else:
            j += 1
    return plan


def ot_discrete_1d(xv, p, yv, q, c, plan=False):
    """Optimal transport between two finite laws on the line.

    Sorted monotone coupling for convex costs, total variation for Hamming,
    and a transportation LP otherwise.
    """
    xv = np.asarray(xv, dtype=float)
    yv = np.asarray(yv, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if getattr(c, "is_convex", False):
        sx, sy = np.argsort(xv, kind="stable"), np.argsort(yv, kind="stable")
        sorted_plan = _northwest(p[sx], q[sy])
        P = np.zeros((xv.size, yv.size))
        P[np.ix_(sx, sy)] = sorted_plan
    elif isinstance(c, HammingCost):
        P = np.zeros((xv.size, yv.size))
        common = defaultdict(lambda: [None, None])
        for a, v in enumerate(xv):
            common[float(v)][0] = a
        for b, v in enumerate(yv):
            common[float(v)][1] = b
        rp, rq = p.copy(), q.copy()
        for a, b in common.values():
            if a is not None and b is not None:
                m = min(rp[a], rq[b])
                P[a, b] = m
                rp[a] -= m
                rq[b] -= m
        P += _northwest(rp, rq)
    else:
        C = c.pairwise(xv, yv)
        value, x = _solve(C.reshape(-1), _marginal_rows(xv.size, yv.size), np.concatenate([p, q]))
        P = np.maximum(x.reshape(xv.size, yv.size), 0.0)
        return (value, P) if plan else value
    value = float(np.sum(P * c.pairwise(xv, yv)))
    return (value, P) if plan else value


# ---------------------------------------------------------------------------
# Offline and online optima


def exact_ot(mu, nu, cost):
    """Offline optimal transport cost and an optimal coupling (one LP)."""
    N, M = mu.size, nu.size
    if N * M > MAX_JOINT:
        raise RejectedInputError(f"joint outcome count {N * M} exceeds {MAX_JOINT}")
    C = cost_matrix(mu, nu, cost)
    value, x = _solve(C.reshape(-1), _marginal_rows(N, M), np.concatenate([mu.probs(), nu.probs()]))
    return value, DiscreteCoupling(mu, nu, np.maximum(x.reshape(N, M), 0.0))


def delta_function(mu, nu, cost):
    """Delta_c(mu, nu) = E_{y ~ nu} sum_i T_{c_i}(mu_i, nu_i | y_[i-1]).

    Requires a product source.
    """
    if mu.n != nu.n:
        raise RejectedInputError("spaces differ in dimension")
    if not mu.is_product():
        raise RejectedInputError("the Delta function needs a product source")
    costs = cost.costs(mu.n)
    total = 0.0
    for i in range(mu.n):
        p = mu.marginal(i)
        block = nu.prefix_table(i + 1)
        flat = block.reshape(-1, nu.shape[i])
        cache = {}
        for row in flat:
            mass = row.sum()
            if mass <= 0:
                continue
            cond = row / mass
            key = cond.tobytes()
            if key not in cache:
                cache[key] = ot_discrete_1d(mu.alphabets[i], p, nu.alphabets[i], cond, costs[i])
            total += mass * cache[key]
    return float(total)


def lambda_function(pi, cost):
    """Lambda_c(pi) = E_{z ~ pi} sum_i T_{c_i}(mu_i | z_[i-1], nu_i | z_[i-1])."""
    mu, nu = pi.mu, pi.nu
    n = mu.n
    if pi.joint.size > MAX_JOINT:
        raise RejectedInputError("coupling exceeds the oracle scale")
    T = pi.tensor()
    costs = cost.costs(n)
    total = 0.0
    for i in range(n):
        keep_x = tuple(range(i + 1, n))
        keep_y = tuple(n + j for j in range(i + 1, n))
        Ti = T.sum(axis=keep_x + keep_y) if (keep_x or keep_y) else T
        # axes of Ti: x_1..x_{i+1}, y_1..y_{i+1}
        for xp in itertools.product(*(range(s) for s in mu.shape[:i])):
            for yp in itertools.product(*(range(s) for s in nu.shape[:i])):
                block = Ti[xp + (slice(None),) + yp + (slice(None),)]
                mass = block.sum()
                if mass <= 1e-15:
                    continue
                px = block.sum(axis=1) / mass
                py = block.sum(axis=0) / mass
                total += mass * ot_discrete_1d(mu.alphabets[i], px, nu.alphabets[i], py, costs[i])
    return total


def greedy_coupling(mu, nu, cost):
    """Round-by-round locally optimal coupling.

    At every reached prefix pair, couples mu_i | x_[i-1] with nu_i | y_[i-1]
    optimally under c_i. Returns ``(value, DiscreteCoupling)``.
    """
    if mu.n != nu.n:
        raise RejectedInputError("spaces differ in dimension")
    costs = cost.costs(mu.n)
    state = {((), ()): 1.0}
    for i in range(mu.n):
        nxt = defaultdict(float)
        for (xp, yp), mass in state.items():
            px = mu.conditional(xp)
            py = nu.conditional(yp)
            if px is None or py is None:
                raise InternalInconsistencyError("greedy coupling reached a prefix without mass")
            _, P = ot_discrete_1d(mu.alphabets[i], px, nu.alphabets[i], py, costs[i], plan=True)
            for a, b in zip(*np.nonzero(P > 1e-15)):
                nxt[(xp + (int(a),), yp + (int(b),))] += mass * P[a, b]
        state = nxt
    joint = np.zeros((mu.size, nu.size))
    for (xp, yp), mass in state.items():
        joint[np.ravel_multi_index(xp, mu.shape), np.ravel_multi_index(yp, nu.shape)] += mass
    value = float(np.sum(joint * cost_matrix(mu, nu, cost)))
    return value, DiscreteCoupling(mu, nu, joint)


def _conditional_table(space, i):
    """cond[prefix..., a] = P(x_{i+1} = a | x_[i] = prefix), zero where undefined."""
    block = space.prefix_table(i + 1)
    mass = block.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        cond = np.where(mass > 0, block / mass, 0.0)
    return cond


def _online_side_constraints(space, other_shape, side):
    """Rows stating that, given any prefix pair, the next coordinate of
    ``space`` follows its own conditional law."""
    n = space.n
    joint_shape = space.shape + other_shape if side == 0 else other_shape + space.shape
    N = math.prod(joint_shape)
    idx = np.array(np.unravel_index(np.arange(N), joint_shape)).T
    own = idx[:, :n] if side == 0 else idx[:, n:]
    oth = idx[:, n:] if side == 0 else idx[:, :n]
    rows, cols, vals = [], [], []
    row_base = 0
    for i in range(n):
        cond = _conditional_table(space, i)
        a_i = space.shape[i]
        pre_own = own[:, :i]
        pre_oth = oth[:, :i]
        own_shape = space.shape[:i]
        oth_shape = other_shape[:i]
        key = np.ravel_multi_index(
            tuple(pre_own.T) + tuple(pre_oth.T), own_shape + oth_shape
        ) if i > 0 else np.zeros(N, dtype=int)
        n_keys = math.prod(own_shape + oth_shape)
        a_val = own[:, i]
        # +1 on row (key, a_val)
        rows.append(row_base + key * a_i + a_val)
        cols.append(np.arange(N))
        vals.append(np.ones(N))
        # -cond(a | own prefix) on rows (key, a) for every a
        cprefix = cond[tuple(pre_own.T)] if i > 0 else np.broadcast_to(cond, (N, a_i))
        for a in range(a_i):
            rows.append(row_base + key * a_i + a)
            cols.append(np.arange(N))
            vals.append(-cprefix[:, a])
        row_base += n_keys * a_i
    A = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(row_base, N)
    ).tocsr()
    A.eliminate_zeros()
    return A, idx


def online_coupling_optimum(mu, nu, cost):
    """Optimal online-coupling cost T^OnC_c(mu, nu) as an LP.

    The per-prefix requirement that pi_i | (x_[i-1], y_[i-1]) couples
    mu_i | x_[i-1] with nu_i | y_[i-1] is linear in the joint masses:
    mass(x_[i], y_[i-1]) = mu(x_i | x_[i-1]) mass(x_[i-1], y_[i-1]),
    and symmetrically for nu.
    """
    N, M = mu.size, nu.size
    if N * M > 4096 * 4 or mu.n > 3:
        raise RejectedInputError("online coupling LP limited to n <= 3 and small alphabets")
    Ax, _ = _online_side_constraints(mu, nu.shape, 0)
    # joint variables are ordered (mu outcome, nu outcome) in both blocks
    Ay, _ = _online_side_constraints(nu, mu.shape, 1)
    A = sparse.vstack([_marginal_rows(N, M), Ax, Ay]).tocsr()
    b = np.concatenate([mu.probs(), nu.probs(), np.zeros(Ax.shape[0] + Ay.shape[0])])
    C = cost_matrix(mu, nu, cost)
    value, _ = _solve(C.reshape(-1), A, b)
    return value


def online_transport_optimum(source, target, cost):
    """Optimal online transport cost T^OnT_c(source, target) as an LP.

    Couplings realisable by an online algorithm are exactly the causal
    ones: the first i outputs are independent of the unseen input suffix
    given the seen prefix. ``cost`` is evaluated as c(source point, target
    point).
    """
    N, M = source.size, target.size
    n = source.n
    if N * M > 4096 * 4 or n > 3:
        raise RejectedInputError("online transport LP limited to n <= 3 and small alphabets")
    shape = source.shape + target.shape
    idx = np.array(np.unravel_index(np.arange(N * M), shape)).T
    s_idx, t_idx = idx[:, :n], idx[:, n:]
    s_flat = np.ravel_multi_index(tuple(s_idx.T), source.shape)
    rows, cols, vals = [], [], []
    row_base = 0
    src = source.table
    for i in range(1, n):
        # P(s_{>i} | s_[i]) for every full source outcome
        pre_mass = source.prefix_table(i)
        with np.errstate(invalid="ignore", divide="ignore"):
            tail = np.where(
                pre_mass.reshape(pre_mass.shape + (1,) * (n - i)) > 0,
                src / pre_mass.reshape(pre_mass.shape + (1,) * (n - i)),
                0.0,
            ).reshape(-1)
        t_shape = target.shape[:i]
        t_key = np.ravel_multi_index(tuple(t_idx[:, :i].T), t_shape)
        n_t = math.prod(t_shape)
        # row (s, t_[i]): +1 for every variable with that (s, t_[i])
        rows.append(row_base + s_flat * n_t + t_key)
        cols.append(np.arange(N * M))
        vals.append(np.ones(N * M))
        # -P(s_{>i} | s_[i]) for every variable sharing (s_[i], t_[i])
        s_pre = np.ravel_multi_index(tuple(s_idx[:, :i].T), source.shape[:i])
        completions = defaultdict(list)
        for s in range(N):
            completions[np.ravel_multi_index(np.unravel_index(s, source.shape)[:i], source.shape[:i])].append(s)
        for v in range(N * M):
            for s in completions[s_pre[v]]:
                rows.append(np.array([row_base + s * n_t + t_key[v]]))
                cols.append(np.array([v]))
                vals.append(np.array([-tail[s]]))
        row_base += N * n_t
    blocks = [_marginal_rows(N, M)]
    b = [source.probs(), target.probs()]
    if rows:
        A = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(row_base, N * M)
        ).tocsr()
        A.eliminate_zeros()
        blocks.append(A)
        b.append(np.zeros(row_base))
    C = cost_matrix(source, target, cost)
    value, _ = _solve(C.reshape(-1), sparse.vstack(blocks).tocsr(), np.concatenate(b))
    return value


def deterministic_online_optimum(source, target, cost, limit=10**6):
    """Cheapest deterministic online map pushing ``source`` exactly onto
    ``target``, by enumerating every family of maps y_i = F_i(x_[i]).

    Returns ``inf`` when no deterministic map has the right pushforward.
    Only usable on tiny instances; a cross-check of the causal LP.
    """
    n = source.n
    domains = [math.prod(source.shape[: i + 1]) for i in range(n)]
    count = math.prod(target.shape[i] ** domains[i] for i in range(n))
    if count > limit:
        raise RejectedInputError(f"{count} deterministic maps exceed the enumeration limit")
    outcomes = [np.unravel_index(s, source.shape) for s in range(source.size)]
    keys = [
        [np.ravel_multi_index(o[: i + 1], source.shape[: i + 1]) for o in outcomes] for i in range(n)
    ]
    probs = source.probs()
    C = cost_matrix(source, target, cost)
    want = target.probs()
    best = math.inf
    tables = [itertools.product(range(target.shape[i]), repeat=domains[i]) for i in range(n)]
    for maps in itertools.product(*[list(t) for t in tables]):
        image = np.zeros(target.size)
        value = 0.0
        for s in range(source.size):
            y = tuple(maps[i][keys[i][s]] for i in range(n))
            t = np.ravel_multi_index(y, target.shape)
            image[t] += probs[s]
            value += probs[s] * C[s, t]
        if value < best and np.allclose(image, want, atol=1e-12):
            best = value
    return best


# ---------------------------------------------------------------------------
# Fixtures


def claim42_instance(n, epsilon):
    """Uniform bits versus the same law with mass epsilon moved from
    10...0 onto 00...0; the online cost is n times the offline cost."""
    n = int(n)
    if not 1 <= n <= 10 or not 0 <= epsilon <= 2.0**-n:
        raise RejectedInputError("need 1 <= n <= 10 and 0 <= epsilon <= 2^-n")
    alphabets = [[0.0, 1.0]] * n
    mu = DiscreteSpace.uniform(alphabets)
    table = np.full((2,) * n, 2.0**-n)
    table[(0,) * n] += epsilon
    table[(1,) + (0,) * (n - 1)] -= epsilon
    return mu, DiscreteSpace(alphabets, table)


def remark40_instance():
    """Both laws uniform on {(0,0), (1,1)}; c_1 Hamming, c_2 = 2 (1 - Hamming).

    Greedy pays 2 while the best online coupling pays 1.
    """
    table = np.array([[0.5, 0.0], [0.0, 0.5]])
    space = DiscreteSpace([[0.0, 1.0], [0.0, 1.0]], table)
    anti = TabulatedCost([0.0, 1.0], [0.0, 1.0], [[2.0, 0.0], [0.0, 2.0]])
    return space, DiscreteSpace(space.alphabets, table.copy()), CostSpec(1.0, [HammingCost(), anti])


def remark41_instance():
    """Product of two uniform bits versus nu, whose first coordinate is a
    uniform pair of bits (encoded 0..3 as 2*b1 + b2) and whose second
    coordinate repeats b2. c_1 compares x_1 with b1, c_2 is Hamming."""
    mu = DiscreteSpace.uniform([[0.0, 1.0], [0.0, 1.0]])
    table = np.zeros((4, 2))
    for y1 in range(4):
        table[y1, y1 % 2] = 0.25
    nu = DiscreteSpace([[0.0, 1.0, 2.0, 3.0], [0.0, 1.0]], table)
    c1 = TabulatedCost([0.0, 1.0], [0.0, 1.0, 2.0, 3.0], [[float(x != y // 2) for y in range(4)] for x in range(2)])
    return mu, nu, CostSpec(1.0, [c1, HammingCost()])


def fixture_to_json(mu, nu, cost):
    return {"mu": mu.to_json(), "nu": nu.to_json(), "cost": cost.to_json()}


def fixture_from_json(obj):
    return (
        DiscreteSpace.from_json(obj["mu"]),
        DiscreteSpace.from_json(obj["nu"]),
        CostSpec.from_json(obj["cost"]),
    )
