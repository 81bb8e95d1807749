"""Random small instances shared by the oracle and acceptance tests."""

import numpy as np

from otx.core import CostSpec, HammingCost, LpCost, TabulatedCost
from otx.oracle_exact import DiscreteSpace


def random_alphabet(g, size):
    return np.sort(g.choice(np.arange(-5, 6), size=size, replace=False)).astype(float)


def random_instance(g, n=None, max_alphabet=4, cost_kind="random"):
    """Product mu, arbitrary nu (with some zero cells), per-coordinate costs."""
    n = int(g.integers(1, 4)) if n is None else n
    a = [int(g.integers(2, max_alphabet + 1)) for _ in range(n)]
    b = [int(g.integers(2, max_alphabet + 1)) for _ in range(n)]
    ma = [random_alphabet(g, s) for s in a]
    na = [random_alphabet(g, s) for s in b]
    marginals = []
    for s, alpha in zip(a, ma):
        p = g.random(s) + 0.05
        marginals.append((alpha, p / p.sum()))
    mu = DiscreteSpace.product(marginals)
    table = g.random(tuple(b)) * (g.random(tuple(b)) > 0.3)
    table.flat[int(g.integers(table.size))] += 0.5
    nu = DiscreteSpace(na, table / table.sum())
    costs = []
    for i in range(n):
        kind = cost_kind if cost_kind != "mixed" else g.choice(["random", "lp", "hamming"])
        if kind == "random":
            costs.append(TabulatedCost(ma[i], na[i], g.integers(0, 5, size=(a[i], b[i])).astype(float)))
        elif kind == "lp":
            costs.append(LpCost(float(g.choice([1.0, 2.0, 3.0]))))
        else:
            costs.append(HammingCost())
    return mu, nu, CostSpec(1.0, costs)
