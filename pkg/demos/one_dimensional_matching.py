# # Matching two samples on the line
#
# For a convex cost such as |a - b|^p the cheapest way to pair two equal-size
# samples is to sort both and pair them in order. For a cost like Hamming
# distance sorting is no longer enough and an assignment solver is needed.

import numpy as np

from otx import CostSpec, Gaussian, HammingCost, LpCost, RngStream
from otx.ot1d import cdf_transport, empirical_transport_cost, hungarian_match, monotone_match

rng = RngStream(1, 0)
g = rng.generator

# Sorted matching and the assignment solver agree on convex costs.

X = g.normal(size=7) * 2
Y = g.normal(size=7) * 2
for c in (LpCost(1), LpCost(2), LpCost(3)):
    print(f"|a-b|^{c.p:g}: sorted {monotone_match(X, Y, c).total_cost:.6g}, assignment {hungarian_match(X, Y, c).total_cost:.6g}")

# With Hamming cost the solver finds the exact-equality pairs, which the
# sorted pairing can miss.

X, Y = np.array([0.0, 1.0, 5.0]), np.array([1.0, 2.0, 6.0])
h = HammingCost()
print("hamming: sorted", monotone_match(X, Y, h).total_cost, "assignment", hungarian_match(X, Y, h).total_cost)

# When both laws are known the quantile map couples them exactly. Pushing
# N(0, 1) onto N(3, 2) is the affine map x -> 3 + 2x.

x = Gaussian().sample(rng, 5)
print("quantile map:", np.round(cdf_transport(x, Gaussian(), Gaussian(3.0, 2.0), rng), 6))
print("affine      :", np.round(3 + 2 * x, 6))

# The empirical transport cost measures how far a k-sample is from its own
# law. For squared distance it falls a little faster than 1/k.

cost = CostSpec.lp(2).coordinate(0)
for k in (100, 400, 1600):
    mean, se = empirical_transport_cost(Gaussian(), k, cost, 400, rng.substream(k))
    print(f"k={k:5d}: mean {mean:.5f} +- {se:.5f}")
