# # Moving typical points into a small set
#
# A set transport maps the Gaussian onto the Gaussian conditioned on a set S
# of measure eps. Typical points then land in S at distance about
# sqrt(2 ln 1/eps), independent of the dimension. Reductions carry the same
# construction to the unit cube and to the sphere.

import math

import numpy as np

from otx import CostSpec, Gaussian, HalfSpace, RngStream, set_transport
from otx.reductions import (
    apply_reduction,
    cube_gauss_reduction,
    cube_halfspace,
    gaussian_inner,
    outside_ball_inner,
    sphere_gauss_reduction,
    sphere_set_transport_cost_bound,
)

n, eps, k = 16, 0.1, 500
rng = RngStream(3, 0)
S = HalfSpace.gaussian(n, eps)
t = set_transport([Gaussian()] * n, S, CostSpec.lp(2), k, eps)
x = Gaussian().sample(rng, 200 * n).reshape(-1, n)
res = t.run_batch(x, rng)
d = np.sqrt(res.totals)
print(f"Gaussian: all in S {S.contains_many(res.outputs).all()}, mean distance {d.mean():.3f}, sqrt(2 ln 1/eps) {math.sqrt(2 * math.log(1 / eps)):.3f}")
print(f"  80% of points moved at most {np.quantile(d, 0.8):.3f}; mean queries per point {res.ledger.membership_queries / 200:.0f}")

# On the cube the coordinatewise normal CDF is a 1-Lipschitz bridge.

r = cube_gauss_reduction(8)
C = cube_halfspace(8, eps)
X = r.sample_source(rng, 200)
Y, _ = apply_reduction(r, gaussian_inner(8, CostSpec.lp(2), k), C, X, rng, eps)
print(f"cube: all in S {C.contains_many(Y).all()}, mean squared distance {np.mean(np.sum((Y - X) ** 2, axis=1)):.3f} (2 ln 1/eps = {2 * math.log(1 / eps):.3f})")

# On the sphere of radius sqrt(n) a radial projection from outside the ball
# is the bridge, and the inner transport runs on the Gaussian outside it.

r = sphere_gauss_reduction(n)
X = r.sample_source(rng, 100)
Y, _ = apply_reduction(r, outside_ball_inner(n, CostSpec.lp(2), 200), S, X, rng, eps)
print(f"sphere: all in S {S.contains_many(Y).all()}, mean distance {np.mean(np.linalg.norm(Y - X, axis=1)):.3f} (bound {sphere_set_transport_cost_bound(eps):.3f})")
