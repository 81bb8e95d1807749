# # Exact costs on tiny discrete instances
#
# On a few bits everything can be computed exactly by linear programming:
# the offline optimum, the best online coupling, and the greedy coupling
# that optimally couples each round given the past.

from otx.core import CostSpec
from otx.harness import oracle_report
from otx.oracle_exact import claim42_instance, delta_function, exact_ot

# Moving a tiny mass eps between two bit strings that differ in the first
# bit is cheap offline. An online map must decide bit by bit and pays in
# every round, n times as much.

for n in (2, 4, 8):
    eps = 2.0**-n
    mu, nu = claim42_instance(n, eps)
    ot = exact_ot(mu, nu, CostSpec.hamming())[0]
    online = delta_function(mu, nu, CostSpec.hamming())
    print(f"n={n}: offline {ot:.6f}, online {online:.6f}, ratio {online / ot:.3f}")

# When the source is not a product law, greedy choices can be twice as
# expensive as the best online coupling.

print("non-product source:", oracle_report("remark40"))

# Online transport is not symmetric: one direction costs 1/2, the other 0.

print("asymmetric pair:", oracle_report("remark41"))
