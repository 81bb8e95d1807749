import json

import numpy as np
import pytest
from _instances import random_instance

from otx.core import CostSpec, HammingCost, LpCost, RejectedInputError, TabulatedCost
from otx.oracle_exact import (
    DiscreteCoupling,
    DiscreteSpace,
    claim42_instance,
    cost_matrix,
    delta_function,
    deterministic_online_optimum,
    exact_ot,
    fixture_from_json,
    fixture_to_json,
    greedy_coupling,
    lambda_function,
    online_coupling_optimum,
    online_transport_optimum,
    ot_discrete_1d,
    remark40_instance,
    remark41_instance,
)
from otx.ot1d import linear_assignment


def test_space_validation():
    with pytest.raises(RejectedInputError):
        DiscreteSpace([[0, 1]], [0.5, 0.6])
    with pytest.raises(RejectedInputError):
        DiscreteSpace([[0, 0]], [0.5, 0.5])
    with pytest.raises(RejectedInputError):
        DiscreteSpace([[0, 1]] * 21, np.full((2,) * 21, 2.0**-21))


def test_space_json_roundtrip():
    mu, nu = claim42_instance(3, 0.05)
    back = DiscreteSpace.from_json(json.loads(json.dumps(nu.to_json())))
    assert np.array_equal(back.table, nu.table)


def test_exact_ot_identity():
    mu, _ = claim42_instance(3, 0.0)
    value, pi = exact_ot(mu, mu, CostSpec.hamming())
    assert value == pytest.approx(0, abs=1e-12)
    assert pi.check()


def test_claim42_n3():
    mu, nu = claim42_instance(3, 2.0**-3)
    assert exact_ot(mu, nu, CostSpec.hamming())[0] == pytest.approx(0.125, abs=1e-10)
    assert delta_function(mu, nu, CostSpec.hamming()) == pytest.approx(0.375, abs=1e-10)


def test_claim42_zero_epsilon():
    mu, nu = claim42_instance(4, 0.0)
    assert np.array_equal(mu.table, nu.table)
    assert delta_function(mu, nu, CostSpec.hamming()) == 0


@pytest.mark.parametrize("n", range(1, 11))
def test_claim42_masses(n):
    for eps in (0.0, 2.0**-n / 3, 2.0**-n):
        _, nu = claim42_instance(n, eps)
        assert nu.table.sum() == pytest.approx(1, abs=1e-12)


def test_claim42_rejects():
    with pytest.raises(RejectedInputError):
        claim42_instance(3, 0.2)
    with pytest.raises(RejectedInputError):
        claim42_instance(11, 0.0)


def test_exact_ot_matches_assignment():
    # uniform 4-point laws: the transport LP reduces to an assignment problem
    g = np.random.default_rng(12)
    for _ in range(20):
        xs, ys = np.sort(g.choice(20, 4, replace=False)), np.sort(g.choice(20, 4, replace=False))
        mu = DiscreteSpace.uniform([xs])
        nu = DiscreteSpace.uniform([ys])
        c = TabulatedCost(xs, ys, g.random((4, 4)))
        spec = CostSpec(1, [c])
        C = cost_matrix(mu, nu, spec)
        col = linear_assignment(C)
        assert exact_ot(mu, nu, spec)[0] == pytest.approx(C[np.arange(4), col].sum() / 4, abs=1e-9)


def test_ot_discrete_1d_paths_agree():
    g = np.random.default_rng(5)
    for _ in range(50):
        xv, yv = np.sort(g.choice(10, 3, replace=False)), np.sort(g.choice(10, 4, replace=False))
        p, q = g.dirichlet(np.ones(3)), g.dirichlet(np.ones(4))
        for c in (LpCost(1), LpCost(2), HammingCost()):
            tab = TabulatedCost(xv, yv, c.pairwise(xv.astype(float), yv.astype(float)))
            v1, P = ot_discrete_1d(xv, p, yv, q, c, plan=True)
            v2 = ot_discrete_1d(xv, p, yv, q, tab)
            assert v1 == pytest.approx(v2, abs=1e-9)
            assert np.allclose(P.sum(1), p) and np.allclose(P.sum(0), q)


def test_delta_requires_product():
    mu, nu, cost = remark40_instance()
    with pytest.raises(RejectedInputError):
        delta_function(mu, nu, cost)


def test_delta_identity():
    g = np.random.default_rng(1)
    mu, _, cost = random_instance(g, n=2)
    assert delta_function(mu, mu, CostSpec.lp(1)) == pytest.approx(0, abs=1e-12)


def test_greedy_equals_delta_random():
    g = np.random.default_rng(2024)
    for _ in range(30):
        mu, nu, cost = random_instance(g, cost_kind="mixed")
        value, pi = greedy_coupling(mu, nu, cost)
        assert pi.check()
        assert value == pytest.approx(delta_function(mu, nu, cost), abs=1e-10)


def test_greedy_hamming_identity():
    mu, _ = claim42_instance(3, 0.0)
    value, pi = greedy_coupling(mu, mu, CostSpec.hamming())
    assert value == pytest.approx(0, abs=1e-12)


def test_remark40():
    mu, nu, cost = remark40_instance()
    assert greedy_coupling(mu, nu, cost)[0] == pytest.approx(2.0, abs=1e-10)
    assert online_coupling_optimum(mu, nu, cost) == pytest.approx(1.0, abs=1e-9)


def test_remark41():
    mu, nu, cost = remark41_instance()
    assert online_coupling_optimum(mu, nu, cost) == pytest.approx(0.5, abs=1e-9)
    assert online_transport_optimum(mu, nu, cost) == pytest.approx(0.5, abs=1e-9)
    back = cost.transposed()
    assert online_transport_optimum(nu, mu, back) == pytest.approx(0.0, abs=1e-9)
    assert deterministic_online_optimum(nu, mu, back) == 0.0


def test_online_transport_bounds():
    # offline <= online transport <= online coupling
    g = np.random.default_rng(77)
    for _ in range(15):
        mu, nu, cost = random_instance(g, n=2, max_alphabet=3)
        off = exact_ot(mu, nu, cost)[0]
        ont = online_transport_optimum(mu, nu, cost)
        onc = online_coupling_optimum(mu, nu, cost)
        assert off <= ont + 1e-9 and ont <= onc + 1e-9
        # product source: all online notions meet the Delta function
        assert ont == pytest.approx(delta_function(mu, nu, cost), abs=1e-8)


def test_lambda_bounds():
    g = np.random.default_rng(8)
    for _ in range(10):
        mu, nu, cost = random_instance(g, n=2, max_alphabet=3)
        C = cost_matrix(mu, nu, cost)
        for _ in range(20):
            joint = g.random((mu.size, nu.size))
            # Sinkhorn-balance onto the marginals
            joint[:, nu.probs() == 0] = 0
            for _ in range(500):
                joint *= (mu.probs() / joint.sum(1))[:, None]
                cols = joint.sum(0)
                joint *= np.divide(nu.probs(), cols, out=np.zeros_like(cols), where=cols > 0)[None, :]
            pi = DiscreteCoupling(mu, nu, joint)
            assert lambda_function(pi, cost) <= float(np.sum(joint * C)) + 1e-10
        value, pi = greedy_coupling(mu, nu, cost)
        assert lambda_function(pi, cost) == pytest.approx(value, abs=1e-10)


def test_lambda_identity():
    mu, _ = claim42_instance(2, 0.0)
    pi = DiscreteCoupling(mu, mu, np.diag(mu.probs()))
    assert lambda_function(pi, CostSpec.hamming()) == pytest.approx(0, abs=1e-12)


def test_online_lp_scale_limit():
    mu, nu = claim42_instance(4, 0.01)
    with pytest.raises(RejectedInputError):
        online_coupling_optimum(mu, nu, CostSpec.hamming())


def test_fixture_json_roundtrip():
    mu, nu, cost = remark41_instance()
    mu2, nu2, cost2 = fixture_from_json(json.loads(json.dumps(fixture_to_json(mu, nu, cost))))
    assert online_coupling_optimum(mu2, nu2, cost2) == pytest.approx(0.5, abs=1e-9)
