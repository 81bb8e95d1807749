import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from otx.core import (
    ConfigurationError,
    CostSpec,
    HammingCost,
    InternalInconsistencyError,
    LpCost,
    RejectedInputError,
    RngStream,
    TabulatedCost,
    empirical_bound,
)
from otx.dist1d import Finite, Gaussian, Uniform
from otx.oracle_exact import DiscreteSpace
from otx.seqsampler import CostLedger, FullSpace, HalfSpace, finite_sampler, product_sampler
from otx.transporter import (
    IdentityStage,
    OnlineTransporter,
    compose,
    concentrate,
    set_transport,
    transporter_from_config,
)


def gauss_transporter(n, k, mean=0.0, **kw):
    return OnlineTransporter([Gaussian()] * n, product_sampler([Gaussian(mean, 1.0)] * n), CostSpec.lp(2), k, **kw)


def test_validation():
    with pytest.raises(RejectedInputError):
        gauss_transporter(2, 0)
    with pytest.raises(RejectedInputError):
        gauss_transporter(2, 2.5)
    with pytest.raises(ConfigurationError):
        OnlineTransporter([Gaussian()], product_sampler([Gaussian()] * 2), CostSpec.lp(2), 3)
    bits = [Finite([0.0, 1.0], [0.5, 0.5])]
    odd = CostSpec(1, [TabulatedCost([0, 1], [0, 1], [[0, 3], [1, 0]], is_metric=False)])
    with pytest.raises(ConfigurationError):
        OnlineTransporter(bits, product_sampler(bits), odd, 3)
    with pytest.raises(ConfigurationError):
        gauss_transporter(1, 3, direction="sideways")


def test_shortcut_validation():
    cube = [Finite([0.0, 1.0], [0.5, 0.5])]
    with pytest.raises(ConfigurationError):
        OnlineTransporter(cube, product_sampler(cube), CostSpec.hamming(), 3, shortcut={"source_cdf": True})
    with pytest.raises(ConfigurationError):
        set_transport([Gaussian()], FullSpace(), CostSpec.lp(2), 3, 1.0, shortcut={"target_cdf": True})


def test_k1_returns_target_draw():
    t = gauss_transporter(1, 1, mean=3.0)
    res = t.run_batch(np.zeros((20000, 1)), RngStream(1, 0))
    assert stats.kstest(res.outputs[:, 0] - 3.0, "norm").pvalue > 0.001
    # independent of the input
    res2 = t.run_batch(np.full((20000, 1), 5.0), RngStream(1, 0))
    assert np.array_equal(res.outputs, res2.outputs)


def test_same_law_cost_small():
    k = 10**4
    t = gauss_transporter(1, k)
    rng = RngStream(2, 0)
    x = Gaussian().sample(rng, 1000).reshape(-1, 1)
    res = t.run_batch(x, rng)
    assert res.totals.mean() < 4 * empirical_bound(2, k)


def test_shifted_mean():
    t = gauss_transporter(1, 1000, mean=1.0)
    rng = RngStream(3, 0)
    x = Gaussian().sample(rng, 1000).reshape(-1, 1)
    res = t.run_batch(x, rng)
    assert (res.outputs - x).mean() == pytest.approx(1.0, abs=0.15)


def test_both_cdfs_is_identity():
    t = gauss_transporter(3, 50, shortcut={"source_cdf": True, "target_cdf": True})
    rng = RngStream(4, 0)
    x = Gaussian().sample(rng, 300).reshape(-1, 3)
    res = t.run_batch(x, rng)
    assert np.array_equal(res.outputs, x)
    assert res.totals.max() == 0


@pytest.mark.parametrize("shortcut", [{"source_cdf": True}, {"target_cdf": True}])
def test_one_sided_shortcut_marginals(shortcut):
    t = gauss_transporter(2, 20, mean=1.0, shortcut=shortcut)
    rng = RngStream(5, 0)
    x = Gaussian().sample(rng, 20000).reshape(-1, 2)
    res = t.run_batch(x, rng)
    for i in range(2):
        assert stats.kstest(res.outputs[:, i] - 1.0, "norm").pvalue > 0.001
    plain = gauss_transporter(2, 20, mean=1.0).run_batch(x, RngStream(5, 1))
    # knowing one side exactly should not cost more on average
    assert res.totals.mean() <= plain.totals.mean() + 0.05


def _finite_fixture():
    g = np.random.default_rng(21)
    t = g.random((3, 3, 3)) ** 2
    return DiscreteSpace([[0.0, 1.0, 2.0]] * 3, t / t.sum())


@pytest.mark.parametrize("cost", [CostSpec.lp(1), CostSpec.hamming()])
@pytest.mark.parametrize("k", [1, 3])
def test_finite_marginal_exact(cost, k):
    space = _finite_fixture()
    source = [Finite([0.0, 1.0, 2.0], [0.2, 0.5, 0.3])] * 3
    t = OnlineTransporter(source, finite_sampler(space), cost, k)
    rng = RngStream(6, k)
    m = 30000 if cost.p == 1 and not isinstance(cost.coordinate(0), HammingCost) else 3000
    x = np.column_stack([d.sample(rng, m) for d in source])
    y = t.run_batch(x, rng).outputs
    counts = np.bincount(np.ravel_multi_index(tuple(y.T.astype(int)), space.shape), minlength=27)
    expected = m * space.table.reshape(-1)
    keep = expected > 0
    assert stats.chisquare(counts[keep], expected[keep] * counts.sum() / expected[keep].sum()).pvalue > 0.001


def test_inverse_marginal():
    space = _finite_fixture()
    source = [Finite([0.0, 1.0, 2.0], [0.2, 0.5, 0.3])] * 3
    t = OnlineTransporter(source, finite_sampler(space), CostSpec.lp(1), 4, direction="inverse")
    rng = RngStream(7, 0)
    ys = np.empty((20000, 3))
    s = finite_sampler(space)
    for i in range(3):
        ys[:, i] = s.next_batch(ys[:, :i], rng)
    x = t.run_batch(ys, rng).outputs
    for i in range(3):
        counts = np.array([(x[:, i] == v).sum() for v in (0, 1, 2)])
        assert stats.chisquare(counts, 20000 * np.array([0.2, 0.5, 0.3])).pvalue > 0.001


def test_inverse_symmetric_cost():
    t = gauss_transporter(2, 100)
    rng = RngStream(8, 0)
    x = Gaussian().sample(rng, 4000).reshape(-1, 2)
    fwd = t.run_batch(x, rng).totals
    inv = t.inverted().run_batch(x, rng).totals
    se = np.sqrt(fwd.var(ddof=1) / fwd.size + inv.var(ddof=1) / inv.size)
    assert abs(fwd.mean() - inv.mean()) <= 3 * se


def test_inverse_k1_fresh():
    t = gauss_transporter(1, 1).inverted()
    a = t.run_batch(np.zeros((5, 1)), RngStream(9, 0)).outputs
    b = t.run_batch(np.ones((5, 1)), RngStream(9, 0)).outputs
    assert np.array_equal(a, b)


def test_roundtrip_marginal():
    t = gauss_transporter(2, 10, mean=2.0)
    rng = RngStream(10, 0)
    x = Gaussian().sample(rng, 20000).reshape(-1, 2)
    y = t.run_batch(x, rng).outputs
    back = t.inverted().run_batch(y, rng).outputs
    for i in range(2):
        assert stats.kstest(back[:, i], "norm").pvalue > 0.001


def test_record_api():
    t = gauss_transporter(3, 5, mean=1.0)
    rng = RngStream(11, 0)
    rec = t.transport([0.1, -0.2, 0.3], rng)
    assert rec.x.tolist() == [0.1, -0.2, 0.3]
    assert rec.cost_sample.total == pytest.approx(float(np.sum((rec.x - rec.y) ** 2)))
    inv = t.inverse_transport(rec.y, rng)
    assert inv.y.tolist() == rec.y.tolist()
    assert inv.output is inv.x


@settings(max_examples=25)
@given(st.integers(2, 5), st.integers(0, 3), st.integers(0, 2**31))
def test_onlineness_replay(n, i, seed):
    i = min(i, n - 1)
    space_target = product_sampler([Gaussian(0.5, 1.0)] * n)
    t = OnlineTransporter([Gaussian()] * n, space_target, CostSpec.lp(2), 7)
    g = np.random.default_rng(seed)
    x = g.normal(size=(1, n))
    x2 = x.copy()
    x2[0, i + 1 :] = g.normal(size=n - i - 1)
    y = t.run_batch(x, RngStream(seed, 0)).outputs
    y2 = t.run_batch(x2, RngStream(seed, 0)).outputs
    assert np.array_equal(y[0, : i + 1], y2[0, : i + 1])


def test_onlineness_hungarian():
    cube = [Finite([0.0, 1.0], [0.5, 0.5])] * 3
    t = OnlineTransporter(cube, product_sampler([Finite([0.0, 1.0], [0.3, 0.7])] * 3), CostSpec.hamming(), 4)
    x = np.array([[0.0, 1.0, 1.0]])
    y = t.run_batch(x, RngStream(12, 0)).outputs
    x[0, 2] = 0.0
    y2 = t.run_batch(x, RngStream(12, 0)).outputs
    assert np.array_equal(y[0, :2], y2[0, :2])


def test_step_matches_batch():
    t = gauss_transporter(2, 9, mean=0.5)
    x = np.array([[0.3, -1.2]])
    y = t.run_batch(x, RngStream(13, 0)).outputs[0]
    rng = RngStream(13, 0)
    y0 = t.step(0, 0.3, [], rng)
    y1 = t.step(1, -1.2, [y0], rng)
    assert [y0, y1] == y.tolist()
    with pytest.raises(RejectedInputError):
        t.step(1, 0.0, [], rng)


def test_query_budget():
    n, k, m = 3, 6, 40
    t = gauss_transporter(n, k)
    ledger = CostLedger(n)
    t.run_batch(np.zeros((m, n)), RngStream(14, 0), ledger)
    assert ledger.calls_per_round.tolist() == [k * m] * n
    assert ledger.source_draws_per_round.tolist() == [(k - 1) * m] * n


def test_monotone_k_improvement():
    rng = RngStream(15, 0)
    x = Gaussian().sample(rng, 4000).reshape(-1, 4)
    small = gauss_transporter(4, 100, mean=1.0).run_batch(x, rng).totals
    large = gauss_transporter(4, 10**4, mean=1.0).run_batch(x[:300], rng).totals
    se = np.sqrt(small.var(ddof=1) / small.size + large.var(ddof=1) / large.size)
    assert large.mean() <= small.mean() + 3 * se


def test_bottom_from_target():
    space = DiscreteSpace([[0.0, 1.0], [0.0, 1.0]], [[0.0, 0.0], [0.5, 0.5]])
    t = OnlineTransporter([Finite([0.0, 1.0], [0.5, 0.5])] * 2, finite_sampler(space), CostSpec.lp(1), 2)
    with pytest.raises(InternalInconsistencyError):
        t._forward_round(1, np.array([0.0]), np.array([[0.0]]), RngStream(0, 0), None)


def test_config_roundtrip():
    t = set_transport([Gaussian()] * 3, HalfSpace.gaussian(3, 0.2), CostSpec.lp(2), 8, 0.2)
    cfg = json.loads(json.dumps(t.to_config()))
    t2 = transporter_from_config(cfg)
    assert t2.to_config() == t.to_config()
    x = np.zeros((5, 3))
    assert np.array_equal(t.run_batch(x, RngStream(1, 1)).outputs, t2.run_batch(x, RngStream(1, 1)).outputs)


def test_config_errors():
    with pytest.raises(ConfigurationError):
        transporter_from_config({"k": 3})
    cfg = gauss_transporter(2, 3).to_config()
    cfg["n"] = 5
    with pytest.raises(ConfigurationError):
        transporter_from_config(cfg)
    cfg["n"], cfg["target"] = 2, {"kind": "mystery"}
    with pytest.raises(ConfigurationError):
        transporter_from_config(cfg)


def test_compose_identity():
    law = gauss_transporter(2, 3).source_law
    stage = compose(IdentityStage(law, 2, CostSpec.lp(2)), IdentityStage(law, 2, CostSpec.lp(2)))
    res = stage.run_batch(np.ones((4, 2)), RngStream(0, 0))
    assert np.array_equal(res.outputs, np.ones((4, 2)))
    assert res.totals.max() == 0


def test_compose_mismatch():
    a = gauss_transporter(2, 3, mean=1.0)
    with pytest.raises(ConfigurationError):
        compose(a, a)
    # a's output law is N(1, 1); its inverse takes that law back
    stage = compose(a, a.inverted())
    res = stage.run_batch(np.zeros((3, 2)), RngStream(0, 0))
    assert len(res.stages) == 2


def test_set_transport_membership():
    S = HalfSpace.gaussian(4, 0.1)
    t = set_transport([Gaussian()] * 4, S, CostSpec.lp(2), 50, 0.1)
    rng = RngStream(16, 0)
    res = t.run_batch(Gaussian().sample(rng, 800).reshape(-1, 4), rng)
    assert S.contains_many(res.outputs).all()


def test_set_transport_full_space_is_plain():
    rng = RngStream(17, 0)
    x = Gaussian().sample(rng, 40).reshape(-1, 2)
    t = set_transport([Gaussian()] * 2, FullSpace(), CostSpec.lp(2), 5, 1.0)
    res = t.run_batch(x, RngStream(1, 0))
    assert res.outputs.shape == x.shape
    assert res.ledger.membership_queries == 20 * 5 * 2


def test_concentrate_near_identity():
    rng = RngStream(18, 0)
    S = HalfSpace.gaussian(2, 0.999)
    dists = []
    for _ in range(50):
        x = Gaussian().sample(rng, 2)
        y, d = concentrate([Gaussian()] * 2, S, CostSpec.lp(2), 400, 0.999, x, rng, {"source_cdf": True})
        assert S.contains(y)
        dists.append(d)
    assert np.median(dists) < 0.1


def test_uniform_source():
    t = OnlineTransporter([Uniform(0, 1)], product_sampler([Uniform(0, 2)]), CostSpec(1, [LpCost(1)]), 200)
    rng = RngStream(19, 0)
    res = t.run_batch(rng.uniform((5000, 1)), rng)
    assert stats.kstest(res.outputs[:, 0] / 2, "uniform").pvalue > 0.001
