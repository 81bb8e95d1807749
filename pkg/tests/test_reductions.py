import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from otx.core import CostSpec, RejectedInputError
from otx.reductions import (
    SPHERE_CONSTANT,
    apply_reduction,
    cube_gauss_reduction,
    cube_halfspace,
    gaussian_inner,
    outside_ball_inner,
    outside_ball_probability,
    rescale,
    sample_radius,
    sphere_gauss_reduction,
    sphere_set_transport_cost_bound,
    spherical_distance,
    uniform_sphere,
)
from otx.seqsampler import FullSpace, HalfSpace


def conditioned_radius_cdf(n):
    root = math.sqrt(n)
    tail = stats.chi.sf(root, n)
    return lambda r: np.clip((stats.chi.cdf(r, n) - stats.chi.cdf(root, n)) / tail, 0, 1)


def test_cube_g_origin():
    r = cube_gauss_reduction(5)
    assert r.backward(np.zeros(5)).tolist() == [[0.5] * 5]
    assert r.lipschitz_alpha == 1.0 and r.online_flag


def test_cube_roundtrip(rng):
    r = cube_gauss_reduction(3)
    y = rng.generator.normal(size=(1000, 3)) * 2
    assert np.allclose(r.forward(r.backward(y), rng), y, atol=1e-8)


def test_cube_rejects_outside():
    r = cube_gauss_reduction(2)
    with pytest.raises(RejectedInputError):
        r.forward([[0.5, 1.0]], None)
    with pytest.raises(RejectedInputError):
        r.forward([[0.5, 0.2, 0.1]], None)
    with pytest.raises(RejectedInputError):
        cube_gauss_reduction(0)


def test_cube_lipschitz(rng):
    a, b = rng.generator.normal(size=(2, 10**4)) * 3
    r = cube_gauss_reduction(1)
    ga, gb = r.backward(a[:, None])[:, 0], r.backward(b[:, None])[:, 0]
    assert np.all(np.abs(ga - gb) <= np.abs(a - b))


def test_cube_pushforward(rng):
    r = cube_gauss_reduction(2)
    u = r.sample_source(rng, 20000)
    z = r.forward(u, rng)
    for i in range(2):
        assert stats.kstest(z[:, i], "norm").pvalue > 0.001
    back = r.backward(rng.generator.normal(size=(20000, 2)))
    for i in range(2):
        assert stats.kstest(back[:, i], "uniform").pvalue > 0.001


def test_sphere_g_example():
    r = sphere_gauss_reduction(4)
    assert np.allclose(r.backward([2.0, 2.0, 2.0, 2.0]), [[1.0, 1.0, 1.0, 1.0]])


def test_sphere_g_rejects_inside():
    r = sphere_gauss_reduction(4)
    with pytest.raises(RejectedInputError):
        r.backward([[0.5, 0.5, 0.5, 0.5]])


def test_sphere_contraction(rng):
    n = 6
    r = sphere_gauss_reduction(n)
    z = rng.generator.normal(size=(2, 10**4, n))
    z = rescale(z.reshape(-1, n), math.sqrt(n) * (1 + rng.uniform(2 * 10**4) * 3)).reshape(2, -1, n)
    gx, gy = r.backward(z[0]), r.backward(z[1])
    assert np.all(np.linalg.norm(gx - gy, axis=1) <= np.linalg.norm(z[0] - z[1], axis=1) * (1 + 1e-12))


def test_spherical_distance_bound(rng):
    n = 5
    z, w = uniform_sphere(n, rng, 10**4), uniform_sphere(n, rng, 10**4)
    s = spherical_distance(z, w)
    assert np.all(s <= math.pi * np.linalg.norm(z - w, axis=1))
    # antipodes: geodesic pi sqrt(n), chord 2 sqrt(n)
    assert spherical_distance(z[0], -z[0]) == pytest.approx(math.pi * math.sqrt(n))
    assert spherical_distance(z[0], z[0]) == 0.0


def test_radius_law(rng):
    for n in (1, 4, 16):
        radii, trials = sample_radius(n, rng, 20000)
        assert radii.min() >= math.sqrt(n)
        assert stats.kstest(radii, conditioned_radius_cdf(n)).pvalue > 0.001
        assert 20000 / trials == pytest.approx(outside_ball_probability(n), abs=0.02)


def test_sphere_pushforward(rng):
    n = 8
    r = sphere_gauss_reduction(n)
    x = r.sample_source(rng, 20000)
    assert np.allclose(np.linalg.norm(x, axis=1), math.sqrt(n))
    z = r.forward(x, rng)
    assert stats.kstest(np.linalg.norm(z, axis=1), conditioned_radius_cdf(n)).pvalue > 0.001
    u = z / np.linalg.norm(z, axis=1, keepdims=True)
    assert np.all(np.abs(u.mean(axis=0)) < 0.03)
    assert np.allclose(u.var(axis=0), 1 / n, atol=0.01)
    assert np.allclose(r.backward(z), x)


def test_outside_ball_probability():
    assert outside_ball_probability(1) == pytest.approx(2 * stats.norm.sf(1.0), rel=1e-12)
    values = [outside_ball_probability(n) for n in (1, 2, 4, 16, 256, 4096)]
    assert all(v > 0.31 for v in values)
    assert values[-1] == pytest.approx(0.5, abs=0.01)


def test_sphere_bound_values():
    assert sphere_set_transport_cost_bound(1.0) == SPHERE_CONSTANT
    assert sphere_set_transport_cost_bound(math.exp(-2)) == pytest.approx(3.52)
    with pytest.raises(RejectedInputError):
        sphere_set_transport_cost_bound(0.0)


@given(st.lists(st.floats(-4, 4), min_size=3, max_size=3), st.lists(st.floats(-4, 4), min_size=3, max_size=3))
def test_sphere_pi_composite(a, b):
    # the chain sphere -> l2 -> spherical distance carries alpha = pi * 1
    a, b = np.array(a), np.array(b)
    if np.linalg.norm(a) < 1e-3 or np.linalg.norm(b) < 1e-3:
        return
    z, w = rescale(np.stack([a, b]), math.sqrt(3))
    assert spherical_distance(z, w) <= math.pi * np.linalg.norm(z - w) + 1e-9


def test_apply_cube_full_space_near_identity(rng):
    n = 3
    r = cube_gauss_reduction(n)
    inner = gaussian_inner(n, CostSpec.lp(2), 64, {"source_cdf": True})
    X = r.sample_source(rng, 200)
    out, res = apply_reduction(r, inner, FullSpace(), X, rng, 1.0)
    assert out.shape == X.shape
    assert np.mean(np.sum((out - X) ** 2, axis=1)) < 0.01


def test_apply_cube_halfspace(rng):
    n, eps = 4, 0.1
    r = cube_gauss_reduction(n)
    S = cube_halfspace(n, eps)
    inner = gaussian_inner(n, CostSpec.lp(2), 200)
    X = r.sample_source(rng, 300)
    out, _ = apply_reduction(r, inner, S, X, rng, eps)
    assert S.contains_many(out).all()
    cost = np.sum((out - X) ** 2, axis=1)
    assert cost.mean() <= 2 * math.log(1 / eps) + 3 * cost.std(ddof=1) / math.sqrt(cost.size)


def test_spherical_distance_matches_arccos(rng):
    z, w = uniform_sphere(7, rng, 1000), uniform_sphere(7, rng, 1000)
    ref = math.sqrt(7) * np.arccos(np.clip(np.sum(z * w, axis=1) / 7, -1, 1))
    assert np.allclose(spherical_distance(z, w), ref, atol=1e-9)


def test_apply_sphere_halfspace(rng):
    n, eps = 6, 0.2
    r = sphere_gauss_reduction(n)
    S = HalfSpace.gaussian(n, eps)
    inner = outside_ball_inner(n, CostSpec.lp(2), 50)
    X = r.sample_source(rng, 100)
    out, res = apply_reduction(r, inner, S, X, rng, eps)
    assert S.contains_many(out).all()
    assert np.allclose(np.linalg.norm(out, axis=1), math.sqrt(n))
    assert len(res.stages) == 2
