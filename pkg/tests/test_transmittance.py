import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from usocc.geometry import Ray
from usocc.phantom import features, vertebra_phantom
from usocc.transmittance import transmittance_along, transmittance_at

RAY = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]), 1.0)


def constant_field(alpha, beta=0.0):
    return lambda p: np.tile([alpha, beta, 0.0], (len(p), 1))


def slab_field(lo, hi, alpha):
    def field(p):
        out = np.zeros((len(p), 3))
        out[(p[:, 2] > lo) & (p[:, 2] < hi), 0] = alpha
        return out
    return field


def test_empty_field_keeps_t0():
    prof = transmittance_along(RAY, constant_field(0.0), 0.01, t0=0.7)
    np.testing.assert_array_equal(prof.values, 0.7)


@pytest.mark.parametrize("a", [0.5, 2.0, 8.0])
def test_constant_attenuation_matches_exponential(a):
    prof = transmittance_along(RAY, constant_field(a), 1e-3, epsilon=0.0)
    exact = np.exp(-a * prof.depths)
    assert np.max(np.abs(prof.values - exact) / exact) < 1e-3


def test_beta_enters_like_alpha():
    a = transmittance_along(RAY, constant_field(1.0, 0.0), 1e-2, epsilon=0.0)
    b = transmittance_along(RAY, constant_field(0.0, 1.0), 1e-2, epsilon=0.0)
    np.testing.assert_allclose(a.values, b.values)


def test_slab_transmittance():
    a, lo, hi = 3.0, 0.3, 0.55
    prof = transmittance_along(RAY, slab_field(lo, hi, a), 1e-3, epsilon=0.0)
    beyond = prof.depths > hi + 1e-3
    expected = np.exp(-a * (hi - lo))
    assert np.max(np.abs(prof.values[beyond] - expected) / expected) < 1e-3
    assert np.all(prof.values[prof.depths <= lo] == 1.0)


def test_epsilon_excludes_own_cell():
    prof = transmittance_along(RAY, constant_field(2.0), 0.01)  # eps = one step
    np.testing.assert_allclose(prof.values[1:], np.exp(-2.0 * (prof.depths[1:] - 0.01)))
    assert prof.values[0] == 1.0


def test_trapezoid_quadrature_constant_field():
    prof = transmittance_along(RAY, constant_field(1.5), 1e-2, epsilon=0.0, quadrature="trapezoid")
    np.testing.assert_allclose(prof.values, np.exp(-1.5 * prof.depths), rtol=1e-12)


def test_partial_last_cell():
    ray = Ray(np.zeros(3), np.array([0.0, 0.0, 1.0]), 0.1234)
    prof = transmittance_along(ray, constant_field(1.0), 0.01, epsilon=0.0)
    assert prof.depths[-1] == 0.1234
    np.testing.assert_allclose(prof.values[-1], np.exp(-0.1234))


def test_argument_checks():
    with pytest.raises(ValueError):
        transmittance_along(RAY, constant_field(1.0), 0.0)
    with pytest.raises(ValueError):
        transmittance_along(RAY, constant_field(1.0), 0.01, epsilon=0.05)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_for_nonnegative_fields(seed):
    r = np.random.default_rng(seed)
    d = r.normal(size=3)
    d /= np.linalg.norm(d)
    ray = Ray(r.random(3), d, 1.0)
    ph = vertebra_phantom("A")
    prof = transmittance_along(ray, lambda p: features(ph, p, seed), 1e-2)
    assert np.all(np.diff(prof.values) <= 0)
    assert prof.values[0] <= prof.t0 and prof.values.min() >= 0


def test_composition_constant_field():
    a, b = 0.37, 0.41
    f = constant_field(1.7, 0.3)
    whole = transmittance_along(Ray(np.zeros(3), RAY.direction, a + b), f, 1e-3, 0.0, t0=0.8)
    first = transmittance_along(Ray(np.zeros(3), RAY.direction, a), f, 1e-3, 0.0, t0=0.8)
    second = transmittance_along(Ray(np.array([0, 0, a]), RAY.direction, b), f, 1e-3, 0.0, t0=0.8)
    lhs = transmittance_at(a + b, whole)
    rhs = transmittance_at(a, first) * transmittance_at(b, second) / 0.8
    assert abs(lhs - rhs) < 1e-6


def test_reflector_casts_shadow():
    def field(p):
        out = np.zeros((len(p), 3))
        out[:, 0] = 0.3
        out[(p[:, 2] > 0.4) & (p[:, 2] < 0.5), :2] = [30.0, 1.0]
        return out
    prof = transmittance_along(RAY, field, 1e-3)
    assert transmittance_at(0.3, prof) > 0.5
    assert transmittance_at(0.7, prof) < 0.05


def test_lookup_nodes_midpoints_and_range():
    prof = transmittance_along(RAY, constant_field(1.0), 0.1, epsilon=0.0)
    assert transmittance_at(0.3, prof) == prof.values[3]
    assert transmittance_at(0.35, prof) == pytest.approx(0.5 * (prof.values[3] + prof.values[4]))
    with pytest.raises(ValueError):
        transmittance_at(1.5, prof)
    with pytest.raises(ValueError):
        transmittance_at(-0.1, prof)


def test_lookup_matches_recomputation(rng):
    ph = vertebra_phantom("A")
    ray = Ray(np.array([0.5, 0.45, 0.0]), np.array([0, 0, 1.0]), 1.0)
    f = lambda p: features(ph, p, 0)  # noqa: E731
    step = 1e-3
    dense = transmittance_along(ray, f, step, epsilon=step)
    for d in rng.uniform(0, 1.0, 50):
        # recompute with a ray ending exactly at d, same quadrature nodes
        k = int(np.floor(d / step))
        direct = transmittance_along(Ray(ray.origin, ray.direction, d), f, step, epsilon=step)
        assert abs(transmittance_at(d, dense) - direct.values[-1]) < 1e-4
