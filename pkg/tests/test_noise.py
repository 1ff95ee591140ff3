import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctprior.noise import (
    NoiseSpec,
    POSITIVITY_FLOOR,
    add_gaussian_noise,
    apply_noise,
    l2_fidelity,
    poisson_fidelity,
    realized_snr_db,
    sample_poisson,
)


def central_diff(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_gaussian_statistics_on_zeros():
    y = add_gaussian_noise(np.zeros(10), 0.03, seed=7)
    assert abs(y.mean()) <= 4 * 0.03 / np.sqrt(10)
    assert 0.015 <= y.std() <= 0.06


def test_gaussian_tiny_sigma_and_determinism(rs):
    f = rs.random((4, 6))
    np.testing.assert_allclose(add_gaussian_noise(f, 1e-300, 1), f, rtol=0, atol=1e-290)
    np.testing.assert_array_equal(add_gaussian_noise(f, 0.1, 3), add_gaussian_noise(f, 0.1, 3))
    assert not np.array_equal(add_gaussian_noise(f, 0.1, 3), add_gaussian_noise(f, 0.1, 4))
    with pytest.raises(ValueError):
        add_gaussian_noise(f, 0.0, 1)


def test_noise_depends_only_on_seed_and_shape():
    # the i-th variate goes to bin i regardless of the data values
    a = add_gaussian_noise(np.zeros((3, 4)), 1.0, 5)
    b = add_gaussian_noise(np.ones((3, 4)), 1.0, 5) - 1
    np.testing.assert_allclose(a, b, atol=1e-15)


def test_poisson_zero_rate_and_moments():
    assert not sample_poisson(np.zeros(50), 1).any()
    y = sample_poisson(np.full(1000, 1000.0), 2)
    assert 900 <= y.mean() <= 1100
    assert 0.8 <= y.var() / y.mean() <= 1.2
    assert np.all(y == np.round(y))
    np.testing.assert_array_equal(y, sample_poisson(np.full(1000, 1000.0), 2))


def test_poisson_rejects_negative_rates():
    with pytest.raises(ValueError):
        sample_poisson(np.array([1.0, -0.1]), 0)


def test_noise_spec_validation_and_dispatch():
    with pytest.raises(ValueError):
        NoiseSpec(kind="speckle")
    with pytest.raises(ValueError):
        NoiseSpec(sigma=0)
    f = np.full((2, 3), 5.0)
    assert np.all(apply_noise(f, NoiseSpec("poisson", seed=1)) == sample_poisson(f, 1))


def test_realized_snr():
    f = np.ones(100)
    y = f + 0.1 * np.where(np.arange(100) % 2, 1, -1)  # noise energy 1, signal energy 100
    assert realized_snr_db(f, y) == pytest.approx(20.0)
    assert realized_snr_db(f, f) == np.inf


def test_l2_hand_case():
    v, g = l2_fidelity(np.array([1.0, 2.0]), np.zeros(2))
    assert v == 2.5
    np.testing.assert_array_equal(g, [1.0, 2.0])
    v, g = l2_fidelity(np.ones(3), np.ones(3))
    assert v == 0 and not g.any()
    with pytest.raises(ValueError):
        l2_fidelity(np.ones(2), np.ones(3))


def test_poisson_hand_cases():
    v, g = poisson_fidelity(np.array([1.0]), np.array([0.0]))
    assert v == 1.0 and g[0] == 1.0
    y = np.array([0.5, 3.0, 7.0])
    v, g = poisson_fidelity(y, y)
    np.testing.assert_allclose(g, 0, atol=1e-15)


def test_poisson_floor_clamps_and_zeroes_gradient():
    v, g = poisson_fidelity(np.array([0.0, 2.0]), np.array([1.0, 1.0]))
    assert v == pytest.approx(POSITIVITY_FLOOR - np.log(POSITIVITY_FLOOR) + 2 - np.log(2))
    assert g[0] == 0 and g[1] == pytest.approx(0.5)
    with pytest.raises(ValueError):
        poisson_fidelity(np.array([0.0]), np.array([1.0]), floor=0.0)
    with pytest.raises(ValueError):
        poisson_fidelity(np.array([np.nan]), np.array([1.0]))


@pytest.mark.parametrize("instance", range(20))
def test_fidelity_gradients_match_finite_differences(instance):
    rs = np.random.default_rng(instance)
    ax = rs.uniform(0.5, 3.0, size=7)
    y = rs.uniform(0.0, 5.0, size=7)
    for fid in (l2_fidelity, poisson_fidelity):
        g = fid(ax, y)[1]
        fd = central_diff(lambda a: fid(a, y)[0], ax)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=1, max_size=10), st.integers(0, 2**31))
def test_poisson_bregman_nonnegative(ys, seed):
    y = np.array(ys)
    ax = np.random.default_rng(seed).uniform(0.01, 100.0, size=y.size)
    assert poisson_fidelity(ax, y)[0] - poisson_fidelity(y, y)[0] >= -1e-9 * (1 + np.abs(y).sum())


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=1, max_size=10))
def test_l2_nonnegative_and_zero_iff_equal(vals):
    a = np.array(vals)
    assert l2_fidelity(a, a)[0] == 0
    assert l2_fidelity(a, a + 1)[0] > 0
