import numpy as np
import pytest

from explainet import lil
from explainet.ops import softmax
from gradcheck import numerical_grad, rel_err

rng = np.random.default_rng(8151623)


def test_zero_fixed_point():
    np.testing.assert_array_equal(lil.lil_forward(np.zeros(2)), np.zeros(2))


def test_singleton_doubles():
    for c in (-3.0, 0.5, 4.0):
        np.testing.assert_allclose(lil.lil_forward(np.array([c])), [2 * c])


def test_closed_form_two_neurons():
    a = np.array([np.log(3), 0.0])
    z = lil.lil_forward(a)
    np.testing.assert_allclose(z, [1.75 * np.log(3), 0.0], atol=1e-12)


def test_sign_and_magnitude_envelope():
    for _ in range(200):
        a = rng.uniform(-6, 6, size=rng.integers(2, 20))
        z = lil.lil_forward(a)
        assert np.all(np.sign(z) == np.sign(a))
        assert np.all(np.abs(z) >= np.abs(a) - 1e-12)
        assert np.all(np.abs(z) <= 2 * np.abs(a) + 1e-12)


def test_jacobian_at_zero():
    np.testing.assert_allclose(lil.lil_jacobian(np.zeros(2)), np.diag([1.5, 1.5]))


def test_jacobian_equal_pair():
    # two equal activations: diagonal entry is 1.5 + 0.25 * a_i
    jac = lil.lil_jacobian(np.array([2.0, 2.0]))
    assert abs(jac[0, 0] - 2.0) < 1e-12
    assert abs(jac[1, 1] - 2.0) < 1e-12


@pytest.mark.parametrize("length", [2, 8, 16, 64])
def test_jacobian_matches_finite_differences(length):
    for _ in range(5):
        a = rng.uniform(-6, 6, size=length)
        jac = lil.lil_jacobian(a)
        num = np.zeros_like(jac)
        for i in range(length):
            def zi(av, i=i):
                return float(lil.lil_forward(av)[i])
            num[i] = numerical_grad(zi, a)
        assert rel_err(jac, num) < 1e-6


def test_backward_is_jacobian_transpose():
    a = rng.uniform(-6, 6, size=12)
    u = rng.normal(size=12)
    grad = lil.lil_backward(u, a)
    np.testing.assert_allclose(grad, lil.lil_jacobian(a).T @ u, atol=1e-10)


def test_amplification_factors_corollary():
    # equal activations give softmax 0.5 each: beta = 1.5 - 0.25a, gamma = 1.5 + 0.25a
    for ai in (-6.0, -2.0, 0.0, 2.0, 6.0):
        a = np.array([ai, ai])
        assert abs(lil.amplification_factors(a, 0, 1) - (1.5 - 0.25 * ai)) < 1e-12
        assert abs(lil.amplification_factors(a, 0, 0) - (1.5 + 0.25 * ai)) < 1e-12


def test_amplification_zero_activation():
    a = np.array([0.0, 1.0, -2.0])
    s = softmax(a)
    assert abs(lil.amplification_factors(a, 0, 1) - (1 + s[0])) < 1e-12
    assert abs(lil.amplification_factors(a, 0, 0) - (1 + s[0])) < 1e-12


def test_amplification_winner_limit():
    a = np.array([20.0, 0.0])
    assert abs(lil.amplification_factors(a, 0, 1) - 2.0) < 1e-6
    assert abs(lil.amplification_factors(a, 0, 0) - 2.0) < 1e-6


def test_positivity_inside_clip_range():
    # On two-neuron inputs with both entries in (-6, 6), beta is strictly
    # positive (it hits exactly zero at the closed corner a = [6, 6],
    # where 1.5 - 0.25*6 = 0).  gamma is strictly positive whenever the
    # diagonal activation is nonnegative; for strongly negative pairs it
    # can dip below zero (see the counterexample below), so positivity is
    # asserted only where it actually holds.
    grid = np.linspace(-5.99, 5.99, 61)
    for ai in grid:
        for aj in grid:
            a = np.array([ai, aj])
            assert lil.amplification_factors(a, 0, 1) > 0
            if ai >= 0:
                assert lil.amplification_factors(a, 0, 0) > 0


def test_gamma_negative_for_deep_double_negative_pair():
    # 1 + s_0 + a_0*s_0*(1-s_0) at a = (-5.99, -5.79): s_0 = 0.45, so the
    # a_0 term (-1.48) outweighs 1 + s_0 = 1.45
    a = np.array([-5.99, -5.79])
    assert lil.amplification_factors(a, 0, 0) < 0


def test_clipping_constant_outside_range():
    cfg = lil.LilConfig(clip_input=True)
    a = np.array([10.0, -9.0, 1.0])
    b = np.array([7.0, -20.0, 1.0])
    np.testing.assert_allclose(lil.lil_forward(a, cfg), lil.lil_forward(b, cfg))
    grad = lil.lil_backward(np.ones(3), a, cfg)
    assert grad[0] == 0.0 and grad[1] == 0.0 and grad[2] != 0.0


def test_clip_config_requires_symmetric_range():
    with pytest.raises(ValueError):
        lil.LilConfig(clip_input=True, clip_range=(-2.0, 6.0))


def test_batched_forward_backward_shapes():
    a = rng.normal(size=(2, 4, 4, 8))
    z = lil.lil_forward(a)
    assert z.shape == a.shape
    g = lil.lil_backward(np.ones_like(a), a)
    assert g.shape == a.shape
    # per-hypercolumn independence: matches the vector path
    np.testing.assert_allclose(z[1, 2, 3], lil.lil_forward(a[1, 2, 3]))
