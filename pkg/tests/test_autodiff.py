import numpy as np
import pytest

from ctprior import autodiff as ad
from ctprior.autodiff import Tensor

from gradcheck import check_op

TOL = 1e-4


def away_from_zero(rs, shape, margin=0.05):
    x = rs.standard_normal(shape)
    return np.where(np.abs(x) < margin, margin * np.sign(x + 1e-30) + x, x)


def test_conv2d_matches_direct_loops(rs):
    x = rs.standard_normal((2, 3, 5, 4))
    w = rs.standard_normal((4, 3, 3, 3))
    b = rs.standard_normal(4)
    out = ad.conv2d(Tensor(x), Tensor(w), Tensor(b)).value
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    ref = np.zeros((2, 4, 5, 4))
    for n in range(2):
        for o in range(4):
            for i in range(5):
                for j in range(4):
                    ref[n, o, i, j] = np.sum(xp[n, :, i : i + 3, j : j + 3] * w[o]) + b[o]
    np.testing.assert_allclose(out, ref, atol=1e-12)


@pytest.mark.parametrize("k", [1, 3, 5])
def test_conv2d_gradients(rs, k):
    x = rs.standard_normal((2, 2, 4, 5))
    w = rs.standard_normal((3, 2, k, k))
    b = rs.standard_normal(3)
    assert check_op(ad.conv2d, [x, w, b]) <= TOL
    assert check_op(lambda a, c: ad.conv2d(a, c), [x, w]) <= TOL


def test_conv2d_shape_errors():
    with pytest.raises(ValueError):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 3, 3, 3))))
    with pytest.raises(ValueError):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 2, 2))))
    with pytest.raises(ValueError):
        ad.conv2d(Tensor(np.zeros((1, 2, 4, 4))), Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros(2)))


def test_upsample_values_and_gradient(rs):
    x = rs.standard_normal((1, 2, 2, 3))
    up = ad.upsample_nearest(Tensor(x), 2).value
    assert up.shape == (1, 2, 4, 6)
    np.testing.assert_array_equal(up[0, 1, 2:4, 4:6], x[0, 1, 1, 2])
    assert check_op(lambda a: ad.upsample_nearest(a, 2), [x]) <= TOL
    assert check_op(lambda a: ad.upsample_nearest(a, 3), [x]) <= TOL


def test_pointwise_gradients(rs):
    x = away_from_zero(rs, (2, 3, 4, 4))
    assert check_op(lambda a: ad.leaky_relu(a, 0.2), [x]) <= TOL
    assert check_op(ad.sigmoid, [x * 3]) <= TOL
    assert check_op(lambda a: ad.scale(a, -1.7), [x]) <= TOL
    assert check_op(ad.add, [x, rs.standard_normal(x.shape)]) <= TOL


def test_sigmoid_is_stable_for_large_inputs():
    s = ad.sigmoid(Tensor(np.array([-800.0, 0.0, 800.0]))).value
    np.testing.assert_array_equal(s, [0.0, 0.5, 1.0])


def test_instance_norm_values_and_gradient(rs):
    x = rs.standard_normal((3, 2, 4, 4)) * 5 + 2
    y = ad.instance_norm(Tensor(x)).value
    np.testing.assert_allclose(y.mean(axis=(2, 3)), 0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(2, 3)), 1, rtol=1e-5)
    assert check_op(ad.instance_norm, [x]) <= TOL


def test_channel_mul_and_sum_batch_gradients(rs):
    x = rs.standard_normal((3, 2, 4, 4))
    a = rs.standard_normal((3, 2))
    assert check_op(ad.channel_mul, [x, a]) <= TOL
    assert check_op(ad.sum_batch, [x]) <= TOL
    assert ad.sum_batch(Tensor(x)).shape == (1, 2, 4, 4)
    with pytest.raises(ValueError):
        ad.channel_mul(Tensor(x), Tensor(np.ones((2, 2))))


def test_dot_and_scalar_backward(rs):
    x = Tensor(rs.standard_normal((2, 3)), requires_grad=True)
    w = rs.standard_normal((2, 3))
    ad.dot(x, w).backward()
    np.testing.assert_array_equal(x.grad, w)


def test_backward_accumulates_through_shared_nodes(rs):
    # y = x + x: each path contributes, gradient is 2 w
    x = Tensor(rs.standard_normal((1, 1, 2, 2)), requires_grad=True)
    w = rs.standard_normal((1, 1, 2, 2))
    ad.add(x, x).backward(w)
    np.testing.assert_allclose(x.grad, 2 * w)


def test_backward_requires_matching_grad_shape(rs):
    x = Tensor(rs.standard_normal((1, 1, 2, 2)), requires_grad=True)
    y = ad.scale(x, 2.0)
    with pytest.raises(ValueError):
        y.backward()
    with pytest.raises(ValueError):
        y.backward(np.ones(3))


def test_non_finite_output_raises():
    with np.errstate(over="ignore"), pytest.raises(FloatingPointError):
        ad.scale(Tensor(np.array([1e308])), 10.0)


def test_constants_get_no_gradient(rs):
    x = Tensor(rs.standard_normal((1, 1, 3, 3)))
    w = Tensor(rs.standard_normal((1, 1, 3, 3)), requires_grad=True)
    ad.dot(ad.conv2d(x, w), np.ones((1, 1, 3, 3))).backward()
    assert x.grad is None and w.grad is not None
