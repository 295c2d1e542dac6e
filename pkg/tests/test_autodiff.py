import numpy as np
import pytest

from iristraverse import autodiff as ad
from iristraverse.autodiff import Tensor


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=float), requires_grad=grad)


def test_add_componentwise():
    assert np.array_equal(ad.add(T([1, 2]), T([3, 4])).data, [4, 6])


def test_mul_by_ones_passes_upstream_gradient():
    x = T([1.5, -2.0, 3.0], grad=True)
    ad.backward(ad.reduce_sum(ad.mul(x, np.ones(3)) * T([1.0, 2.0, 3.0])))
    assert np.array_equal(x.grad, [1.0, 2.0, 3.0])


def test_pow_value_gradient_and_fd():
    x = T([2.0], grad=True)
    y = ad.power(x, T([3.0]))
    assert y.item() == 8.0
    ad.backward(ad.reduce_sum(y))
    assert x.grad[0] == pytest.approx(12.0)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.power(t, 3.0)), np.array([2.0])) <= 1e-6


def test_shape_mismatch_names_both_shapes():
    with pytest.raises(ad.ShapeError, match=r"\(2,\).*\(3,\)"):
        ad.add(T([1, 2]), T([1, 2, 3]))


def test_division_by_exact_zero():
    with pytest.raises(ad.DomainError):
        ad.div(T([1.0]), T([0.0]))


def test_log_domain():
    with pytest.raises(ad.DomainError):
        ad.log(T([1.0, 0.0]))
    with pytest.raises(ad.DomainError):
        ad.log(T([-1.0]))


def test_unary_trivial_values():
    assert ad.sigmoid(T(0.0)).item() == 0.5
    x = T([-3.0], grad=True)
    y = ad.absolute(x)
    assert y.item() == 3.0
    ad.backward(ad.reduce_sum(y))
    assert x.grad[0] == -1.0


@pytest.mark.parametrize("kind", ["exp", "log", "sqrt", "sigmoid", "tanh", "square", "sin", "cos", "softplus",
                                  "neg"])
def test_smooth_unary_gradcheck(kind, rng):
    x = rng.uniform(0.2, 2.0, size=7)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.unary(kind, t)), x) <= 1e-6


@pytest.mark.parametrize("kind", ["abs", "relu"])
def test_kinked_unary_gradcheck_away_from_kink(kind, rng):
    x = rng.choice([-1.0, 1.0], 6) * rng.uniform(0.1, 2.0, 6)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.unary(kind, t)), x) <= 1e-6


def test_kink_conventions():
    x = T([0.0, 0.0], grad=True)
    ad.backward(ad.reduce_sum(ad.absolute(x) + ad.relu(x)))
    assert np.array_equal(x.grad, [0.0, 0.0])


@pytest.mark.parametrize("kind", ["add", "sub", "mul", "div", "pow"])
def test_binary_gradcheck(kind, rng):
    a = rng.uniform(0.5, 2.0, 5)
    b = rng.uniform(0.5, 2.0, 5)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.elementwise(kind, t, b)), a) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.elementwise(kind, a, t)), b) <= 1e-6


def test_scalar_broadcast_gradient():
    s = T(2.0, grad=True)
    x = T([1.0, 2.0, 3.0], grad=True)
    ad.backward(ad.reduce_sum(s * x))
    assert s.grad == pytest.approx(6.0)
    assert np.array_equal(x.grad, [2.0, 2.0, 2.0])


def test_atan2_gradcheck(rng):
    x = rng.uniform(0.5, 2.0, 4)
    y = rng.uniform(-2.0, 2.0, 4)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.atan2(y, t)), x) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.atan2(t, x)), y) <= 1e-6


def test_matmul_values():
    eye = np.eye(3)
    x = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(ad.matmul(eye, x).data, x)
    assert np.array_equal(ad.matmul(T([[1, 2], [3, 4]]), T([[1], [1]])).data, [[3], [7]])


def test_matmul_gradcheck(rng):
    a = rng.standard_normal((5, 4))
    b = rng.standard_normal((4, 3))
    w = rng.standard_normal((5, 3))
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.matmul(t, b) * w), a) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.matmul(a, t) * w), b) <= 1e-6


def test_matmul_dimension_mismatch():
    with pytest.raises(ad.ShapeError):
        ad.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_conv_identity_kernel(backend, rng):
    x = rng.random((1, 6, 7))
    out = ad.conv2d(x, np.ones((1, 1, 1, 1)))
    assert np.array_equal(out.data, x)


def test_conv_box_on_constant_reflect(backend):
    x = np.full((1, 8, 9), 0.37)
    out = ad.conv2d(x, np.full((1, 1, 3, 3), 1 / 9), padding="reflect")
    assert np.allclose(out.data, 0.37, atol=1e-15)


def test_conv_gradcheck(backend, rng):
    x = rng.standard_normal((1, 8, 8))
    k = rng.standard_normal((1, 1, 3, 3))
    w = rng.standard_normal((1, 8, 8))
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.conv2d(t, k) * w), x) <= 1e-5
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.conv2d(x, t) * w), k) <= 1e-5


@pytest.mark.parametrize("padding", ["zero", "reflect", "wrap", ("reflect", "wrap")])
def test_conv_gradcheck_paddings_and_stride(backend, rng, padding):
    x = rng.standard_normal((2, 7, 9))
    k = rng.standard_normal((3, 2, 3, 5))
    out_shape = ad.conv2d(x, k, stride=2, padding=padding).shape
    w = rng.standard_normal(out_shape)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.conv2d(t, k, stride=2, padding=padding) * w), x) <= 1e-5
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.conv2d(x, t, stride=2, padding=padding) * w), k) <= 1e-5


def test_conv_output_size():
    out = ad.conv2d(np.zeros((1, 10, 11)), np.zeros((1, 1, 3, 3)), stride=2, pad=0)
    assert out.shape == (1, 4, 5)


def test_conv_kernel_larger_than_input():
    with pytest.raises(ad.ShapeError):
        ad.conv2d(np.zeros((1, 3, 3)), np.zeros((1, 1, 5, 5)), pad=0)


def test_reductions():
    assert ad.reduce_sum(T([1, 2, 3])).item() == 6
    assert ad.reduce_mean(np.ones((4, 4))).item() == 1
    lse = ad.reduce("max-smooth", T([0.0, 10.0]), temperature=0.01).item()
    assert 10.0 <= lse <= 10.01


def test_reduction_axis_out_of_range():
    with pytest.raises(ad.ShapeError):
        ad.reduce_sum(np.ones((2, 2)), axis=2)


def test_reduction_gradcheck(rng):
    x = rng.standard_normal((3, 4))
    w = rng.standard_normal(4)
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.reduce_mean(t, 0) * w), x) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.logsumexp(t, 1, 0.5)), x) <= 1e-6


def test_grid_sample_values(backend):
    img = np.arange(12.0).reshape(3, 4)
    coords = np.array([[[2.0, 1.0], [0.0, 2.0]]])
    assert np.array_equal(ad.grid_sample(img, coords).data, [[6.0, 8.0]])
    half = ad.grid_sample(np.array([[0.0, 1.0], [2.0, 3.0]]), np.array([[[0.5, 0.5]]]))
    assert half.item() == 1.5


def test_grid_sample_clamps_out_of_bounds(backend):
    img = np.array([[0.0, 1.0], [2.0, 3.0]])
    out = ad.grid_sample(img, np.array([[[-5.0, -5.0], [9.0, 9.0]]]))
    assert np.array_equal(out.data, [[0.0, 3.0]])


def test_grid_sample_gradcheck(backend, rng):
    img = rng.standard_normal((6, 7))
    coords = np.stack([rng.uniform(0.1, 5.9, (4, 5)), rng.uniform(0.1, 4.9, (4, 5))], axis=-1)
    w = rng.standard_normal((4, 5))
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.grid_sample(t, coords) * w), img) <= 1e-5
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.grid_sample(img, t) * w), coords) <= 1e-5


def test_backward_simple_sums():
    z = T(np.arange(5.0), grad=True)
    ad.backward(ad.reduce_sum(z))
    assert np.array_equal(z.grad, np.ones(5))
    z = T([1.0, 2.0], grad=True)
    ad.backward(ad.reduce_sum(ad.square(z)))
    assert np.array_equal(z.grad, [2.0, 4.0])


def test_backward_linearity(rng):
    zv = rng.standard_normal(4)

    def term1(z):
        return ad.reduce_sum(ad.sin(z))

    def term2(z):
        return ad.reduce_sum(ad.square(z)) * 0.5

    grads = []
    for f in (term1, term2, lambda z: term1(z) + term2(z)):
        z = T(zv, grad=True)
        ad.backward(f(z))
        grads.append(z.grad)
    assert np.allclose(grads[0] + grads[1], grads[2], rtol=0, atol=1e-14)


def test_backward_needs_scalar():
    with pytest.raises(ad.ShapeError):
        ad.backward(T([1.0, 2.0], grad=True) * 2.0)


def test_shared_subexpression_accumulates():
    x = T([3.0], grad=True)
    y = x * x
    ad.backward(ad.reduce_sum(y + y))
    assert x.grad[0] == pytest.approx(12.0)


def test_graph_released_unless_retained():
    x = T([1.0], grad=True)
    y = ad.reduce_sum(ad.exp(x))
    ad.backward(y, retain_graph=True)
    ad.backward(y)
    assert x.grad[0] == pytest.approx(2 * np.e)
    assert y.is_leaf


def test_grad_check_exact_linear(rng):
    assert ad.grad_check(ad.reduce_sum, rng.standard_normal(6)) <= 1e-9


def test_grad_check_rejects_nondeterministic():
    state = {"n": 0}

    def f(t):
        state["n"] += 1
        return ad.reduce_sum(t) + state["n"]

    with pytest.raises(ad.NonDeterministicError):
        ad.grad_check(f, np.ones(2))


def test_shape_ops_gradcheck(rng):
    x = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((4, 2, 3))
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.transpose(t, (2, 0, 1)) * w), x) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(t[1, :, 1:3] * 2.0), x) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.concat([t, t * 2.0], axis=1)), x) <= 1e-6
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.stack([t, ad.square(t)], axis=0)), x) <= 1e-6
    u = rng.standard_normal((2, 6, 8))
    assert ad.grad_check(lambda t: ad.reduce_sum(ad.upsample2x(t) * u), x) <= 1e-6


def test_clip_zero_gradient_outside():
    x = T([-1.0, 0.5, 2.0], grad=True)
    ad.backward(ad.reduce_sum(ad.clip(x, 0.0, 1.0)))
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


def test_detach_stops_gradient():
    x = T([2.0], grad=True)
    ad.backward(ad.reduce_sum(x * x.detach()))
    assert x.grad[0] == 2.0


def test_numpy_ufuncs_do_not_swallow_tensors():
    x = T([1.0, 2.0])
    out = np.ones(2) + x
    assert isinstance(out, Tensor)
