import numpy as np
import pytest

from handgen import autodiff as ad


def numeric_grad(fn, x, eps=1e-6):
    """Central differences of a scalar fn over a numpy array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        hi = fn(x)
        flat[i] = orig - eps
        lo = fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def check_op(build, shape, seed, atol=1e-7):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=shape)
    t = ad.Tensor(x.copy(), requires_grad=True)
    out = build(t)
    out.backward()
    num = numeric_grad(lambda arr: float(build(ad.Tensor(arr)).data), x.copy())
    np.testing.assert_allclose(t.grad, num, rtol=1e-5, atol=atol)


@pytest.mark.parametrize(
    "build",
    [
        lambda t: (t * 3.0 + 1.5).sum(),
        lambda t: (t * t - t).mean(),
        lambda t: ad.exp(t * 0.3).sum(),
        lambda t: ad.log(t * t + 1.0).sum(),
        lambda t: ad.sqrt(t * t + 0.5).sum(),
        lambda t: ad.tanh(t).sum(),
        lambda t: ad.sigmoid(t).sum(),
        lambda t: (t ** 3.0).sum(),
        lambda t: ad.softmax(t, axis=-1).sum(axis=0).mean(),
        lambda t: (t / 2.5).sum(),
        lambda t: t.swapaxes(0, 1).reshape(-1, 1).sum(axis=0).sum(),
    ],
)
def test_elementwise_and_shape_grads(build):
    check_op(build, (4, 5), seed=1)


def test_matmul_grad():
    rng = np.random.default_rng(2)
    a = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=(4, 2)), requires_grad=True)
    out = ad.matmul(a, b).sum()
    out.backward()
    ga = numeric_grad(lambda arr: float((arr @ b.data).sum()), a.data.copy())
    gb = numeric_grad(lambda arr: float((a.data @ arr).sum()), b.data.copy())
    np.testing.assert_allclose(a.grad, ga, rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(b.grad, gb, rtol=1e-6, atol=1e-8)


def test_matmul_batched_broadcast_grad():
    rng = np.random.default_rng(3)
    a = ad.Tensor(rng.normal(size=(5, 3, 4)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=(4, 2)), requires_grad=True)  # broadcast over batch
    out = (ad.matmul(a, b) ** 2.0).sum()
    out.backward()
    gb = numeric_grad(lambda arr: float(((a.data @ arr) ** 2).sum()), b.data.copy())
    np.testing.assert_allclose(b.grad, gb, rtol=1e-5, atol=1e-7)


def test_broadcast_add_mul_grads():
    rng = np.random.default_rng(4)
    a = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=(4,)), requires_grad=True)
    out = ((a + b) * b).sum()
    out.backward()
    gb = numeric_grad(lambda arr: float(((a.data + arr) * arr).sum()), b.data.copy())
    np.testing.assert_allclose(b.grad, gb, rtol=1e-6, atol=1e-8)
    assert a.grad.shape == a.shape


def test_concatenate_and_getitem_grads():
    rng = np.random.default_rng(5)
    a = ad.Tensor(rng.normal(size=(3, 2)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=(3, 5)), requires_grad=True)
    cat = ad.concatenate([a, b], axis=1)
    out = (cat[:, 1:4] ** 2.0).sum()
    out.backward()

    def f_a(arr):
        c = np.concatenate([arr, b.data], axis=1)
        return float((c[:, 1:4] ** 2).sum())

    np.testing.assert_allclose(a.grad, numeric_grad(f_a, a.data.copy()), rtol=1e-6, atol=1e-8)


def test_abs_subgradient_zero_at_kink():
    t = ad.Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
    ad.absolute(t).sum().backward()
    np.testing.assert_array_equal(t.grad, [0.0, -1.0, 1.0])


def test_leaky_relu_slope():
    t = ad.Tensor(np.array([-1.0, 2.0]), requires_grad=True)
    ad.leaky_relu(t, 0.2).sum().backward()
    np.testing.assert_allclose(t.grad, [0.2, 1.0])


def test_clip_gradient_masking():
    t = ad.Tensor(np.array([-5.0, 0.5, 5.0]), requires_grad=True)
    ad.clip(t, 0.0, 1.0).sum().backward()
    np.testing.assert_array_equal(t.grad, [0.0, 1.0, 0.0])


def test_softmax_rows_sum_to_one():
    rng = np.random.default_rng(6)
    x = ad.Tensor(rng.normal(size=(7, 9)) * 20.0)
    s = ad.softmax(x, axis=-1)
    np.testing.assert_allclose(s.data.sum(axis=-1), np.ones(7), atol=1e-12)


def test_grad_accumulates_over_reuse():
    t = ad.Tensor(np.array([2.0]), requires_grad=True)
    out = (t * t + t).sum()  # d/dt = 2t + 1 = 5
    out.backward()
    np.testing.assert_allclose(t.grad, [5.0])


def test_detach_blocks_gradient():
    t = ad.Tensor(np.array([3.0]), requires_grad=True)
    out = (t.detach() * t).sum()
    out.backward()
    np.testing.assert_allclose(t.grad, [3.0])


def test_backward_seed_shape_checked():
    t = ad.Tensor(np.zeros((2, 2)), requires_grad=True)
    out = t * 2.0
    with pytest.raises(ValueError):
        out.backward(np.zeros(3))
