import zlib

import numpy as np
import pytest

from newsstego import autodiff as ad
from newsstego.autodiff import Tape, Tensor, backward, forward_primitive, grad_check
from newsstego.errors import (
    DetachedLoss,
    NonDeterministicFunction,
    NonFiniteGradient,
    NonFiniteOutput,
    NonScalarLoss,
    ShapeMismatch,
    UnknownPrimitive,
)
from newsstego.optim import AdamState, adam_step

from gradcases import PRIMITIVE_CASES


def conv_oracle(x, w, b, stride, pad):
    """Direct nested-loop cross-correlation."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for a in range(n):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else b[f]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += xp[a, ch, i * stride + u, j * stride + v] * w[f, ch, u, v]
                    out[a, f, i, j] = acc
    return out


def fd_grad(fun, x, eps=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        xp, xm = x.copy().reshape(-1), x.copy().reshape(-1)
        xp[k] += eps
        xm[k] -= eps
        g.reshape(-1)[k] = (fun(xp.reshape(x.shape)) - fun(xm.reshape(x.shape))) / (2 * eps)
    return g


# ---- forward rules ---------------------------------------------------------


def test_conv_all_ones():
    out = ad.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 2, 2))))
    assert out.shape == (1, 1, 2, 2)
    assert np.all(out.data == 4.0)


def test_conv_identity_kernel_with_padding():
    x = np.random.default_rng(0).standard_normal((1, 1, 5, 6))
    k = np.zeros((1, 1, 3, 3))
    k[0, 0, 1, 1] = 1.0
    assert np.array_equal(ad.conv2d(Tensor(x), Tensor(k), padding=1).data, x)


@pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv_matches_nested_loops(stride, pad):
    rng = np.random.default_rng(stride * 10 + pad)
    x, w, b = rng.standard_normal((1, 2, 5, 5)), rng.standard_normal((3, 2, 3, 3)), rng.standard_normal(3)
    got = ad.conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=pad).data
    np.testing.assert_allclose(got, conv_oracle(x, w, b, stride, pad), rtol=0, atol=1e-12)


def test_transposed_upsample_oracle():
    rng = np.random.default_rng(3)
    x, w, b = rng.standard_normal((2, 3, 2, 3)), rng.standard_normal((3, 4, 2, 2)), rng.standard_normal(4)
    want = np.zeros((2, 4, 4, 6))
    for n in range(2):
        for o in range(4):
            for i in range(2):
                for j in range(3):
                    for u in range(2):
                        for v in range(2):
                            want[n, o, 2 * i + u, 2 * j + v] += sum(x[n, c, i, j] * w[c, o, u, v] for c in range(3))
            want[n, o] += b[o]
    np.testing.assert_allclose(ad.transposed_upsample(Tensor(x), Tensor(w), Tensor(b)).data, want, atol=1e-12)


def test_bilinear_sample_identity_grid_and_midpoint():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((1, 2, 4, 5))
    gx, gy = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 4))
    grid = np.stack([gx, gy], -1)[None]
    np.testing.assert_allclose(ad.bilinear_sample(Tensor(x), Tensor(grid)).data, x, atol=1e-12)
    # halfway between pixel (0,0) and (0,1)
    mid = np.array([[[[-1 + 0.5 * 2 / 4, -1.0]]]])
    got = ad.bilinear_sample(Tensor(x), Tensor(mid)).data[0, :, 0, 0]
    np.testing.assert_allclose(got, 0.5 * (x[0, :, 0, 0] + x[0, :, 0, 1]), atol=1e-12)


def test_bilinear_border_replication():
    x = np.arange(12.0).reshape(1, 1, 3, 4)
    far = np.array([[[[-5.0, -5.0], [5.0, 5.0]]]])
    got = ad.bilinear_sample(Tensor(x), Tensor(far)).data[0, 0, 0]
    assert got.tolist() == [0.0, 11.0]


def test_shape_rules_and_errors():
    with pytest.raises(ShapeMismatch):
        ad.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(ShapeMismatch):
        ad.add(Tensor(np.ones((2, 3))), Tensor(np.ones((1, 3))))  # no general broadcasting
    with pytest.raises(ShapeMismatch):
        ad.conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))
    with pytest.raises(UnknownPrimitive):
        forward_primitive("fft", [Tensor(np.ones(2))])
    with pytest.raises(NonFiniteOutput), np.errstate(over="ignore"):
        ad.scale(Tensor(np.array([1e308])), 1e10)


def test_forward_is_deterministic():
    rng = np.random.default_rng(5)
    x, w = rng.standard_normal((2, 3, 6, 6)), rng.standard_normal((4, 3, 3, 3))
    a = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    b = ad.conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    assert a.tobytes() == b.tobytes()


def test_no_tape_node_without_grad():
    with Tape() as tape:
        ad.relu(Tensor(np.ones(3)))
        assert tape.nodes == []
        ad.relu(Tensor(np.ones(3), requires_grad=True))
        assert len(tape.nodes) == 1


# ---- backward ----------------------------------------------------------------


def test_mean_gradient_is_uniform():
    x = Tensor(np.arange(4.0), requires_grad=True)
    with Tape() as tape:
        loss = ad.mean(x)
    g = backward(tape, loss)
    assert np.all(g[x] == 0.25)
    assert np.all(x.grad == 0.25)
    assert tape.nodes == []  # consumed


def test_sigmoid_gradient_at_zero():
    x = Tensor(np.zeros(1), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_(ad.sigmoid(x))
    assert backward(tape, loss)[x][0] == 0.25


def test_non_participating_leaf_gets_zero():
    x = Tensor(np.ones(3), requires_grad=True)
    y = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_(ad.tanh(x))
    g = backward(tape, loss, wrt=[x, y])
    assert np.all(g[y] == 0)


def test_three_layer_composition_vs_finite_differences():
    rng = np.random.default_rng(6)
    w1, w2 = rng.standard_normal((4, 5)), rng.standard_normal((5, 3))
    x0 = rng.standard_normal((2, 4))

    def numpy_fun(x):
        h = np.tanh(x @ w1)
        s = 1 / (1 + np.exp(-(h @ w2)))
        return float(np.mean(s * s))

    x = Tensor(x0, requires_grad=True)
    with Tape() as tape:
        h = ad.tanh(ad.dense(x, ad.constant(w1)))
        s = ad.sigmoid(ad.dense(h, ad.constant(w2)))
        loss = ad.mean(ad.mul(s, s))
    analytic = backward(tape, loss)[x]
    numeric = fd_grad(numpy_fun, x0, eps=1e-5)
    rel = np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    assert rel.max() < 1e-4


def test_backward_errors():
    x = Tensor(np.ones(3), requires_grad=True)
    with Tape() as tape:
        vec = ad.tanh(x)
    with pytest.raises(NonScalarLoss):
        backward(tape, vec)
    with Tape() as other:
        loss = ad.sum_(ad.tanh(x))
    with Tape() as empty:
        pass
    with pytest.raises(DetachedLoss):
        backward(empty, loss)
    with pytest.raises(DetachedLoss):
        backward(empty, Tensor(np.ones(1)))
    assert other.nodes  # untouched by the failing call


def test_backward_is_linear():
    rng = np.random.default_rng(7)
    x0 = rng.standard_normal((3, 4))

    def grad_of(build):
        x = Tensor(x0.copy(), requires_grad=True)
        with Tape() as tape:
            loss = build(x)
        return backward(tape, loss)[x]

    f = lambda x: ad.sum_(ad.mul(ad.tanh(x), ad.tanh(x)))
    g = lambda x: ad.mean(ad.sigmoid(ad.scale(x, 3.0)))
    np.testing.assert_allclose(grad_of(lambda x: ad.add(f(x), g(x))), grad_of(f) + grad_of(g), atol=1e-14)


def test_clamp_gradient_convention():
    x = Tensor(np.array([-0.5, 0.0, 0.3, 1.0, 1.5]), requires_grad=True)
    with Tape() as tape:
        loss = ad.sum_(ad.clamp(x, 0.0, 1.0))
    assert backward(tape, loss)[x].tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]


# ---- grad_check --------------------------------------------------------------


def test_grad_check_relu_exact():
    f = lambda t: ad.sum_(ad.relu(t))
    # a power-of-two step makes the central difference itself exact
    assert grad_check(f, Tensor(np.full((2, 3), 2.0)), eps=2.0**-17) == 0.0
    assert grad_check(f, Tensor(np.full((2, 3), 2.0))) < 1e-9


def test_grad_check_square():
    assert grad_check(lambda t: ad.sum_(ad.mul(t, t)), Tensor(np.array([3.0])), eps=1e-5) < 1e-8


def test_grad_check_detects_nondeterminism():
    rng = np.random.default_rng(0)
    with pytest.raises(NonDeterministicFunction):
        grad_check(lambda t: ad.sum_(ad.scale(t, float(rng.uniform()))), Tensor(np.ones(2)))


def test_grad_check_flags_wrong_gradient():
    # relu evaluated right at its kink: one-sided analytic vs centred numeric
    assert grad_check(lambda t: ad.sum_(ad.relu(t)), Tensor(np.zeros(1))) > 0.1


@pytest.mark.parametrize("kind", sorted(PRIMITIVE_CASES))
def test_primitive_gradients_sampled(kind):
    rng = np.random.default_rng(zlib.crc32(kind.encode()))
    for _ in range(10):
        f, x, coords = PRIMITIVE_CASES[kind](rng)
        assert grad_check(f, x, coords=coords) < 1e-4


# ---- Adam --------------------------------------------------------------------


def test_adam_zero_gradient_is_a_no_op():
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    state = AdamState(lr=0.1)
    adam_step(p, {"w": np.zeros(2)}, state)
    assert p["w"].data.tolist() == [1.0, -2.0]
    assert np.all(state.m["w"] == 0) and np.all(state.v["w"] == 0)
    assert state.step == 1


def test_adam_first_step_closed_form():
    g = np.array([0.3, -2.0, 1e-3])
    lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
    p = {"w": Tensor(np.zeros(3))}
    adam_step(p, {"w": g}, AdamState(lr=lr, beta1=b1, beta2=b2, eps=eps))
    m_hat = (1 - b1) * g / (1 - b1)
    v_hat = (1 - b2) * g * g / (1 - b2)
    np.testing.assert_allclose(p["w"].data, -lr * m_hat / (np.sqrt(v_hat) + eps), rtol=1e-12)
    assert np.allclose(np.abs(p["w"].data[:2]), lr, rtol=1e-6)


def test_adam_scalar_descent():
    p = {"p": Tensor(np.array([0.0]))}
    state = AdamState(lr=0.1)
    for _ in range(200):
        adam_step(p, {"p": 2 * (p["p"].data - 5.0)}, state)
    assert abs(p["p"].data[0] - 5.0) < 0.1
    assert state.step == 200


def test_adam_errors():
    p = {"w": Tensor(np.zeros(2))}
    with pytest.raises(ShapeMismatch):
        adam_step(p, {"w": np.zeros(3)}, AdamState())
    with pytest.raises(NonFiniteGradient):
        adam_step(p, {"w": np.array([np.nan, 0.0])}, AdamState())
