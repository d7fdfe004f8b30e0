import math

import numpy as np
import pytest

from newsstego.autodiff import Tensor
from newsstego.errors import LengthMismatch, ShapeMismatch
from newsstego.losses import l2_residual, message_loss, perceptual_proxy, total_loss
from newsstego.images import synthetic_corpus


def bce_oracle(z, y):
    return float(np.mean([max(a, 0) - a * b + math.log1p(math.exp(-abs(a))) for a, b in zip(z, y)]))


def test_l2_residual():
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(1, 3, 8, 8))
    assert l2_residual(Tensor(a), Tensor(a)).item() == 0.0
    assert abs(l2_residual(Tensor(a), Tensor(a + 0.1)).item() - 0.01) < 1e-15
    b = rng.uniform(size=a.shape)
    assert l2_residual(Tensor(a), Tensor(b)).item() == l2_residual(Tensor(b), Tensor(a)).item()
    with pytest.raises(ShapeMismatch):
        l2_residual(Tensor(a), Tensor(a[..., :4]))


def test_perceptual_proxy_zero_iff_equal():
    rng = np.random.default_rng(1)
    a = rng.uniform(size=(2, 3, 16, 16))
    assert perceptual_proxy(Tensor(a), Tensor(a)).item() == 0.0
    assert perceptual_proxy(Tensor(a), Tensor(a + 0.01)).item() > 0.0  # constant offset
    for _ in range(10):
        assert perceptual_proxy(Tensor(a), Tensor(rng.uniform(size=a.shape))).item() >= 0.0


def test_perceptual_proxy_single_scale_oracle():
    rng = np.random.default_rng(2)
    a, b = rng.uniform(size=(1, 1, 6, 6)), rng.uniform(size=(1, 1, 6, 6))
    d = b - a
    want = np.mean(np.diff(d, axis=-1) ** 2) + np.mean(np.diff(d, axis=-2) ** 2) + np.mean(d**2)
    assert abs(perceptual_proxy(Tensor(a), Tensor(b), scales=1).item() - want) < 1e-14


def test_perceptual_proxy_grows_with_noise():
    img = synthetic_corpus(1, 32, seed=3)
    means = []
    for sigma in (0.01, 0.05, 0.1):
        vals = [
            perceptual_proxy(Tensor(img), Tensor(img + np.random.default_rng(s).normal(0, sigma, img.shape))).item()
            for s in range(20)
        ]
        means.append(np.mean(vals))
    assert means[0] < means[1] < means[2]


def test_message_loss_values():
    ones = np.ones(8)
    assert message_loss(Tensor(np.full(8, 20.0)), ones).item() < 1e-8
    assert abs(message_loss(Tensor(np.zeros(8)), ones).item() - math.log(2)) < 1e-15
    assert abs(message_loss(Tensor(np.full(8, -20.0)), ones).item() - 20.0) < 1e-8
    z = np.random.default_rng(4).normal(0, 5, 16)
    y = np.random.default_rng(5).integers(0, 2, 16)
    assert abs(message_loss(Tensor(z), y).item() - bce_oracle(z, y)) < 1e-14
    with pytest.raises(LengthMismatch):
        message_loss(Tensor(np.zeros(8)), np.ones(7))


def _parts(seed):
    rng = np.random.default_rng(seed)
    cover = rng.uniform(size=(1, 3, 16, 16))
    stego = np.clip(cover + rng.normal(0, 0.05, cover.shape), 0, 1)
    logits = rng.normal(0, 2, (1, 8))
    bits = rng.integers(0, 2, (1, 8))
    return Tensor(cover), Tensor(stego), Tensor(logits), bits


def test_total_is_exact_weighted_sum():
    cover, stego, logits, bits = _parts(6)
    lr = l2_residual(cover, stego).item()
    lp = perceptual_proxy(cover, stego).item()
    lm = bce_oracle(logits.data[0], bits[0])
    got = total_loss(cover, stego, logits, bits, (2.0, 3.0, 5.0)).item()
    assert abs(got - (2 * lr + 3 * lp + 5 * lm)) < 1e-12


def test_zero_image_weights_leave_only_message_term():
    for seed in range(5):
        cover, stego, logits, bits = _parts(seed)
        lm = message_loss(logits, bits).item()
        assert abs(total_loss(cover, stego, logits, bits, (0.0, 0.0, 1.7)).item() - 1.7 * lm) < 1e-12


def test_total_near_zero_when_perfect():
    cover = Tensor(np.full((1, 3, 8, 8), 0.5))
    bits = np.array([[1, 0, 1, 1]])
    logits = Tensor(np.where(bits == 1, 30.0, -30.0))
    assert total_loss(cover, cover, logits, bits, (1.5, 1.0, 1.0)).item() < 1e-8
