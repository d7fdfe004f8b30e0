"""Loss terms: residual L2, a fixed multi-scale perceptual proxy, and the
message cross-entropy, plus their weighted sum."""
from __future__ import annotations

from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import LengthMismatch, ShapeMismatch

PROXY_SCALES = 3


def _same_shape(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")


def l2_residual(cover: Tensor, stego: Tensor) -> Tensor:
    """Mean of (stego - cover)^2 over every element."""
    _same_shape(cover, stego)
    d = ad.sub(stego, cover)
    return ad.mean(ad.mul(d, d))


@lru_cache(maxsize=32)
def _halve(n: int) -> np.ndarray:
    m = np.zeros((n // 2, n))
    idx = np.arange(n // 2)
    m[idx, 2 * idx] = 0.5
    m[idx, 2 * idx + 1] = 0.5
    return m


@lru_cache(maxsize=32)
def _forward_diff(n: int) -> np.ndarray:
    m = np.zeros((n - 1, n))
    idx = np.arange(n - 1)
    m[idx, idx] = -1.0
    m[idx, idx + 1] = 1.0
    return m


def perceptual_proxy(cover: Tensor, stego: Tensor, scales: int = PROXY_SCALES) -> Tensor:
    """Multi-scale gradient-difference distance.

    For each of ``scales`` dyadic levels (full resolution, 1/2, 1/4): mean
    squared horizontal plus vertical finite differences of (stego - cover).
    A mean-squared intensity term at the coarsest level makes the value zero
    only for identical inputs (a constant offset has no gradient).
    """
    _same_shape(cover, stego)
    d = ad.sub(stego, cover)
    total = None
    for level in range(scales):
        h, w = d.shape[-2], d.shape[-1]
        if level:
            if h < 2 or w < 2:
                break
            d = ad.resample(d, _halve(h), _halve(w))
            h, w = d.shape[-2], d.shape[-1]
        terms = []
        if w > 1:
            gx = ad.resample(d, np.eye(h), _forward_diff(w))
            terms.append(ad.mean(ad.mul(gx, gx)))
        if h > 1:
            gy = ad.resample(d, _forward_diff(h), np.eye(w))
            terms.append(ad.mean(ad.mul(gy, gy)))
        for t in terms:
            total = t if total is None else ad.add(total, t)
    coarse = ad.mean(ad.mul(d, d))
    return coarse if total is None else ad.add(total, coarse)


def message_loss(logits: Tensor, bits) -> Tensor:
    """Mean binary cross-entropy, mean(max(z,0) - z*y + log(1 + exp(-|z|)))."""
    if not isinstance(logits, Tensor):
        logits = Tensor(logits)
    y = np.asarray(bits.bits if hasattr(bits, "bits") else bits, dtype=np.float64)
    if y.size != logits.size:
        raise LengthMismatch(f"{logits.size} logits vs {y.size} bits")
    y = y.reshape(logits.shape)
    return ad.mean(ad.bce_logits(logits, ad.constant(y)))


def total_loss(
    cover: Tensor,
    stego: Tensor,
    logits: Tensor,
    bits,
    lambdas: Tuple[float, float, float],
    with_parts: bool = False,
):
    """lambda_r * L2 + lambda_p * perceptual + lambda_m * message."""
    lam_r, lam_p, lam_m = (float(v) for v in lambdas)
    lr = l2_residual(cover, stego)
    lp = perceptual_proxy(cover, stego)
    lm = message_loss(logits, bits)
    total = ad.add(ad.add(ad.scale(lr, lam_r), ad.scale(lp, lam_p)), ad.scale(lm, lam_m))
    if with_parts:
        parts: Dict[str, float] = {"loss_r": lr.item(), "loss_p": lp.item(), "loss_m": lm.item()}
        return total, parts
    return total
