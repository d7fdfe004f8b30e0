"""Encoder (U-Net over image + message plane) and decoder (STN + conv classifier)."""
from __future__ import annotations

from dataclasses import dataclass, field, asdict
from functools import lru_cache
from typing import Dict, Iterable, Tuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import InvalidConfig, LengthMismatch, NonFiniteTheta, ShapeMismatch

FORMAT_VERSION = 1


class MessageBits:
    """A fixed-length vector of 0/1 payload bits."""

    __slots__ = ("bits",)

    def __init__(self, bits: Iterable[int]):
        arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1:
            raise ShapeMismatch(f"MessageBits must be 1-D, got shape {arr.shape}")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ValueError("MessageBits values must be 0 or 1")
        self.bits = arr.astype(np.uint8)

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "MessageBits":
        return cls(rng.integers(0, 2, size=length))

    @classmethod
    def from_string(cls, s: str) -> "MessageBits":
        return cls([int(ch) for ch in s])

    def __len__(self) -> int:
        return int(self.bits.size)

    def __iter__(self):
        return iter(int(b) for b in self.bits)

    def __getitem__(self, i):
        return self.bits[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, MessageBits):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __hash__(self) -> int:
        return hash(self.bits.tobytes())

    def __str__(self) -> str:
        return "".join(str(int(b)) for b in self.bits)

    def __repr__(self) -> str:
        return f"MessageBits('{self}')"


@dataclass(frozen=True)
class NetConfig:
    """Architecture hyperparameters.

    ``widths`` are the U-Net channel counts per scale (finest first); the
    bottleneck sits at ``image_size / 2**depth`` and reuses ``widths[-1]``.
    """

    image_size: int = 64
    payload_bits: int = 32
    alpha: float = 0.1
    depth: int = 3
    widths: Tuple[int, ...] = (32, 64, 128)
    decoder_widths: Tuple[int, ...] = (32, 64, 64)
    loc_widths: Tuple[int, ...] = (8, 16)
    decoder_head: str = "pool"
    theta_scale: float = 0.1
    version: int = FORMAT_VERSION

    def validate(self, strict: bool = True) -> None:
        h, depth = self.image_size, self.depth
        if depth < 1 or len(self.widths) != depth:
            raise InvalidConfig(f"need exactly depth={depth} widths, got {self.widths}")
        if h % (2**depth) or h % 8:
            raise InvalidConfig(f"image size {h} not divisible by 2**depth={2**depth} and 8")
        if len(self.decoder_widths) < 1 or any(w < 1 for w in self.decoder_widths + self.widths):
            raise InvalidConfig("channel widths must be positive")
        if h % (2 ** len(self.decoder_widths)) or h % (2 ** max(len(self.loc_widths), 1)):
            raise InvalidConfig("image size not divisible by the decoder/localisation strides")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfig(f"alpha {self.alpha} outside [0, 1]")
        if self.decoder_head not in ("pool", "flatten"):
            raise InvalidConfig(f"unknown decoder head {self.decoder_head!r}")
        if strict:
            if not 64 <= h <= 400:
                raise InvalidConfig(f"image size {h} outside 64..400")
            if not 16 <= self.payload_bits <= 128:
                raise InvalidConfig(f"payload length {self.payload_bits} outside 16..128")
            if not 0.0 < self.alpha <= 1.0:
                raise InvalidConfig(f"alpha {self.alpha} outside (0, 1]")
        elif self.payload_bits < 1:
            raise InvalidConfig("payload length must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["widths"] = list(self.widths)
        d["decoder_widths"] = list(self.decoder_widths)
        d["loc_widths"] = list(self.loc_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for key in ("widths", "decoder_widths", "loc_widths"):
            if key in d:
                d[key] = tuple(int(v) for v in d[key])
        return cls(**d)


@dataclass
class StegoParams:
    config: NetConfig
    weights: Dict[str, Tensor] = field(default_factory=dict)

    @property
    def image_size(self) -> int:
        return self.config.image_size

    @property
    def payload_bits(self) -> int:
        return self.config.payload_bits

    @property
    def alpha(self) -> float:
        return self.config.alpha

    def __getitem__(self, name: str) -> Tensor:
        return self.weights[name]

    def trainable(self) -> Dict[str, Tensor]:
        for t in self.weights.values():
            t.requires_grad = True
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
        return self.weights

    def copy(self) -> "StegoParams":
        return StegoParams(self.config, {k: Tensor(v.data.copy()) for k, v in self.weights.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t.data)) for t in self.weights.values())

    def n_parameters(self) -> int:
        return sum(t.size for t in self.weights.values())


# --------------------------------------------------------------------------
# parameter layout


def _layout(cfg: NetConfig) -> Dict[str, Tuple[Tuple[int, ...], int, float]]:
    """name -> (shape, fan_in, gain). Biases have fan_in 0 (zero-initialised)."""
    h, L = cfg.image_size, cfg.payload_bits
    coarse = (h // 8) ** 2
    spec: Dict[str, Tuple[Tuple[int, ...], int, float]] = {}

    def conv(name, cin, cout, k, gain=1.0):
        spec[name + ".w"] = ((cout, cin, k, k), cin * k * k, gain)
        spec[name + ".b"] = ((cout,), 0, 0.0)

    def tconv(name, cin, cout, k=2):
        spec[name + ".w"] = ((cin, cout, k, k), cin, 1.0)
        spec[name + ".b"] = ((cout,), 0, 0.0)

    def lin(name, nin, nout, gain=1.0):
        spec[name + ".w"] = ((nin, nout), nin, gain)
        spec[name + ".b"] = ((nout,), 0, 0.0)

    lin("enc.msg", L, coarse, gain=1.0)
    w = cfg.widths
    conv("enc.in", 4, w[0], 3)
    level_width = [w[min(k, cfg.depth - 1)] for k in range(cfg.depth + 1)]
    for k in range(1, cfg.depth + 1):
        conv(f"enc.down{k}", level_width[k - 1], level_width[k], 3)
    for k in range(cfg.depth - 1, -1, -1):
        tconv(f"enc.up{k}", level_width[k + 1], level_width[k])
        conv(f"enc.fuse{k}", 2 * level_width[k], level_width[k], 3)
    conv("enc.out", level_width[0], 3, 1, gain=2.0)

    cin = 3
    for i, c in enumerate(cfg.loc_widths):
        conv(f"dec.loc{i}", cin, c, 3)
        cin = c
    lin("dec.theta", cin * LOC_POOL * LOC_POOL, 6)
    cin = 3
    for i, c in enumerate(cfg.decoder_widths):
        conv(f"dec.conv{i}", cin, c, 3)
        cin = c
    if cfg.decoder_head == "pool":
        lin("dec.logits", cin, L, gain=0.5)
    else:
        side = h // (2 ** len(cfg.decoder_widths))
        lin("dec.logits", cin * side * side, L, gain=0.5)
    return spec


_IDENTITY_THETA = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
LOC_POOL = 4


def init_params(config: NetConfig, seed: int, strict: bool = True) -> StegoParams:
    """Fan-in scaled uniform initialisation, deterministic in ``seed``.

    Weights ~ U(-b, b) with b = gain * sqrt(6 / fan_in); biases start at zero.
    The localisation head's output layer starts at zero, i.e. the identity
    transform.
    """
    config.validate(strict=strict)
    rng = np.random.default_rng(np.uint64(seed % 2**64))
    weights: Dict[str, Tensor] = {}
    for name, (shape, fan_in, gain) in _layout(config).items():
        if fan_in == 0:
            data = np.zeros(shape)
        else:
            bound = gain * np.sqrt(6.0 / fan_in)
            data = rng.uniform(-bound, bound, size=shape)
        weights[name] = Tensor(data)
    weights["dec.theta.w"] = Tensor(np.zeros_like(weights["dec.theta.w"].data))
    return StegoParams(config, weights)


def feature_sides(config: NetConfig) -> Tuple[int, ...]:
    """Spatial side of every U-Net scale, finest to coarsest."""
    return tuple(config.image_size // 2**k for k in range(config.depth + 1))


# --------------------------------------------------------------------------
# building blocks


@lru_cache(maxsize=64)
def resize_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Linear (triangle-filter) resize as an (n_out, n_in) matrix.

    Half-pixel centres, edge samples replicated. When shrinking, the filter
    support widens with the scale factor so every input pixel contributes.
    """
    if n_in == n_out:
        return np.eye(n_in)
    m = np.zeros((n_out, n_in))
    if n_in == 1:
        m[:, 0] = 1.0
        return m
    scale = n_in / n_out
    support = max(scale, 1.0)
    centres = (np.arange(n_out) + 0.5) * scale - 0.5
    reach = int(np.ceil(support)) + 1
    for i, c in enumerate(centres):
        taps = np.arange(int(np.floor(c)) - reach, int(np.floor(c)) + reach + 1)
        w = np.maximum(0.0, 1.0 - np.abs(taps - c) / support)
        w /= w.sum()
        np.add.at(m[i], np.clip(taps, 0, n_in - 1), w)
    return m


def _bits_matrix(bits, length: int) -> np.ndarray:
    if isinstance(bits, MessageBits):
        arr = bits.bits[None, :]
    else:
        if isinstance(bits, (list, tuple)) and bits and isinstance(bits[0], MessageBits):
            arr = np.stack([b.bits for b in bits])
        else:
            arr = np.asarray(bits)
        if arr.ndim == 1:
            arr = arr[None, :]
    if arr.shape[-1] != length:
        raise LengthMismatch(f"payload has {arr.shape[-1]} bits, network expects {length}")
    return arr.astype(np.float64)


def _conv(x, params, name, stride=1, relu=True):
    k = params[name + ".w"].shape[-1]
    y = ad.conv2d(x, params[name + ".w"], params[name + ".b"], stride=stride, padding=k // 2)
    return ad.relu(y) if relu else y


def expand_message(bits, params: StegoParams) -> Tensor:
    """Dense map of the (centred) bits to a coarse (H/8)^2 grid, bilinearly
    upsampled to an N x 1 x H x H plane."""
    h = params.image_size
    side = h // 8
    x = ad.constant(2.0 * _bits_matrix(bits, params.payload_bits) - 1.0)
    coarse = ad.dense(x, params["enc.msg.w"], params["enc.msg.b"])
    coarse = ad.reshape(coarse, (x.shape[0], 1, side, side))
    up = resize_matrix(side, h)
    return ad.resample(coarse, up, up)


def _unet(x: Tensor, params: StegoParams) -> Tensor:
    cfg = params.config
    skips = [_conv(x, params, "enc.in")]
    for k in range(1, cfg.depth + 1):
        skips.append(_conv(skips[-1], params, f"enc.down{k}", stride=2))
    y = skips[-1]
    for k in range(cfg.depth - 1, -1, -1):
        y = ad.relu(ad.transposed_upsample(y, params[f"enc.up{k}.w"], params[f"enc.up{k}.b"]))
        y = _conv(ad.concat_channels(y, skips[k]), params, f"enc.fuse{k}")
    return _conv(y, params, "enc.out", relu=False)


def _check_image(img: Tensor, h: int) -> None:
    if img.data.ndim != 4 or img.shape[1] != 3 or img.shape[2] != h or img.shape[3] != h:
        raise ShapeMismatch(f"expected N x 3 x {h} x {h} image, got {img.shape}")


def residual(cover: Tensor, bits, params: StegoParams) -> Tensor:
    """tanh(unet(cover, plane)) before scaling by alpha."""
    _check_image(cover, params.image_size)
    plane = expand_message(bits, params)
    if plane.shape[0] != cover.shape[0]:
        raise ShapeMismatch(f"{plane.shape[0]} payloads for {cover.shape[0]} images")
    x = ad.concat_channels(cover - 0.5, plane)
    return ad.tanh(_unet(x, params))


def encode(cover: Tensor, bits, params: StegoParams) -> Tensor:
    """stego = clamp(cover + alpha * tanh(unet(cover, message plane)), 0, 1)."""
    if not isinstance(cover, Tensor):
        cover = Tensor(cover)
    if params.alpha == 0.0:
        _check_image(cover, params.image_size)
        _bits_matrix(bits, params.payload_bits)
        return ad.clamp(cover, 0.0, 1.0) if cover.requires_grad else Tensor(np.clip(cover.data, 0, 1))
    r = residual(cover, bits, params)
    return ad.clamp(cover + r * params.alpha, 0.0, 1.0)


def affine_grid(theta: Tensor, height: int, width: int) -> Tensor:
    """Normalised sampling grid (N,H,W,2) for affine ``theta`` (N,2,3)."""
    xs = np.linspace(-1.0, 1.0, width) if width > 1 else np.zeros(1)
    ys = np.linspace(-1.0, 1.0, height) if height > 1 else np.zeros(1)
    gx, gy = np.meshgrid(xs, ys)
    base = np.stack([gx.ravel(), gy.ravel(), np.ones(gx.size)], axis=1)  # (HW, 3)
    grid = ad.matmul(ad.constant(base), ad.transpose(theta, (0, 2, 1)))  # (N, HW, 2)
    return ad.reshape(grid, (theta.shape[0], height, width, 2))


def stn_warp(feature: Tensor, theta) -> Tensor:
    """Resample ``feature`` at affine-transformed coordinates (border replication).

    ``theta`` holds 6 values per batch item, [[a, b, tx], [c, d, ty]], acting
    on corner-aligned normalised coordinates in [-1, 1].
    """
    if not isinstance(theta, Tensor):
        theta = Tensor(theta)
    if not np.all(np.isfinite(theta.data)):
        raise NonFiniteTheta("theta contains NaN/Inf")
    n, _, h, w = feature.shape
    theta = ad.reshape(theta, (n, 2, 3))
    return ad.bilinear_sample(feature, affine_grid(theta, h, w))


def predict_theta(image: Tensor, params: StegoParams) -> Tensor:
    """Affine parameters (N, 6): identity + theta_scale * loc-net output."""
    x = image - 0.5
    for i in range(len(params.config.loc_widths)):
        x = _conv(x, params, f"dec.loc{i}", stride=2)
    pool = resize_matrix(x.shape[-1], LOC_POOL)
    x = ad.reshape(ad.resample(x, pool, pool), (x.shape[0], -1))
    offset = ad.dense(x, params["dec.theta.w"], params["dec.theta.b"])
    identity = ad.constant(np.tile(_IDENTITY_THETA, (x.shape[0], 1)))
    return ad.add(identity, ad.scale(offset, params.config.theta_scale))


def decode_logits(stego: Tensor, params: StegoParams) -> Tensor:
    if not isinstance(stego, Tensor):
        stego = Tensor(stego)
    _check_image(stego, params.image_size)
    theta = predict_theta(stego, params)
    x = stn_warp(stego, theta) - 0.5
    for i in range(len(params.config.decoder_widths)):
        x = _conv(x, params, f"dec.conv{i}", stride=2)
    if params.config.decoder_head == "pool":
        x = ad.mean(x, axis=(2, 3))
    else:
        x = ad.reshape(x, (x.shape[0], -1))
    return ad.dense(x, params["dec.logits.w"], params["dec.logits.b"])


def logits_to_bits(logits: np.ndarray) -> np.ndarray:
    """bit = 1 iff sigmoid(z) > 0.5, i.e. z > 0; z == 0 maps to 0."""
    return (np.asarray(logits) > 0).astype(np.uint8)


def decode(stego: Tensor, params: StegoParams):
    """Return (logits, bits). For a single image, bits is a MessageBits and
    logits a length-L array; for batches, (N, L) arrays of each."""
    logits = decode_logits(stego, params)
    bits = logits_to_bits(logits.data)
    if logits.shape[0] == 1:
        return logits.data[0], MessageBits(bits[0])
    return logits.data, bits
