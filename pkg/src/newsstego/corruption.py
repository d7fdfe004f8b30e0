"""Differentiable distortion channel: perspective warp, blur, colour jitter,
noise and an approximate JPEG stage."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import BadDimensions, DegenerateQuad, InvalidConfig

STAGES = ("warp", "blur", "color", "noise", "jpeg")


@dataclass(frozen=True)
class CorruptionSpec:
    name: str = "custom"
    noise_sigma_range: Tuple[float, float] = (0.0, 0.0)
    blur_kernel_sizes: Tuple[int, ...] = (1,)
    jpeg_quality_range: Tuple[int, int] = (100, 100)
    perspective_jitter: float = 0.0
    brightness_range: Tuple[float, float] = (0.0, 0.0)
    contrast_range: Tuple[float, float] = (1.0, 1.0)
    enable_warp: bool = False
    enable_blur: bool = False
    enable_color: bool = False
    enable_noise: bool = False
    enable_jpeg: bool = False

    def validate(self) -> "CorruptionSpec":
        for label, (lo, hi) in (
            ("noise_sigma_range", self.noise_sigma_range),
            ("jpeg_quality_range", self.jpeg_quality_range),
            ("brightness_range", self.brightness_range),
            ("contrast_range", self.contrast_range),
        ):
            if lo > hi:
                raise InvalidConfig(f"{label}: lo {lo} > hi {hi}")
        if self.noise_sigma_range[0] < 0:
            raise InvalidConfig("noise sigma must be >= 0")
        lo, hi = self.jpeg_quality_range
        if not (1 <= lo and hi <= 100):
            raise InvalidConfig("jpeg quality must lie in 1..100")
        if not 0.0 <= self.perspective_jitter <= 0.1:
            raise InvalidConfig("perspective_jitter must lie in [0, 0.1]")
        if not self.blur_kernel_sizes or any(k < 1 or k % 2 == 0 for k in self.blur_kernel_sizes):
            raise InvalidConfig("blur kernel sizes must be odd and >= 1")
        return self

    def with_only(self, *stages: str) -> "CorruptionSpec":
        """Copy with exactly ``stages`` enabled."""
        return replace(self, **{f"enable_{s}": s in stages for s in STAGES})

    def without(self, stage: str) -> "CorruptionSpec":
        return replace(self, **{f"enable_{stage}": False})

    @property
    def enabled(self) -> Tuple[str, ...]:
        return tuple(s for s in STAGES if getattr(self, f"enable_{s}"))

    # ---- key = value text config ---------------------------------------

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, tuple):
                s = ", ".join(repr(x) for x in v)
            else:
                s = str(v)
            lines.append(f"{f.name} = {s}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "CorruptionSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        values: Dict[str, object] = {}
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or key not in kinds:
                raise InvalidConfig(f"bad corruption config line: {raw!r}")
            values[key] = _parse_value(key, val)
        return cls(**values).validate()

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CorruptionSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _parse_value(key: str, val: str):
    if key == "name":
        return val
    if key.startswith("enable_"):
        if val.lower() not in ("true", "false"):
            raise InvalidConfig(f"{key}: expected true/false, got {val!r}")
        return val.lower() == "true"
    parts = [p.strip() for p in val.split(",") if p.strip()]
    if key in ("blur_kernel_sizes", "jpeg_quality_range"):
        return tuple(int(p) for p in parts)
    if key == "perspective_jitter":
        return float(val)
    return tuple(float(p) for p in parts)


PRESETS: Dict[str, CorruptionSpec] = {
    "none": CorruptionSpec(name="none"),
    "digital": CorruptionSpec(
        name="digital",
        noise_sigma_range=(0.0, 0.02),
        jpeg_quality_range=(80, 95),
        enable_noise=True,
        enable_jpeg=True,
    ),
    "print-sim": CorruptionSpec(
        name="print-sim",
        noise_sigma_range=(0.0, 0.05),
        blur_kernel_sizes=(1, 3, 5),
        jpeg_quality_range=(50, 90),
        perspective_jitter=0.05,
        brightness_range=(-0.15, 0.15),
        contrast_range=(0.85, 1.15),
        enable_warp=True,
        enable_blur=True,
        enable_color=True,
        enable_noise=True,
        enable_jpeg=True,
    ),
}


def get_preset(name: str) -> CorruptionSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise InvalidConfig(f"unknown corruption suite {name!r}; choose from {sorted(PRESETS)}") from None


def scaled(spec: CorruptionSpec, strength: float) -> CorruptionSpec:
    """Shrink every distortion range towards the identity by ``strength`` in [0, 1]."""
    s = float(np.clip(strength, 0.0, 1.0))
    q_lo, q_hi = spec.jpeg_quality_range
    largest = 1 + 2 * round((max(spec.blur_kernel_sizes) - 1) / 2 * s)
    return replace(
        spec,
        noise_sigma_range=tuple(v * s for v in spec.noise_sigma_range),
        perspective_jitter=spec.perspective_jitter * s,
        brightness_range=tuple(v * s for v in spec.brightness_range),
        contrast_range=tuple(1.0 + (v - 1.0) * s for v in spec.contrast_range),
        jpeg_quality_range=(int(round(100 - (100 - q_lo) * s)), int(round(100 - (100 - q_hi) * s))),
        blur_kernel_sizes=tuple(k for k in spec.blur_kernel_sizes if k <= largest) or (1,),
    )


# --------------------------------------------------------------------------
# homography


UNIT_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def homography_from_points(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Four-point direct linear transform; returns H with H[2, 2] == 1."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    h = np.linalg.solve(a, b)
    return np.append(h, 1.0).reshape(3, 3)


def apply_homography(hmat: np.ndarray, pts: np.ndarray) -> np.ndarray:
    p = np.c_[pts, np.ones(len(pts))] @ hmat.T
    return p[:, :2] / p[:, 2:3]


def _quad_is_degenerate(quad: np.ndarray, tol: float = 1e-6) -> bool:
    # every consecutive corner triple must turn the same way with non-trivial area
    crosses = []
    for i in range(4):
        p0, p1, p2 = quad[i], quad[(i + 1) % 4], quad[(i + 2) % 4]
        d1, d2 = p1 - p0, p2 - p1
        crosses.append(d1[0] * d2[1] - d1[1] * d2[0])
    crosses = np.array(crosses)
    return bool(np.any(np.abs(crosses) < tol) or not (np.all(crosses > 0) or np.all(crosses < 0)))


def sample_homography(spec: CorruptionSpec, rng: np.random.Generator, max_tries: int = 100) -> np.ndarray:
    """Homography taking the unit square to a corner-jittered quadrilateral.

    Each corner coordinate moves by U(-j, j) with j = perspective_jitter, i.e.
    at most j * H pixels for an H x H image.
    """
    j = spec.perspective_jitter
    if j == 0:
        return np.eye(3)
    for _ in range(max_tries):
        quad = UNIT_CORNERS + rng.uniform(-j, j, size=(4, 2))
        if _quad_is_degenerate(quad):
            continue
        return homography_from_points(UNIT_CORNERS, quad)
    raise DegenerateQuad(f"no valid quadrilateral after {max_tries} draws")


def homography_grid(hmat: np.ndarray, height: int, width: int) -> np.ndarray:
    """Sampling grid (1,H,W,2) in [-1, 1] that renders the image warped by ``hmat``."""
    us = np.arange(width) / max(width - 1, 1)
    vs = np.arange(height) / max(height - 1, 1)
    gu, gv = np.meshgrid(us, vs)
    src = apply_homography(np.linalg.inv(hmat), np.c_[gu.ravel(), gv.ravel()])
    return (2.0 * src - 1.0).reshape(1, height, width, 2)


# --------------------------------------------------------------------------
# JPEG approximation

_LUMA_TABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

_CHROMA_TABLE = np.full((8, 8), 99.0)
_CHROMA_TABLE[:4, :4] = [
    [17, 18, 24, 47],
    [18, 21, 26, 66],
    [24, 26, 56, 99],
    [47, 66, 99, 99],
]

_RGB_TO_YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_YCC_OFFSET = np.array([0.0, 0.5, 0.5])


def quant_table(quality: int, chroma: bool = False) -> np.ndarray:
    """IJG quality scaling of the standard tables (quality 100 gives all ones)."""
    q = int(np.clip(quality, 1, 100))
    factor = 5000.0 / q if q < 50 else 200.0 - 2.0 * q
    base = _CHROMA_TABLE if chroma else _LUMA_TABLE
    return np.clip(np.floor((base * factor + 50.0) / 100.0), 1.0, 255.0)


def dct_matrix(n: int = 8) -> np.ndarray:
    """Orthonormal DCT-II matrix (rows are basis vectors)."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


@lru_cache(maxsize=16)
def _block_dct(size: int) -> np.ndarray:
    return np.kron(np.eye(size // 8), dct_matrix(8))


def _table_plane(quality: int, size: int) -> np.ndarray:
    """(3, size, size) tiled quantisation steps for Y, Cb, Cr."""
    reps = size // 8
    return np.stack([
        np.tile(quant_table(quality, chroma=c > 0), (reps, reps)) for c in range(3)
    ])


def _dc_mask(size: int) -> np.ndarray:
    m = np.zeros((size, size))
    m[::8, ::8] = 1.0
    return m


def _color_mix(x: Tensor, matrix: np.ndarray, offset: np.ndarray) -> Tensor:
    w = ad.constant(matrix.reshape(3, 3, 1, 1))
    return ad.conv2d(x, w, ad.constant(offset))


def jpeg_approx_batch(image: Tensor, qualities: Sequence[int]) -> Tensor:
    """Blockwise JPEG-like quantisation with one quality per batch item."""
    n, c, h, w = image.shape
    if c != 3 or h % 8 or w % 8 or h != w:
        raise BadDimensions(f"jpeg needs N x 3 x H x H with H divisible by 8, got {image.shape}")
    if len(qualities) != n:
        raise BadDimensions(f"{len(qualities)} qualities for {n} images")
    d = _block_dct(h)
    ycc = _color_mix(image, _RGB_TO_YCC, _YCC_OFFSET)
    coeffs = ad.resample(ycc * 255.0 - 128.0, d, d)
    steps = np.stack([_table_plane(q, h) for q in qualities])
    dc = np.broadcast_to(_dc_mask(h), steps.shape)
    ac = 1.0 - dc
    quantised = ad.soft_round(ad.mul(coeffs, ad.constant(ac / steps)))
    rebuilt = ad.add(ad.mul(quantised, ad.constant(ac * steps)), ad.mul(coeffs, ad.constant(dc)))
    ycc_back = (ad.resample(rebuilt, d.T, d.T) + 128.0) * (1.0 / 255.0)
    inv = np.linalg.inv(_RGB_TO_YCC)
    return _color_mix(ycc_back, inv, -inv @ _YCC_OFFSET)


def jpeg_approx(image: Tensor, quality: int) -> Tensor:
    """Differentiable JPEG stand-in.

    Per 8x8 block of each YCbCr channel: DCT, divide AC terms by the
    quality-scaled table, soft-round (x - sin(2 pi x) / 2 pi), multiply back,
    inverse DCT. DC terms pass through unquantised.
    """
    if not isinstance(image, Tensor):
        image = Tensor(image)
    return jpeg_approx_batch(image, [int(quality)] * image.shape[0])


def high_frequency_energy(image: np.ndarray) -> float:
    """Sum of squared non-DC block-DCT coefficients (pixel scale 0..255)."""
    img = np.asarray(image, dtype=np.float64)
    d = _block_dct(img.shape[-1])
    coeffs = d @ (img * 255.0) @ d.T
    return float(np.sum(coeffs**2 * (1.0 - _dc_mask(img.shape[-1]))))


# --------------------------------------------------------------------------
# full channel


@lru_cache(maxsize=64)
def box_blur_matrix(n: int, k: int) -> np.ndarray:
    """(n, n) moving-average operator of width k with edge replication."""
    m = np.zeros((n, n))
    r = k // 2
    for i in range(n):
        idx = np.clip(np.arange(i - r, i + r + 1), 0, n - 1)
        np.add.at(m[i], idx, 1.0 / k)
    return m


@dataclass
class DrawnParams:
    homography: np.ndarray
    blur: int
    brightness: float
    contrast: float
    sigma: float
    quality: int
    noise: np.ndarray


def draw_params(spec: CorruptionSpec, rng: np.random.Generator, shape: Tuple[int, int, int]) -> DrawnParams:
    """Draw every stage's random parameters, enabled or not, so that toggling a
    stage leaves the other stages' draws unchanged."""
    hmat = sample_homography(spec, rng)
    blur = int(rng.choice(np.asarray(spec.blur_kernel_sizes)))
    brightness = float(rng.uniform(*spec.brightness_range))
    contrast = float(rng.uniform(*spec.contrast_range))
    sigma = float(rng.uniform(*spec.noise_sigma_range))
    q_lo, q_hi = spec.jpeg_quality_range
    quality = int(rng.integers(q_lo, q_hi + 1))
    noise = rng.standard_normal(shape)
    return DrawnParams(hmat, blur, brightness, contrast, sigma, quality, noise)


def apply_corruption(
    image: Tensor,
    spec: CorruptionSpec,
    rng: np.random.Generator,
    differentiable: bool = True,
    drawn: Optional[List[DrawnParams]] = None,
) -> Tensor:
    """warp -> blur -> brightness/contrast -> noise -> jpeg -> clamp to [0, 1].

    Random parameters are drawn independently per batch item. Disabled stages
    are skipped. With ``differentiable=False`` the input is detached first so
    nothing is recorded.
    """
    spec.validate()
    if not isinstance(image, Tensor):
        image = Tensor(image)
    if not differentiable:
        image = image.detach()
    n, c, h, w = image.shape
    if drawn is None:
        drawn = [draw_params(spec, rng, (c, h, w)) for _ in range(n)]
    if not spec.enabled:
        return image

    x = image
    if spec.enable_warp and any(not np.array_equal(p.homography, np.eye(3)) for p in drawn):
        grid = np.concatenate([homography_grid(p.homography, h, w) for p in drawn])
        x = ad.bilinear_sample(x, ad.constant(grid))
    if spec.enable_blur:
        sizes = [p.blur for p in drawn]
        if len(set(sizes)) == 1:
            if sizes[0] > 1:
                mh, mw = box_blur_matrix(h, sizes[0]), box_blur_matrix(w, sizes[0])
                x = ad.resample(x, mh, mw)
        else:
            mh = np.stack([box_blur_matrix(h, k) for k in sizes])[:, None]
            mw = np.stack([box_blur_matrix(w, k) for k in sizes])[:, None]
            x = ad.resample(x, mh, mw)
    if spec.enable_color:
        gain = np.stack([np.full((c, h, w), p.contrast) for p in drawn])
        shift = np.stack([np.full((c, h, w), 0.5 * (1.0 - p.contrast) + p.brightness) for p in drawn])
        x = ad.add(ad.mul(x, ad.constant(gain)), ad.constant(shift))
    if spec.enable_noise:
        noise = np.stack([p.sigma * p.noise for p in drawn])
        x = ad.add(x, ad.constant(noise))
    if spec.enable_jpeg:
        x = jpeg_approx_batch(x, [p.quality for p in drawn])
    return ad.clamp(x, 0.0, 1.0)
