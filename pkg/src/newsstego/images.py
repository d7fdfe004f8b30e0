"""Image loading/saving and a procedural image corpus for offline training."""
from __future__ import annotations

from pathlib import Path
from typing import List, Union

import numpy as np
from PIL import Image

from .errors import EmptyDataset, UnreadableImage

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff", ".webp")


def load_image(path: Union[str, Path], size: int = None) -> np.ndarray:
    """Read an image as a float (3, H, W) array in [0, 1] (value / 255).

    With ``size`` the image is resized to size x size (bicubic).
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if size is not None and im.size != (size, size):
                im = im.resize((size, size), Image.BICUBIC)
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except (OSError, ValueError) as exc:
        raise UnreadableImage(f"cannot read image {path}: {exc}") from exc
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(3, H, W) float in [0, 1] -> (H, W, 3) uint8, rounding to nearest."""
    arr = np.clip(np.asarray(image), 0.0, 1.0)
    if arr.ndim == 4:
        arr = arr[0]
    return np.round(arr.transpose(1, 2, 0) * 255.0).astype(np.uint8)


def save_png(image: np.ndarray, path: Union[str, Path]) -> None:
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def list_images(directory: Union[str, Path]) -> List[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise EmptyDataset(f"{d} is not a directory")
    return sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_dataset(directory: Union[str, Path], size: int) -> np.ndarray:
    """All images of a directory, sorted by name, as an (N, 3, size, size) array."""
    paths = list_images(directory)
    if not paths:
        raise EmptyDataset(f"no images found in {directory}")
    return np.stack([load_image(p, size) for p in paths])


# --------------------------------------------------------------------------
# procedural corpus


def _smooth_field(rng: np.random.Generator, size: int, cells: int) -> np.ndarray:
    coarse = rng.uniform(0.0, 1.0, size=(cells + 1, cells + 1))
    xs = np.linspace(0, cells, size)
    i0 = np.minimum(xs.astype(int), cells - 1)
    t = xs - i0
    t = t * t * (3 - 2 * t)
    rows = coarse[i0] * (1 - t)[:, None] + coarse[i0 + 1] * t[:, None]
    return rows[:, i0] * (1 - t)[None, :] + rows[:, i0 + 1] * t[None, :]


def synthetic_image(rng: np.random.Generator, size: int) -> np.ndarray:
    """A photo-like test card: smooth colour background, a few flat or
    textured shapes, stripes and mild sensor noise. Returns (3, size, size)."""
    yy, xx = np.mgrid[0:size, 0:size] / max(size - 1, 1)
    base = rng.uniform(0.15, 0.85, size=3)
    tint = rng.uniform(-0.3, 0.3, size=3)
    field = _smooth_field(rng, size, int(rng.integers(2, 6)))
    img = base[:, None, None] + tint[:, None, None] * (field[None] - 0.5) * 2
    for _ in range(int(rng.integers(2, 7))):
        colour = rng.uniform(0.0, 1.0, size=3)
        kind = rng.integers(0, 3)
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        r = rng.uniform(0.08, 0.35)
        if kind == 0:
            mask = (xx - cx) ** 2 + (yy - cy) ** 2 < r**2
        elif kind == 1:
            mask = (np.abs(xx - cx) < r) & (np.abs(yy - cy) < r * rng.uniform(0.3, 1.0))
        else:
            angle = rng.uniform(0, np.pi)
            freq = rng.uniform(4, 14)
            stripes = np.sin((xx * np.cos(angle) + yy * np.sin(angle)) * freq * 2 * np.pi) > 0
            mask = stripes & ((xx - cx) ** 2 + (yy - cy) ** 2 < (1.5 * r) ** 2)
        alpha = rng.uniform(0.5, 1.0)
        img = np.where(mask[None], (1 - alpha) * img + alpha * colour[:, None, None], img)
    img = img + rng.normal(0.0, rng.uniform(0.0, 0.02), size=img.shape)
    return np.clip(img, 0.0, 1.0)


def synthetic_corpus(n: int, size: int, seed: int) -> np.ndarray:
    """``n`` procedural images, deterministic in ``seed``; (n, 3, size, size)."""
    rng = np.random.default_rng(seed)
    return np.stack([synthetic_image(rng, size) for _ in range(n)])


def write_corpus(directory: Union[str, Path], n: int, size: int, seed: int) -> List[Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(synthetic_corpus(n, size, seed)):
        p = d / f"img_{i:04d}.png"
        save_png(img, p)
        paths.append(p)
    return paths
