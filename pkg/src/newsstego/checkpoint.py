"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"NISCKPT1"
    u32 n_meta, then n_meta x (u32 len, utf-8 "key=value")
    u32 n_tensors, then per tensor:
        u32 name_len, utf-8 name, u32 ndim, ndim x u64 dims, prod(dims) x f64
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from .autodiff import Tensor
from .errors import BadMagic, CorruptTensor, VersionUnsupported
from .net import FORMAT_VERSION, NetConfig, StegoParams

MAGIC = b"NISCKPT1"


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def to_bytes(params: StegoParams) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    meta = params.config.to_dict()
    buf.write(struct.pack("<I", len(meta)))
    for key in sorted(meta):
        buf.write(_pack_str(f"{key}={json.dumps(meta[key])}"))
    buf.write(struct.pack("<I", len(params.weights)))
    for name, t in params.weights.items():
        buf.write(_pack_str(name))
        buf.write(struct.pack("<I", t.data.ndim))
        buf.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
        buf.write(t.data.astype("<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(params: StegoParams, path: Union[str, Path]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(params))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptTensor(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        try:
            return self.take(self.u32()).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptTensor(f"bad string in checkpoint: {exc}") from None


def from_bytes(data: bytes) -> StegoParams:
    r = _Reader(data)
    if len(data) < len(MAGIC) or r.take(len(MAGIC)) != MAGIC:
        raise BadMagic("not a NISCKPT1 checkpoint")
    meta = {}
    for _ in range(r.u32()):
        key, _, val = r.text().partition("=")
        meta[key] = json.loads(val)
    version = int(meta.get("version", -1))
    if version != FORMAT_VERSION:
        raise VersionUnsupported(f"checkpoint version {version}, expected {FORMAT_VERSION}")
    config = NetConfig.from_dict(meta)
    weights = {}
    for _ in range(r.u32()):
        name = r.text()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(shape)
        weights[name] = Tensor(arr)
    if r.pos != len(data):
        raise CorruptTensor(f"{len(data) - r.pos} trailing bytes after last tensor")
    params = StegoParams(config, weights)
    _check_layout(params)
    return params


def _check_layout(params: StegoParams) -> None:
    from .net import _layout

    expected = _layout(params.config)
    if set(expected) != set(params.weights):
        missing = sorted(set(expected) - set(params.weights))
        raise CorruptTensor(f"checkpoint tensors do not match config (missing {missing[:3]})")
    for name, (shape, _, _) in expected.items():
        if params.weights[name].shape != tuple(shape):
            raise CorruptTensor(f"{name}: shape {params.weights[name].shape}, expected {shape}")


def load_checkpoint(path: Union[str, Path]) -> StegoParams:
    return from_bytes(Path(path).read_bytes())
