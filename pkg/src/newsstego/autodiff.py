"""Minimal reverse-mode automatic differentiation over numpy arrays.

Tensors wrap float64 ``ndarray`` values. Primitive applications are recorded
on the active :class:`Tape` whenever at least one input requires a gradient;
``Tape.backward`` walks the recording in reverse and accumulates gradients.

Broadcasting is deliberately limited to scalar tensors (size 1) in the
binary elementwise primitives. Everything else needs explicit shapes.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    DetachedLoss,
    NonDeterministicFunction,
    NonFiniteOutput,
    NonScalarLoss,
    ShapeMismatch,
    UnknownPrimitive,
)

__all__ = [
    "Tensor",
    "Tape",
    "PRIMITIVES",
    "forward_primitive",
    "backward",
    "grad_check",
    "tensor",
    "constant",
]


class Tensor:
    """An n-dimensional float64 array that may take part in gradient recording."""

    __slots__ = ("data", "requires_grad", "grad", "_producer", "__weakref__")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = (
            np.zeros_like(self.data) if self.requires_grad else None
        )
        self._producer: Optional[_Node] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        if self.requires_grad:
            self.grad = np.zeros_like(self.data)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # arithmetic sugar; python floats become scalar constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.array(float(x)))


# --------------------------------------------------------------------------
# tape


class _Node:
    __slots__ = ("kind", "inputs", "output", "saved", "backward_fn")

    def __init__(self, kind, inputs, output, saved, backward_fn):
        self.kind = kind
        self.inputs = inputs
        self.output = output
        self.saved = saved
        self.backward_fn = backward_fn


_ACTIVE: List["Tape"] = []


class Tape:
    """Ordered record of primitive applications.

    Nodes are appended as they execute, so the list is already topologically
    sorted. Use as a context manager::

        with Tape() as tape:
            loss = ...
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: List[_Node] = []

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _ACTIVE.remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, node: _Node) -> None:
        self.nodes.append(node)

    def reset(self) -> None:
        for node in self.nodes:
            node.output._producer = None
        self.nodes = []

    def backward(self, loss: Tensor, wrt: Optional[Sequence[Tensor]] = None):
        return backward(self, loss, wrt)


def _current_tape() -> Optional[Tape]:
    return _ACTIVE[-1] if _ACTIVE else None


def backward(
    tape: Tape, loss: Tensor, wrt: Optional[Sequence[Tensor]] = None
) -> Dict[Tensor, np.ndarray]:
    """Propagate d(loss)/d(.) back through ``tape``.

    Returns a map from every gradient-requiring leaf seen on the tape (plus
    anything listed in ``wrt``) to its gradient; each such leaf's ``.grad``
    is overwritten with the same value. The tape is reset afterwards.
    """
    if loss.size != 1:
        raise NonScalarLoss(f"loss must be scalar, got shape {loss.shape}")
    node = loss._producer
    if node is None or not any(n is node for n in reversed(tape.nodes)):
        raise DetachedLoss("loss was not produced by a primitive recorded on this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: Dict[int, Tensor] = {}
    for n in reversed(tape.nodes):
        g = grads.pop(id(n.output), None)
        for t in n.inputs:
            if t.requires_grad and t._producer is None:
                leaves[id(t)] = t
        if g is None:
            continue
        in_grads = n.backward_fn(n.saved, g)
        for t, gi in zip(n.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi

    result: Dict[Tensor, np.ndarray] = {}
    for t in list(leaves.values()) + list(wrt or []):
        g = grads.get(id(t))
        if g is None:
            g = np.zeros_like(t.data)
        result[t] = g
        if t.requires_grad:
            t.grad = g
    tape.reset()
    return result


# --------------------------------------------------------------------------
# primitive registry

# kind -> (forward(attrs, *arrays) -> (out, saved), backward(saved, gout) -> grads)
PRIMITIVES: Dict[str, Tuple[Callable, Callable]] = {}


def _primitive(kind: str):
    def register(cls):
        PRIMITIVES[kind] = (cls.forward, cls.backward)
        return cls

    return register


def forward_primitive(kind: str, inputs: Sequence[Tensor], attrs: Optional[dict] = None) -> Tensor:
    try:
        fwd, bwd = PRIMITIVES[kind]
    except KeyError:
        raise UnknownPrimitive(kind) from None
    attrs = dict(attrs) if attrs else {}
    attrs["_needs"] = tuple(t.requires_grad for t in inputs)
    out_data, saved = fwd(attrs, *[t.data for t in inputs])
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteOutput(f"{kind} produced NaN/Inf")
    needs = any(t.requires_grad for t in inputs)
    tape = _current_tape() if needs else None
    out = Tensor(out_data, requires_grad=False)
    if tape is not None:
        out.requires_grad = True
        node = _Node(kind, tuple(inputs), out, saved, bwd)
        out._producer = node
        tape.record(node)
    return out


def _check(cond: bool, msg: str) -> None:
    if not cond:
        raise ShapeMismatch(msg)


def _is_scalar(a: np.ndarray) -> bool:
    return a.size == 1


def _reduce_to(g: np.ndarray, like: np.ndarray) -> np.ndarray:
    if g.shape == like.shape:
        return g
    return np.asarray(g.sum()).reshape(like.shape)


def _binary_shapes(a, b, kind):
    _check(
        a.shape == b.shape or _is_scalar(a) or _is_scalar(b),
        f"{kind}: shapes {a.shape} and {b.shape} differ (only scalar broadcasting allowed)",
    )


# ---- elementwise ----------------------------------------------------------


@_primitive("add")
class _Add:
    @staticmethod
    def forward(attrs, a, b):
        _binary_shapes(a, b, "add")
        return a + b, (a, b)

    @staticmethod
    def backward(saved, g):
        a, b = saved
        return _reduce_to(g, a), _reduce_to(g, b)


@_primitive("sub")
class _Sub:
    @staticmethod
    def forward(attrs, a, b):
        _binary_shapes(a, b, "sub")
        return a - b, (a, b)

    @staticmethod
    def backward(saved, g):
        a, b = saved
        return _reduce_to(g, a), _reduce_to(-g, b)


@_primitive("mul")
class _Mul:
    @staticmethod
    def forward(attrs, a, b):
        _binary_shapes(a, b, "mul")
        return a * b, (a, b)

    @staticmethod
    def backward(saved, g):
        a, b = saved
        return _reduce_to(g * b, a), _reduce_to(g * a, b)


@_primitive("scale")
class _Scale:
    @staticmethod
    def forward(attrs, a):
        c = float(attrs["factor"])
        return a * c, c

    @staticmethod
    def backward(c, g):
        return (g * c,)


@_primitive("relu")
class _Relu:
    @staticmethod
    def forward(attrs, x):
        mask = x > 0
        return x * mask, mask

    @staticmethod
    def backward(mask, g):
        return (g * mask,)


@_primitive("sigmoid")
class _Sigmoid:
    @staticmethod
    def forward(attrs, x):
        y = _sigmoid(x)
        return y, y

    @staticmethod
    def backward(y, g):
        return (g * y * (1.0 - y),)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


@_primitive("tanh")
class _Tanh:
    @staticmethod
    def forward(attrs, x):
        y = np.tanh(x)
        return y, y

    @staticmethod
    def backward(y, g):
        return (g * (1.0 - y * y),)


@_primitive("clamp")
class _Clamp:
    # gradient is 1 strictly inside (lo, hi) and 0 elsewhere, boundaries included
    @staticmethod
    def forward(attrs, x):
        lo, hi = float(attrs.get("lo", 0.0)), float(attrs.get("hi", 1.0))
        _check(lo <= hi, "clamp: lo > hi")
        inside = (x > lo) & (x < hi)
        return np.clip(x, lo, hi), inside

    @staticmethod
    def backward(inside, g):
        return (g * inside,)


@_primitive("soft-round")
class _SoftRound:
    """x - sin(2 pi x) / (2 pi): a smooth stand-in for rounding."""

    @staticmethod
    def forward(attrs, x):
        return x - np.sin(2 * np.pi * x) / (2 * np.pi), x

    @staticmethod
    def backward(x, g):
        return (g * (1.0 - np.cos(2 * np.pi * x)),)


@_primitive("bce-logits")
class _BceLogits:
    """Elementwise binary cross-entropy on logits z with targets y."""

    @staticmethod
    def forward(attrs, z, y):
        _check(z.shape == y.shape, f"bce-logits: {z.shape} vs {y.shape}")
        out = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
        return out, (z, y)

    @staticmethod
    def backward(saved, g):
        z, y = saved
        return g * (_sigmoid(z) - y), -g * z


# ---- reductions / structure ----------------------------------------------


@_primitive("mean")
class _Mean:
    @staticmethod
    def forward(attrs, x):
        axis = attrs.get("axis")
        if axis is None:
            return np.asarray(x.mean()), (x.shape, None, x.size)
        axis = tuple(np.atleast_1d(axis))
        count = int(np.prod([x.shape[a] for a in axis]))
        return x.mean(axis=axis), (x.shape, axis, count)

    @staticmethod
    def backward(saved, g):
        shape, axis, count = saved
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / count, shape).copy(),)


@_primitive("sum")
class _Sum:
    @staticmethod
    def forward(attrs, x):
        axis = attrs.get("axis")
        if axis is None:
            return np.asarray(x.sum()), (x.shape, None)
        axis = tuple(np.atleast_1d(axis))
        return x.sum(axis=axis), (x.shape, axis)

    @staticmethod
    def backward(saved, g):
        shape, axis = saved
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)


@_primitive("reshape")
class _Reshape:
    @staticmethod
    def forward(attrs, x):
        try:
            return x.reshape(attrs["shape"]), x.shape
        except ValueError as exc:
            raise ShapeMismatch(str(exc)) from None

    @staticmethod
    def backward(shape, g):
        return (g.reshape(shape),)


@_primitive("transpose")
class _Transpose:
    @staticmethod
    def forward(attrs, x):
        axes = tuple(attrs["axes"])
        return np.ascontiguousarray(x.transpose(axes)), axes

    @staticmethod
    def backward(axes, g):
        return (g.transpose(np.argsort(axes)),)


@_primitive("concat-channels")
class _Concat:
    @staticmethod
    def forward(attrs, *xs):
        ref = xs[0].shape
        for x in xs[1:]:
            _check(
                x.ndim == len(ref) and x.shape[0] == ref[0] and x.shape[2:] == ref[2:],
                f"concat-channels: {x.shape} incompatible with {ref}",
            )
        splits = np.cumsum([x.shape[1] for x in xs])[:-1]
        return np.concatenate(xs, axis=1), splits

    @staticmethod
    def backward(splits, g):
        return tuple(np.split(g, splits, axis=1))


# ---- linear algebra -------------------------------------------------------


@_primitive("dense")
class _Dense:
    """x (N, in) @ w (in, out) + b (out,)."""

    @staticmethod
    def forward(attrs, x, w, b=None):
        _check(x.ndim == 2 and w.ndim == 2 and x.shape[1] == w.shape[0],
               f"dense: {x.shape} @ {w.shape}")
        out = x @ w
        if b is not None:
            _check(b.shape == (w.shape[1],), f"dense bias {b.shape}")
            out = out + b
        return out, (x, w, b is not None)

    @staticmethod
    def backward(saved, g):
        x, w, has_b = saved
        gx = g @ w.T
        gw = x.T @ g
        if has_b:
            return gx, gw, g.sum(axis=0)
        return gx, gw


@_primitive("matmul")
class _Matmul:
    """Batched a (..., m, k) @ b (..., k, n); either side may be 2-D."""

    @staticmethod
    def forward(attrs, a, b):
        _check(a.ndim >= 2 and b.ndim >= 2 and a.shape[-1] == b.shape[-2],
               f"matmul: {a.shape} @ {b.shape}")
        return a @ b, (a, b)

    @staticmethod
    def backward(saved, g):
        a, b = saved
        ga = g @ np.swapaxes(b, -1, -2)
        gb = np.swapaxes(a, -1, -2) @ g
        if ga.shape != a.shape:
            ga = ga.reshape((-1,) + a.shape).sum(axis=0)
        if gb.shape != b.shape:
            gb = gb.reshape((-1,) + b.shape).sum(axis=0)
        return ga, gb


@_primitive("resample")
class _Resample:
    """Separable linear map over the two trailing axes: Mh @ x @ Mw.T.

    Covers bilinear resizing, average pooling, edge padding and blockwise
    DCTs, all of which are fixed linear operators along rows and columns.
    """

    @staticmethod
    def forward(attrs, x):
        mh, mw = attrs["rows"], attrs["cols"]
        _check(x.ndim >= 2 and mh.shape[-1] == x.shape[-2] and mw.shape[-1] == x.shape[-1],
               f"resample: {x.shape} vs {mh.shape}, {mw.shape}")
        return mh @ x @ np.swapaxes(mw, -1, -2), (mh, mw)

    @staticmethod
    def backward(saved, g):
        mh, mw = saved
        return (np.swapaxes(mh, -1, -2) @ g @ mw,)


def _im2col(xt: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    """Channel-major padded input (C,N,Hp,Wp) -> columns (C*kh*kw, N*Ho*Wo)."""
    c, n = xt.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo))
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, -1)


def _pad_hw(x: np.ndarray, pad: int) -> np.ndarray:
    if not pad:
        return x
    out = np.zeros(x.shape[:-2] + (x.shape[-2] + 2 * pad, x.shape[-1] + 2 * pad))
    out[..., pad:-pad, pad:-pad] = x
    return out


@_primitive("conv2d")
class _Conv2d:
    """Cross-correlation, x (N,C,H,W) * w (O,C,kh,kw) [+ b (O,)], zero padding."""

    @staticmethod
    def forward(attrs, x, w, b=None):
        stride = int(attrs.get("stride", 1))
        pad = int(attrs.get("padding", 0))
        _check(stride >= 1 and pad >= 0, "conv2d: stride must be >= 1 and padding >= 0")
        _check(x.ndim == 4 and w.ndim == 4 and x.shape[1] == w.shape[1],
               f"conv2d: input {x.shape} vs kernel {w.shape}")
        n, c, h, wd = x.shape
        o, _, kh, kw = w.shape
        _check(h + 2 * pad >= kh and wd + 2 * pad >= kw, "conv2d: kernel larger than input")
        ho = (h + 2 * pad - kh) // stride + 1
        wo = (wd + 2 * pad - kw) // stride + 1
        xt = x.transpose(1, 0, 2, 3)
        if kh == kw == 1 and stride == 1 and pad == 0:
            cols = np.ascontiguousarray(xt).reshape(c, -1)
        else:
            cols = _im2col(_pad_hw(xt, pad), kh, kw, stride, ho, wo)
        out = w.reshape(o, -1) @ cols
        if b is not None:
            _check(b.shape == (o,), f"conv2d bias {b.shape}")
            out += b[:, None]
        out = out.reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
        needs = attrs.get("_needs", (True, True, True))
        saved = (cols, w, (n, c, h, wd), stride, pad, b is not None, needs[0])
        return np.ascontiguousarray(out), saved

    @staticmethod
    def backward(saved, g):
        cols, w, xshape, stride, pad, has_b, need_x = saved
        n, c, h, wd = xshape
        o, _, kh, kw = w.shape
        ho, wo = g.shape[2], g.shape[3]
        gt = g.transpose(1, 0, 2, 3)
        g2 = np.ascontiguousarray(gt).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(w.shape)
        gx = None
        if not need_x:
            pass
        elif kh == kw == 1 and stride == 1 and pad == 0:
            gx = (w.reshape(o, c).T @ g2).reshape(c, n, h, wd).transpose(1, 0, 2, 3)
        elif stride == 1 and pad <= min(kh, kw) - 1 and kh - 1 - pad == kw - 1 - pad:
            # full correlation of the output gradient with the flipped kernel
            q = kh - 1 - pad
            gcols = _im2col(_pad_hw(gt, q), kh, kw, 1, h, wd)
            wf = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, -1)
            gx = (wf @ gcols).reshape(c, n, h, wd).transpose(1, 0, 2, 3)
        else:
            dcols = (w.reshape(o, -1).T @ g2).reshape(c, kh, kw, n, ho, wo)
            gxt = np.zeros((c, n, h + 2 * pad, wd + 2 * pad))
            for i in range(kh):
                for j in range(kw):
                    gxt[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dcols[:, i, j]
            gx = gxt[:, :, pad:pad + h, pad:pad + wd].transpose(1, 0, 2, 3)
        if gx is not None:
            gx = np.ascontiguousarray(gx)
        if has_b:
            return gx, gw, g2.sum(axis=1)
        return gx, gw


@_primitive("transposed-upsample")
class _TransposedUpsample:
    """Transposed convolution with kernel == stride (non-overlapping taps).

    x (N,C,H,W), w (C,O,k,k) [, b (O,)] -> (N,O,kH,kW).
    """

    @staticmethod
    def forward(attrs, x, w, b=None):
        _check(x.ndim == 4 and w.ndim == 4 and x.shape[1] == w.shape[0] and w.shape[2] == w.shape[3],
               f"transposed-upsample: input {x.shape} vs kernel {w.shape}")
        n, c, h, wd = x.shape
        _, o, k, _ = w.shape
        # (N,H,W,C) @ (C, O*k*k)
        xt = x.transpose(0, 2, 3, 1).reshape(-1, c)
        y = (xt @ w.reshape(c, -1)).reshape(n, h, wd, o, k, k)
        out = y.transpose(0, 3, 1, 4, 2, 5).reshape(n, o, h * k, wd * k)
        if b is not None:
            _check(b.shape == (o,), f"transposed-upsample bias {b.shape}")
            out = out + b[None, :, None, None]
        return np.ascontiguousarray(out), (xt, w, x.shape, b is not None)

    @staticmethod
    def backward(saved, g):
        xt, w, xshape, has_b = saved
        n, c, h, wd = xshape
        _, o, k, _ = w.shape
        gy = g.reshape(n, o, h, k, wd, k).transpose(0, 2, 4, 1, 3, 5).reshape(-1, o * k * k)
        gw = (xt.T @ gy).reshape(w.shape)
        gx = (gy @ w.reshape(c, -1).T).reshape(n, h, wd, c).transpose(0, 3, 1, 2)
        if has_b:
            return gx, gw, g.sum(axis=(0, 2, 3))
        return gx, gw


@_primitive("bilinear-sample")
class _BilinearSample:
    """Sample x (N,C,H,W) at grid (N,Ho,Wo,2) of normalized (x, y) in [-1, 1].

    Corner-aligned convention: -1 maps to pixel 0 and +1 to pixel size-1.
    Out-of-range coordinates are clamped (border replication); the gradient
    with respect to a clamped coordinate is zero.
    """

    @staticmethod
    def forward(attrs, x, grid):
        _check(x.ndim == 4 and grid.ndim == 4 and grid.shape[-1] == 2 and grid.shape[0] == x.shape[0],
               f"bilinear-sample: input {x.shape} vs grid {grid.shape}")
        n, c, h, w = x.shape
        px_raw = (grid[..., 0] + 1.0) * 0.5 * (w - 1)
        py_raw = (grid[..., 1] + 1.0) * 0.5 * (h - 1)
        px = np.clip(px_raw, 0.0, w - 1)
        py = np.clip(py_raw, 0.0, h - 1)
        x0 = np.minimum(np.floor(px).astype(np.intp), max(w - 2, 0))
        y0 = np.minimum(np.floor(py).astype(np.intp), max(h - 2, 0))
        x1 = np.minimum(x0 + 1, w - 1)
        y1 = np.minimum(y0 + 1, h - 1)
        wx = px - x0
        wy = py - y0
        flat = x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
        base = (np.arange(n) * h * w)[:, None, None]
        i00 = base + y0 * w + x0
        i01 = base + y0 * w + x1
        i10 = base + y1 * w + x0
        i11 = base + y1 * w + x1
        v00, v01, v10, v11 = flat[i00], flat[i01], flat[i10], flat[i11]
        w00 = ((1 - wx) * (1 - wy))[..., None]
        w01 = (wx * (1 - wy))[..., None]
        w10 = ((1 - wx) * wy)[..., None]
        w11 = (wx * wy)[..., None]
        out = w00 * v00 + w01 * v01 + w10 * v10 + w11 * v11  # (N,Ho,Wo,C)
        inx = ((px_raw > 0) & (px_raw < w - 1)).astype(np.float64)
        iny = ((py_raw > 0) & (py_raw < h - 1)).astype(np.float64)
        saved = (x.shape, (i00, i01, i10, i11), (w00, w01, w10, w11),
                 (v00, v01, v10, v11), wx, wy, inx, iny)
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2)), saved

    @staticmethod
    def backward(saved, g):
        xshape, idx, wts, vals, wx, wy, inx, iny = saved
        n, c, h, w = xshape
        gt = g.transpose(0, 2, 3, 1)  # (N,Ho,Wo,C)
        gflat = np.zeros((n * h * w, c))
        for i, wt in zip(idx, wts):
            contrib = (wt * gt).reshape(-1, c)
            ii = i.reshape(-1)
            for ch in range(c):
                gflat[:, ch] += np.bincount(ii, weights=contrib[:, ch], minlength=n * h * w)
        gx = gflat.reshape(n, h, w, c).transpose(0, 3, 1, 2)
        v00, v01, v10, v11 = vals
        dpx = ((1 - wy)[..., None] * (v01 - v00) + wy[..., None] * (v11 - v10))
        dpy = ((1 - wx)[..., None] * (v10 - v00) + wx[..., None] * (v11 - v01))
        ggx = (dpx * gt).sum(-1) * inx * 0.5 * (w - 1)
        ggy = (dpy * gt).sum(-1) * iny * 0.5 * (h - 1)
        return gx, np.stack([ggx, ggy], axis=-1)


# --------------------------------------------------------------------------
# functional front-end


def add(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("add", [a, b])


def sub(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("sub", [a, b])


def mul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("mul", [a, b])


def scale(a: Tensor, factor: float) -> Tensor:
    return forward_primitive("scale", [a], {"factor": factor})


def relu(x: Tensor) -> Tensor:
    return forward_primitive("relu", [x])


def sigmoid(x: Tensor) -> Tensor:
    return forward_primitive("sigmoid", [x])


def tanh(x: Tensor) -> Tensor:
    return forward_primitive("tanh", [x])


def clamp(x: Tensor, lo: float = 0.0, hi: float = 1.0) -> Tensor:
    return forward_primitive("clamp", [x], {"lo": lo, "hi": hi})


def soft_round(x: Tensor) -> Tensor:
    return forward_primitive("soft-round", [x])


def bce_logits(z: Tensor, y: Tensor) -> Tensor:
    return forward_primitive("bce-logits", [z, y])


def mean(x: Tensor, axis=None) -> Tensor:
    return forward_primitive("mean", [x], {"axis": axis})


def sum_(x: Tensor, axis=None) -> Tensor:
    return forward_primitive("sum", [x], {"axis": axis})


def reshape(x: Tensor, shape) -> Tensor:
    return forward_primitive("reshape", [x], {"shape": tuple(shape)})


def transpose(x: Tensor, axes) -> Tensor:
    return forward_primitive("transpose", [x], {"axes": tuple(axes)})


def concat_channels(*xs: Tensor) -> Tensor:
    return forward_primitive("concat-channels", list(xs))


def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    return forward_primitive("dense", [x, w] + ([b] if b is not None else []))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return forward_primitive("matmul", [a, b])


def resample(x: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    return forward_primitive("resample", [x], {"rows": rows, "cols": cols})


def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    inputs = [x, w] + ([b] if b is not None else [])
    return forward_primitive("conv2d", inputs, {"stride": stride, "padding": padding})


def transposed_upsample(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    return forward_primitive("transposed-upsample", [x, w] + ([b] if b is not None else []))


def bilinear_sample(x: Tensor, grid: Tensor) -> Tensor:
    return forward_primitive("bilinear-sample", [x, grid])


# --------------------------------------------------------------------------
# finite-difference checking


def grad_check(
    f: Callable[[Tensor], Tensor],
    input: Tensor,
    eps: float = 1e-5,
    coords: Optional[Sequence[int]] = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``f`` maps a tensor to a scalar tensor. ``coords`` optionally restricts
    the comparison to a subset of flat indices (large inputs).
    Relative error per coordinate is |a - n| / max(1e-8, |a| + |n|).
    """
    if not 0 < eps <= 1e-2:
        raise ValueError("eps must lie in (0, 1e-2]")
    x0 = np.array(input.data, dtype=np.float64)

    def evaluate(values: np.ndarray) -> float:
        out = f(Tensor(values))
        if out.size != 1:
            raise NonScalarLoss(f"grad_check: f returned shape {out.shape}")
        return float(out.data.reshape(-1)[0])

    if evaluate(x0) != evaluate(x0):
        raise NonDeterministicFunction("two forward passes disagree")

    leaf = Tensor(x0.copy(), requires_grad=True)
    with Tape() as tape:
        out = f(leaf)
    if out._producer is None:
        analytic = np.zeros_like(x0)
    else:
        analytic = tape.backward(out, wrt=[leaf])[leaf]

    flat_idx = range(x0.size) if coords is None else coords
    worst = 0.0
    for k in flat_idx:
        xp = x0.copy().reshape(-1)
        xm = x0.copy().reshape(-1)
        xp[k] += eps
        xm[k] -= eps
        numeric = (evaluate(xp.reshape(x0.shape)) - evaluate(xm.reshape(x0.shape))) / (2 * eps)
        a = analytic.reshape(-1)[k]
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        worst = max(worst, err)
    return worst
