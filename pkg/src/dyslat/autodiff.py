"""Reverse-mode automatic differentiation over numpy arrays.

A `Tensor` wraps a float32/float64 ndarray and records the operations that
produced it; `Tensor.backward()` walks the recorded graph in reverse
topological order and accumulates gradients into every tensor created with
``requires_grad=True``.

Every tensor is finite-checked at construction, so an op receiving or
producing NaN/Inf fails immediately with `NonFiniteInput` instead of
propagating silently. Reductions accumulate in 64-bit even when the storage
dtype is float32.

Ops accept an optional leading batch axis wherever that is meaningful
(conv2d/maxpool2d take ``[C,H,W]`` or ``[B,C,H,W]``); unbatched in gives
unbatched out.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import NonFiniteInput, ShapeMismatch

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable graph recording inside the context (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteInput(
                f"tensor of shape {arr.shape} contains NaN/Inf entries"
            )
        self.data = arr
        self.requires_grad = requires_grad and _GRAD_ENABLED
        self.grad = np.zeros_like(arr) if self.requires_grad else None
        self._backward = None
        self._parents = ()

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data) if self.requires_grad else None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing ------------------------------------------------------

    def _accumulate(self, g: np.ndarray):
        g = np.asarray(g, dtype=self.data.dtype)
        if self.grad is None:
            self.grad = g.copy() if g.base is not None or g is self.data else g
        else:
            self.grad = self.grad + g

    def backward(self, grad: np.ndarray | None = None):
        """Accumulate d(self)/d(leaf) into every requires_grad leaf.

        `grad` seeds the output gradient; defaults to ones (use on scalars).
        """
        if grad is None:
            grad = np.ones_like(self.data)
        # Iterative topo sort: recursion would overflow on long decoder chains.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
                if node is not self and node._parents:
                    node.grad = None  # free intermediate gradients

    # -- operator sugar -------------------------------------------------------

    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(np.asarray(-1.0, dtype=self.data.dtype)))

    def __matmul__(self, other):
        return matmul(self, _as_tensor(other))

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 else shape[0])

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out.grad = None
        out._parents = tuple(p for p in parents if p.requires_grad)
        out._backward = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` over axes that were broadcast up from `shape`."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def parameter(data, rng_copy: bool = True) -> Tensor:
    """Create a trainable leaf tensor with an eagerly allocated gradient."""
    arr = np.array(data) if rng_copy else np.asarray(data)
    t = Tensor(arr)
    t.requires_grad = True
    t.grad = np.zeros_like(t.data)
    return t


# -- elementwise and linear algebra -------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward_fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out = a.data - b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), backward_fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward_fn(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward_fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; both operands must be at least 2-D (batched allowed)."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch(
            f"matmul needs >=2-D operands, got {a.data.shape} @ {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data

    def backward_fn(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return _make(out, (a, b), backward_fn)


def tanh(t: Tensor) -> Tensor:
    out = np.tanh(t.data)

    def backward_fn(g):
        t._accumulate(g * (1.0 - out * out))

    return _make(out, (t,), backward_fn)


def sigmoid(t: Tensor) -> Tensor:
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward_fn(g):
        t._accumulate(g * out * (1.0 - out))

    return _make(out, (t,), backward_fn)


def relu(t: Tensor) -> Tensor:
    out = np.maximum(t.data, 0.0)

    def backward_fn(g):
        t._accumulate(g * (t.data > 0))

    return _make(out, (t,), backward_fn)


def exp(t: Tensor) -> Tensor:
    out = np.exp(t.data)

    def backward_fn(g):
        t._accumulate(g * out)

    return _make(out, (t,), backward_fn)


def log(t: Tensor) -> Tensor:
    out = np.log(t.data)

    def backward_fn(g):
        t._accumulate(g / t.data)

    return _make(out, (t,), backward_fn)


def clip(t: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient is zero outside the open interval."""
    out = np.clip(t.data, lo, hi)

    def backward_fn(g):
        t._accumulate(g * ((t.data > lo) & (t.data < hi)))

    return _make(out, (t,), backward_fn)


def square(t: Tensor) -> Tensor:
    out = t.data * t.data

    def backward_fn(g):
        t._accumulate(g * 2.0 * t.data)

    return _make(out, (t,), backward_fn)


def sum_(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    # 64-bit accumulation regardless of storage dtype.
    out = t.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64)
    out = np.asarray(out, dtype=t.data.dtype)

    def backward_fn(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        t._accumulate(np.broadcast_to(g, t.data.shape))

    return _make(out, (t,), backward_fn)


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = t.data.size if axis is None else np.prod(
        [t.data.shape[a] for a in np.atleast_1d(axis)]
    )
    out = t.data.mean(axis=axis, keepdims=keepdims, dtype=np.float64)
    out = np.asarray(out, dtype=t.data.dtype)

    def backward_fn(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        t._accumulate(np.broadcast_to(g, t.data.shape) / n)

    return _make(out, (t,), backward_fn)


def reshape(t: Tensor, shape) -> Tensor:
    out = t.data.reshape(shape)

    def backward_fn(g):
        t._accumulate(np.asarray(g).reshape(t.data.shape))

    return _make(out, (t,), backward_fn)


def swapaxes(t: Tensor, a1: int, a2: int) -> Tensor:
    out = t.data.swapaxes(a1, a2)

    def backward_fn(g):
        t._accumulate(np.asarray(g).swapaxes(a1, a2))

    return _make(out, (t,), backward_fn)


def getitem(t: Tensor, idx) -> Tensor:
    out = t.data[idx]

    def backward_fn(g):
        gx = np.zeros_like(t.data)
        gx[idx] += g
        t._accumulate(gx)

    return _make(out, (t,), backward_fn)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return _make(out, tuple(tensors), backward_fn)


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)

    def backward_fn(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accumulate(np.take(g, i, axis=axis))

    return _make(out, tuple(tensors), backward_fn)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis` (max-subtraction)."""
    x = t.data
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    s = e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)

    def backward_fn(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        t._accumulate((g - dot) * s)

    return _make(s, (t,), backward_fn)


# -- structured ops ------------------------------------------------------------


def _as_batched(x: np.ndarray):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeMismatch(f"expected [C,H,W] or [B,C,H,W], got {x.shape}")


def conv2d(x: Tensor, kernel: Tensor, padding: str = "VALID") -> Tensor:
    """2-D convolution (cross-correlation), stride 1.

    x: [C_in,H,W] or [B,C_in,H,W]; kernel: [C_out,C_in,kh,kw].
    VALID shrinks each spatial axis by kernel-1; SAME zero-pads to preserve it.
    """
    if padding not in ("VALID", "SAME"):
        raise ValueError(f"padding must be VALID or SAME, got {padding!r}")
    if kernel.data.ndim != 4:
        raise ShapeMismatch(f"kernel must be [C_out,C_in,kh,kw], got {kernel.data.shape}")
    xb, squeeze = _as_batched(x.data)
    B, C, H, W = xb.shape
    C_out, C_in, kh, kw = kernel.data.shape
    if C != C_in:
        raise ShapeMismatch(f"input channels {C} != kernel C_in {C_in}")

    if padding == "SAME":
        pt, pl = (kh - 1) // 2, (kw - 1) // 2
        pb, pr = kh - 1 - pt, kw - 1 - pl
        xp = np.pad(xb, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    else:
        if H < kh or W < kw:
            raise ShapeMismatch(
                f"VALID conv needs spatial dims >= kernel {kh}x{kw}, got {H}x{W}"
            )
        pt = pl = 0
        xp = xb
    Hp, Wp = xp.shape[2], xp.shape[3]
    Ho, Wo = Hp - kh + 1, Wp - kw + 1

    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    # [B,C,Ho,Wo,kh,kw] -> [B, C*kh*kw, Ho*Wo]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(B, C * kh * kw, Ho * Wo)
    k2 = kernel.data.reshape(C_out, C * kh * kw)
    out = (k2[None] @ cols).reshape(B, C_out, Ho, Wo)
    if squeeze:
        out = out[0]

    def backward_fn(g):
        g = np.asarray(g)
        gb = g[None] if squeeze else g
        g2 = gb.reshape(B, C_out, Ho * Wo)
        if kernel.requires_grad:
            dk = np.einsum("bop,bkp->ok", g2, cols)
            kernel._accumulate(dk.reshape(kernel.data.shape))
        if x.requires_grad:
            dcols = (k2.T[None] @ g2).reshape(B, C, kh, kw, Ho, Wo)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + Ho, j : j + Wo] += dcols[:, :, i, j]
            dx = dxp[:, :, pt : pt + H, pl : pl + W] if padding == "SAME" else dxp
            x._accumulate(dx[0] if squeeze else dx)

    return _make(out, (x, kernel), backward_fn)


def maxpool2d(x: Tensor) -> Tensor:
    """2x2 max pooling, stride 2; odd trailing rows/cols are dropped.

    Gradient routes to the first occurrence (row-major within each window)
    of the maximum.
    """
    xb, squeeze = _as_batched(x.data)
    B, C, H, W = xb.shape
    if H < 2 or W < 2:
        raise ShapeMismatch(f"maxpool2d needs spatial dims >= 2, got {H}x{W}")
    Ho, Wo = H // 2, W // 2
    xc = xb[:, :, : 2 * Ho, : 2 * Wo]
    win = np.moveaxis(xc.reshape(B, C, Ho, 2, Wo, 2), 3, 4).reshape(B, C, Ho, Wo, 4)
    idx = win.argmax(axis=-1)  # first occurrence on ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        out = out[0]

    def backward_fn(g):
        g = np.asarray(g)
        gb = g[None] if squeeze else g
        gwin = np.zeros((B, C, Ho, Wo, 4), dtype=xb.dtype)
        np.put_along_axis(gwin, idx[..., None], gb[..., None], axis=-1)
        gx = np.zeros_like(xb)
        gx[:, :, : 2 * Ho, : 2 * Wo] = np.moveaxis(
            gwin.reshape(B, C, Ho, Wo, 2, 2), 4, 3
        ).reshape(B, C, 2 * Ho, 2 * Wo)
        x._accumulate(gx[0] if squeeze else gx)

    return _make(out, (x,), backward_fn)
