"""Neural layer primitives built on the autodiff engine.

Everything here works on single examples (the shapes the rest of the code
documents) and transparently on batches with one extra leading axis; batched
calls are what the trainer uses so the heavy lifting stays inside BLAS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, conv2d, maxpool2d  # re-exported  # noqa: F401
from .errors import BadProbability, EmptySequence, ShapeMismatch

ACTIVATIONS = ("linear", "tanh", "relu")


class ParamStore:
    """Named map from parameter path (e.g. "audio_enc/cnn1/kernel") to a
    trainable tensor with a same-shaped gradient."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = ad.parameter(np.asarray(value))
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def zero_grads(self):
        for t in self._params.values():
            t.zero_grad()

    def copy(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self._params.items():
            out.add(name, t.data.copy())
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self._params.items()}


def xavier_init(shape, magnitude: float = 2.24, seed=0, dtype=np.float64) -> Tensor:
    """Uniform init in [-b, b] with b = magnitude * sqrt(6 / (fan_in + fan_out)).

    fan for 2-D [in, out] weights is (in, out); for conv kernels
    [C_out, C_in, kh, kw] it is (C_in*kh*kw, C_out*kh*kw).
    """
    if magnitude <= 0:
        raise ValueError(f"magnitude must be positive, got {magnitude}")
    shape = tuple(int(s) for s in np.atleast_1d(shape)) if np.ndim(shape) else (int(shape),)
    if len(shape) == 0 or any(s <= 0 for s in shape):
        raise ShapeMismatch(f"cannot initialize tensor of shape {shape}")
    if len(shape) == 1:
        fan_in = fan_out = shape[0]
    elif len(shape) == 2:
        fan_in, fan_out = shape
    else:
        receptive = int(np.prod(shape[2:]))
        fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    bound = magnitude * np.sqrt(6.0 / (fan_in + fan_out))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return Tensor(rng.uniform(-bound, bound, size=shape).astype(dtype))


def dense(x: Tensor, weight: Tensor, bias: Tensor, activation: str = "linear") -> Tensor:
    """Affine transform then activation; x is [D] or [B,D], weight [D,units]."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if x.data.ndim not in (1, 2) or x.data.shape[-1] != weight.data.shape[0]:
        raise ShapeMismatch(
            f"dense: input {x.data.shape} incompatible with weight {weight.data.shape}"
        )
    squeeze = x.data.ndim == 1
    x2 = ad.reshape(x, (1, -1)) if squeeze else x
    out = ad.matmul(x2, weight) + bias
    if activation == "tanh":
        out = ad.tanh(out)
    elif activation == "relu":
        out = ad.relu(out)
    return ad.reshape(out, (-1,)) if squeeze else out


@dataclass
class GruParams:
    """Weights of one GRU layer: input, recurrent and bias terms per gate."""

    wz: Tensor
    uz: Tensor
    bz: Tensor
    wr: Tensor
    ur: Tensor
    br: Tensor
    wh: Tensor
    uh: Tensor
    bh: Tensor

    GATE_NAMES = ("wz", "uz", "bz", "wr", "ur", "br", "wh", "uh", "bh")

    @classmethod
    def init(cls, store: ParamStore, prefix: str, input_dim: int, hidden: int,
             magnitude: float, rng: np.random.Generator, dtype=np.float64) -> "GruParams":
        fields = {}
        for gate in ("z", "r", "h"):
            fields[f"w{gate}"] = store.add(
                f"{prefix}/W{gate}", xavier_init((input_dim, hidden), magnitude, rng, dtype).data)
            fields[f"u{gate}"] = store.add(
                f"{prefix}/U{gate}", xavier_init((hidden, hidden), magnitude, rng, dtype).data)
            fields[f"b{gate}"] = store.add(f"{prefix}/b{gate}", np.zeros(hidden, dtype=dtype))
        return cls(**fields)

    @classmethod
    def from_store(cls, store: ParamStore, prefix: str) -> "GruParams":
        return cls(
            wz=store[f"{prefix}/Wz"], uz=store[f"{prefix}/Uz"], bz=store[f"{prefix}/bz"],
            wr=store[f"{prefix}/Wr"], ur=store[f"{prefix}/Ur"], br=store[f"{prefix}/br"],
            wh=store[f"{prefix}/Wh"], uh=store[f"{prefix}/Uh"], bh=store[f"{prefix}/bh"],
        )


def gru_step(x: Tensor, h: Tensor, p: GruParams) -> Tensor:
    """One GRU update: z,r gates then tanh candidate with reset applied to the
    previous state before its recurrent matmul; h' = z*h + (1-z)*candidate."""
    z = ad.sigmoid(ad.matmul(x, p.wz) + ad.matmul(h, p.uz) + p.bz)
    r = ad.sigmoid(ad.matmul(x, p.wr) + ad.matmul(h, p.ur) + p.br)
    cand = ad.tanh(ad.matmul(x, p.wh) + ad.matmul(ad.mul(r, h), p.uh) + p.bh)
    one = Tensor(np.asarray(1.0, dtype=z.dtype))
    return ad.mul(z, h) + ad.mul(one - z, cand)


def gru_forward(inputs: Sequence[Tensor], hidden_size: int, params: GruParams,
                mask: np.ndarray | None = None) -> tuple[list[Tensor], Tensor]:
    """Run a GRU over a sequence of [D] (or [B,D]) tensors from a zero state.

    Returns the full output sequence and the final state. `mask`, when given,
    is a [T] or [T,B] 0/1 array; masked-off steps carry the previous state
    forward so the final state is the one at each row's last valid step.
    """
    if len(inputs) == 0:
        raise EmptySequence("gru_forward requires a non-empty input sequence")
    squeeze = inputs[0].data.ndim == 1
    batch = 1 if squeeze else inputs[0].data.shape[0]
    dtype = inputs[0].data.dtype
    h = Tensor(np.zeros((batch, hidden_size), dtype=dtype))
    outputs: list[Tensor] = []
    for t, x in enumerate(inputs):
        x2 = ad.reshape(x, (1, -1)) if squeeze else x
        if x2.data.shape[-1] != params.wz.data.shape[0]:
            raise ShapeMismatch(
                f"gru input dim {x2.data.shape[-1]} != weight rows {params.wz.data.shape[0]}"
            )
        h_new = gru_step(x2, h, params)
        if mask is not None:
            m = np.asarray(mask[t], dtype=dtype).reshape(-1, 1)
            keep = Tensor(m)
            hold = Tensor(1.0 - m)
            h_new = ad.mul(h_new, keep) + ad.mul(h, hold)
        h = h_new
        outputs.append(ad.reshape(h, (-1,)) if squeeze else h)
    return outputs, outputs[-1]


def dropout(x: Tensor, p: float, mode: str, seed=0) -> Tensor:
    """Inverted dropout: zero entries with prob p and scale survivors by
    1/(1-p) in train mode; identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise BadProbability(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return x
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mask = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return ad.mul(x, Tensor(mask))


def softmax(logits: Tensor) -> Tensor:
    """Stable softmax over the last axis; outputs positive and sum to 1."""
    if logits.data.shape[-1] < 1:
        raise EmptySequence("softmax needs at least one logit")
    return ad.softmax(logits, axis=-1)


def dot_product_attention(query: Tensor, keys: Tensor, values: Tensor,
                          key_mask: np.ndarray | None = None) -> tuple[Tensor, Tensor]:
    """Dot-product attention of one query over N key/value columns.

    query: [K] or [B,K]; keys/values: [K,N] or [B,K,N].
    Returns (context [V] or [B,V], weights [N] or [B,N]); weights sum to 1.
    `key_mask` ([N] or [B,N], 1 = attend) is an internal batching aid that
    zeroes attention on padded columns.
    """
    squeeze = query.data.ndim == 1
    q = ad.reshape(query, (1, -1)) if squeeze else query
    k = keys if keys.data.ndim == 3 else ad.reshape(keys, (1,) + keys.data.shape)
    v = values if values.data.ndim == 3 else ad.reshape(values, (1,) + values.data.shape)
    if k.data.shape[-1] == 0:
        raise EmptySequence("attention needs at least one key column")
    if q.data.shape[-1] != k.data.shape[-2]:
        raise ShapeMismatch(
            f"query dim {q.data.shape[-1]} != key row-dim {k.data.shape[-2]}"
        )
    if v.data.shape[-1] != k.data.shape[-1]:
        raise ShapeMismatch("keys and values must agree on the number of columns")
    q3 = ad.reshape(q, (q.data.shape[0], 1, q.data.shape[1]))
    scores = ad.matmul(q3, k)  # [B,1,N]
    if key_mask is not None:
        m = np.asarray(key_mask, dtype=scores.data.dtype)
        if m.ndim == 1:
            m = m[None]
        scores = scores + Tensor((m[:, None, :] - 1.0) * 1e30)
    weights = ad.softmax(scores, axis=-1)
    context = ad.matmul(v, ad.swapaxes(weights, -1, -2))  # [B,V,1]
    context = ad.reshape(context, (context.data.shape[0], context.data.shape[1]))
    weights = ad.reshape(weights, (weights.data.shape[0], weights.data.shape[2]))
    if squeeze:
        return ad.reshape(context, (-1,)), ad.reshape(weights, (-1,))
    return context, weights
