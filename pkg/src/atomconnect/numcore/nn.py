"""Tiny module system: named parameter trees over DiffArray leaves."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import DiffArray, dropout, gelu, silu, swapaxes, take_rows


class Module:
    """Parameters are DiffArray attributes with ``requires_grad``; children are
    Module attributes or lists of Modules. Names follow attribute order."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, DiffArray]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            full = f"{prefix}{name}"
            if isinstance(value, DiffArray) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, list):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> dict[str, DiffArray]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = self.parameters()
        missing = set(params) - set(state)
        if strict and missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data[...] = arr


def param(data) -> DiffArray:
    return DiffArray(data, requires_grad=True)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator,
                 bias: bool = True, scale: float = 1.0):
        self.weight = param(rng.normal(0.0, scale / np.sqrt(n_in), size=(n_in, n_out)))
        self.bias = param(np.zeros(n_out)) if bias else None

    def __call__(self, x: DiffArray) -> DiffArray:
        out = x @ self.weight
        return out + self.bias if self.bias is not None else out


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = param(np.ones(dim))
        self.bias = param(np.zeros(dim))
        self._eps = eps

    def __call__(self, x: DiffArray) -> DiffArray:
        return ops.layer_norm(x, self.gain, self.bias, self._eps)


class Embedding(Module):
    def __init__(self, count: int, dim: int, rng: np.random.Generator, scale: float = 1.0):
        self.table = param(rng.normal(0.0, scale, size=(count, dim)))

    def __call__(self, ids) -> DiffArray:
        return take_rows(self.table, ids)


_ACTIVATIONS = {"silu": silu, "gelu": gelu}


class MLP(Module):
    """Linear -> SiLU (or GELU) -> (dropout) -> Linear."""

    def __init__(self, n_in: int, n_hidden: int, n_out: int, rng: np.random.Generator,
                 out_scale: float = 1.0, dropout: float = 0.0, activation: str = "silu"):
        self.fc1 = Linear(n_in, n_hidden, rng)
        self.fc2 = Linear(n_hidden, n_out, rng, scale=out_scale)
        self._dropout = dropout
        self._act = _ACTIVATIONS[activation]

    def __call__(self, x: DiffArray, rng: np.random.Generator | None = None) -> DiffArray:
        h = self._act(self.fc1(x))
        h = dropout(h, self._dropout, rng)
        return self.fc2(h)


class MultiHeadAttention(Module):
    """Batched multi-head attention on (B, L, D) inputs.

    ``key_mask`` is (B, Lk) per-key or (B, Lq, Lk) per query/key pair. The
    last attention weights are kept on ``_weights`` for inspection.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, kv_dim: int | None = None):
        if dim % heads:
            raise ValueError(f"width {dim} not divisible by {heads} heads")
        kv_dim = kv_dim or dim
        self.q = Linear(dim, dim, rng)
        self.k = Linear(kv_dim, dim, rng)
        self.v = Linear(kv_dim, dim, rng)
        self.out = Linear(dim, dim, rng)
        self._heads = heads
        self._weights: np.ndarray | None = None

    def _split(self, x: DiffArray) -> DiffArray:
        b, n, d = x.shape
        return swapaxes(x.reshape(b, n, self._heads, d // self._heads), 1, 2)

    def __call__(self, x: DiffArray, context: DiffArray, key_mask=None) -> DiffArray:
        b, n, d = x.shape
        mask = None
        if key_mask is not None:
            mask = np.asarray(key_mask, dtype=bool)
            mask = mask[:, None, None, :] if mask.ndim == 2 else mask[:, None, :, :]
        out, w = ops.scaled_dot_attention(self._split(self.q(x)), self._split(self.k(context)),
                                          self._split(self.v(context)), mask, return_weights=True)
        self._weights = w.data
        return self.out(swapaxes(out, 1, 2).reshape(b, n, d))
