"""Small layer library on top of the tensor primitives.

Layers own their parameters as :class:`~ifasnet.tensor.Tensor` attributes and
expose them through :meth:`Module.named_parameters`. The recurrent layers are
unrolled from primitive ops so gradient checks cover them end to end.
"""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, val in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def num_params(self) -> int:
        return int(np.sum([p.size for p in self.parameters()]))


def param(arr) -> Tensor:
    return Tensor(arr, requires_grad=True)


def uniform(rng: np.random.Generator, shape, bound: float) -> Tensor:
    return param(rng.uniform(-bound, bound, size=shape))


def orthogonal(rng: np.random.Generator, n: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class Linear(Module):
    """``y = x @ weight + bias`` over the last axis."""

    def __init__(self, rng, d_in: int, d_out: int, bias: bool = True):
        self.weight = uniform(rng, (d_in, d_out), 1.0 / np.sqrt(d_in))
        self.bias = param(np.zeros(d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-8):
        self.gain = param(np.ones(dim))
        self.shift = param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        xc = x - T.mean(x, axis=-1, keepdims=True)
        var = T.mean(xc * xc, axis=-1, keepdims=True)
        return xc / T.sqrt(var + self.eps) * self.gain + self.shift


class LSTM(Module):
    """Single-direction LSTM over ``(batch, time, features)``.

    Gate order in the fused weights is input, forget, output, cell.
    """

    def __init__(self, rng, d_in: int, hidden: int):
        bound = 1.0 / np.sqrt(hidden)
        self.w_in = uniform(rng, (d_in, 4 * hidden), bound)
        self.w_rec = param(np.concatenate([orthogonal(rng, hidden) for _ in range(4)], axis=1))
        self.bias = param(np.zeros(4 * hidden))
        self.hidden = hidden

    def __call__(self, x: Tensor, reverse: bool = False) -> Tensor:
        H = self.hidden
        n_steps = x.shape[1]
        proj = T.matmul(x, self.w_in) + self.bias  # (B, T, 4H)
        order = range(n_steps - 1, -1, -1) if reverse else range(n_steps)
        h = c = None
        outs = []
        for t in order:
            gates = proj[:, t]
            if h is not None:
                gates = gates + T.matmul(h, self.w_rec)
            sg = T.sigmoid(gates[:, :3 * H])
            g = T.tanh(gates[:, 3 * H:])
            i, f, o = sg[:, :H], sg[:, H:2 * H], sg[:, 2 * H:]
            c = i * g if c is None else f * c + i * g
            h = o * T.tanh(c)
            outs.append(h)
        if reverse:
            outs.reverse()
        return T.stack(outs, axis=1)


class BLSTM(Module):
    """Bidirectional LSTM; output width is ``2 * hidden``."""

    def __init__(self, rng, d_in: int, hidden: int):
        self.fwd = LSTM(rng, d_in, hidden)
        self.bwd = LSTM(rng, d_in, hidden)

    def __call__(self, x: Tensor) -> Tensor:
        return T.concat([self.fwd(x), self.bwd(x, reverse=True)], axis=-1)
