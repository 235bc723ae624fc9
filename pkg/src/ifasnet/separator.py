"""DPRNN filter estimator with transform-average-concatenate channel fusion."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import BLSTM, LayerNorm, Linear, Module
from .tensor import ShapeError, Tensor

FEATURE_KINDS = ("tncc", "fncc")


@dataclass(frozen=True)
class SeparatorConfig:
    miso: bool = False
    implicit: bool = False
    feature_kind: str = "tncc"
    context: bool = False
    n_sources: int = 2
    n_blocks: int = 2
    hidden: int = 64
    feature_dim: int = 64
    chunk_len: int = 24

    def __post_init__(self):
        if self.feature_kind not in FEATURE_KINDS:
            raise ValueError(f"feature_kind must be one of {FEATURE_KINDS}")
        if self.implicit and not self.miso:
            raise ValueError("implicit filtering is only defined for the reference channel (miso=True)")
        if self.context and not self.implicit:
            raise ValueError("context-aware filtering requires implicit filtering")
        if self.chunk_len < 2:
            raise ValueError("chunk_len must be at least 2")


def segment_chunks(seq: Tensor, chunk_len: int) -> Tensor:
    """``(M, T, D) -> (M, n_chunks, chunk_len, D)`` with 50% chunk overlap.

    ``n_chunks = ceil(T / hop)`` with ``hop = chunk_len // 2``; the tail is
    zero-padded.
    """
    if chunk_len < 2:
        raise ValueError("chunk_len must be at least 2")
    seq = T.as_tensor(seq)
    M, n, D = seq.shape
    if n < 1:
        raise ValueError("sequence must contain at least one frame")
    hop = chunk_len // 2
    n_chunks = math.ceil(n / hop)
    total = (n_chunks - 1) * hop + chunk_len
    x = T.transpose(T.pad(seq, ((0, 0), (0, total - n), (0, 0))), (0, 2, 1))
    return T.transpose(T.unfold(x, chunk_len, hop), (0, 2, 3, 1))


def merge_chunks(chunks: Tensor, length: int) -> Tensor:
    """Inverse of :func:`segment_chunks`: average overlapping chunk copies."""
    chunks = T.as_tensor(chunks)
    M, n_chunks, K, D = chunks.shape
    hop = K // 2
    counts = T._fold_np(np.ones((n_chunks, K)), hop, length)
    x = T.fold(T.transpose(chunks, (0, 3, 1, 2)), hop, length)  # (M, D, length)
    return T.transpose(x * (1.0 / counts), (0, 2, 1))


class TAC(Module):
    """Transform each channel, average across channels, concatenate, project."""

    def __init__(self, rng, dim: int, hidden: int):
        self.transform = Linear(rng, dim, hidden)
        self.average = Linear(rng, hidden, hidden)
        self.concat = Linear(rng, 2 * hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        h = T.tanh(self.transform(x))  # (M, ..., H)
        M = x.shape[0]
        pooled = T.reshape(T.sorted_sum(h, 0), (1,) + h.shape[1:]) * (1.0 / M)
        avg = T.tanh(self.average(pooled))
        avg = avg * np.ones((M,) + (1,) * (x.ndim - 1))
        return x + T.tanh(self.concat(T.concat([h, avg], axis=-1)))


class PathRNN(Module):
    """BLSTM along one axis with projection, normalization and residual."""

    def __init__(self, rng, dim: int, hidden: int):
        self.rnn = BLSTM(rng, dim, hidden)
        self.proj = Linear(rng, 2 * hidden, dim)
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor) -> Tensor:
        return x + self.norm(self.proj(self.rnn(x)))


class DPRNNBlock(Module):
    def __init__(self, rng, dim: int, hidden: int):
        self.intra = PathRNN(rng, dim, hidden)
        self.inter = PathRNN(rng, dim, hidden)
        self.tac = TAC(rng, dim, hidden)

    def __call__(self, x: Tensor) -> Tensor:
        M, n, K, D = x.shape
        x = T.reshape(self.intra(T.reshape(x, (M * n, K, D))), (M, n, K, D))
        xt = T.reshape(T.transpose(x, (0, 2, 1, 3)), (M * K, n, D))
        xt = T.reshape(self.inter(xt), (M, K, n, D))
        x = T.transpose(xt, (0, 2, 1, 3))
        return self.tac(x)


# sigmoid(-4) ~ 0.018: waveform filters start with low gain while their
# weights stay at unit scale, where fixed-size Adam steps are small
GATE_BIAS_INIT = -4.0


class FilterHead(Module):
    """Per-source output layer; gated (tanh * sigmoid) for waveform filters."""

    def __init__(self, rng, dim: int, out_dim: int, gated: bool):
        self.out = Linear(rng, dim, out_dim)
        self.gate = Linear(rng, dim, out_dim) if gated else None
        if gated:
            self.gate.bias.data[:] = GATE_BIAS_INIT

    def __call__(self, x: Tensor) -> Tensor:
        if self.gate is None:
            return self.out(x)
        return T.tanh(self.out(x)) * T.sigmoid(self.gate(x))


class Separator(Module):
    def __init__(self, rng, cfg: SeparatorConfig, input_dim: int, filter_dim: int):
        self.cfg = cfg
        self.input_dim = input_dim
        self.filter_dim = filter_dim
        self.proj = Linear(rng, input_dim, cfg.feature_dim, bias=False)
        self.block = [DPRNNBlock(rng, cfg.feature_dim, cfg.hidden) for _ in range(cfg.n_blocks)]
        self.head = [FilterHead(rng, cfg.feature_dim, filter_dim, gated=not cfg.implicit)
                     for _ in range(cfg.n_sources)]

    def __call__(self, features: Tensor, ref: int = 0) -> Tensor:
        """``(M, T, input_dim) -> (n_sources, M', T, filter_dim)``; ``M' = 1`` for MISO."""
        features = T.as_tensor(features)
        if features.ndim != 3 or features.shape[-1] != self.input_dim:
            raise ShapeError(
                f"separator expects (M, T, {self.input_dim}) features, got {features.shape}")
        M, n_frames, _ = features.shape
        x = segment_chunks(self.proj(features), self.cfg.chunk_len)
        for block in self.block:
            x = block(x)
        x = merge_chunks(x, n_frames)  # (M, T, D)
        if self.cfg.miso:
            x = x[ref:ref + 1]
        return T.stack([head(x) for head in self.head], axis=0)
