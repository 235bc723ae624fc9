"""Channel-wise encoders/decoder, cross-channel NCC features, context codec.

Shapes use ``M`` channels, ``T`` frames, ``L`` frame length, ``W`` sample
context, ``C`` feature context and ``N`` latent width.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .framing import ContextFrameSet, FrameSet
from .nn import BLSTM, Linear, Module
from .tensor import ShapeError, Tensor

EPS = 1e-8


def _frames(x) -> Tensor:
    if isinstance(x, (FrameSet, ContextFrameSet)):
        x = x.frames
    return T.as_tensor(x)


def _linear_map(x: Tensor, weight: Tensor, what: str) -> Tensor:
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(
            f"{what}: frame length {x.shape[-1]} does not match weight rows {weight.shape[0]}")
    return T.matmul(x, weight)


def encode_context_frames(ctx, w_ctx: Tensor) -> Tensor:
    """Linear, bias-free projection of ``(M, T, L+2W)`` context frames to ``N``."""
    return _linear_map(_frames(ctx), w_ctx, "encode_context_frames")


def encode_center_frames(frames, w_center: Tensor) -> Tensor:
    return _linear_map(_frames(frames), w_center, "encode_center_frames")


def decode_frames(z, u: Tensor) -> Tensor:
    """Map latent frames ``(..., T, N)`` back to waveform frames ``(..., T, L)``."""
    return _linear_map(T.as_tensor(z), u, "decode_frames")


def tncc(frames, ctx, ref: int = 0) -> Tensor:
    """Sample-level NCC between the reference center frame and every context window.

    Returns ``(M, T, 2W + 1)``; lag index ``W`` is zero delay.
    """
    y = _frames(frames)
    yc = _frames(ctx)
    L = y.shape[-1]
    if yc.shape[:2] != y.shape[:2] or yc.shape[-1] < L:
        raise ShapeError(f"tncc: frames {y.shape} incompatible with context frames {yc.shape}")
    y_ref = y[ref:ref + 1]  # (1, T, L)
    num = T.corr_valid(yc, y_ref)  # (M, T, 2W+1)
    ref_norm = T.l2norm(y_ref, axis=-1, keepdims=True)
    win_energy = T.corr_valid(yc * yc, np.ones(L))
    win_norm = T.sqrt(T.clamp_min(win_energy, 0.0))
    return num / T.clamp_min(ref_norm * win_norm, EPS)


def fncc(F: Tensor, ref: int = 0) -> Tensor:
    """Feature-level NCC: pairwise cosines of context rows vs the reference channel.

    ``F`` is ``(M, T, K, N)`` with ``K = 1 + 2C``; output is ``(M, T, K*K)``,
    flattened row-major with the reference-context index major.
    """
    F = T.as_tensor(F)
    if F.ndim != 4:
        raise ShapeError(f"fncc: expected (M, T, K, N), got {F.shape}")
    M, n_frames, K, _ = F.shape
    unit = F / T.clamp_min(T.l2norm(F, axis=-1, keepdims=True), EPS)
    gram = T.matmul(unit[ref:ref + 1], T.transpose(unit, (0, 1, 3, 2)))  # (M, T, K, K)
    return T.reshape(gram, (M, n_frames, K * K))


def count_ncc_multiplies(kind: str, L: int, W: int, C: int, N: int, M: int) -> int:
    if kind == "tncc":
        return L * (1 + 2 * W) * M
    if kind == "fncc":
        return N * (1 + 2 * C) ** 2 * M
    raise ValueError(f"unknown NCC kind {kind!r}")


def ncc_dim(kind: str, W: int, C: int) -> int:
    return 1 + 2 * W if kind == "tncc" else (1 + 2 * C) ** 2


class ContextEncoder(Module):
    """Squeeze a ``(B, K, N)`` context stack into one ``N``-vector per item."""

    def __init__(self, rng, n_feat: int, hidden: int):
        self.rnn1 = BLSTM(rng, n_feat, hidden)
        self.rnn2 = BLSTM(rng, 2 * hidden, hidden)
        self.proj = Linear(rng, 2 * hidden, n_feat)

    def __call__(self, F: Tensor) -> Tensor:
        h = self.rnn2(self.rnn1(F))
        return self.proj(T.mean(h, axis=1))


class ContextDecoder(Module):
    """Decode per-position filters from context rows plus the separator output."""

    def __init__(self, rng, n_feat: int, hidden: int):
        self.rnn1 = BLSTM(rng, 2 * n_feat, hidden)
        self.rnn2 = BLSTM(rng, 2 * hidden, hidden)
        self.proj = Linear(rng, 2 * hidden, n_feat)

    def __call__(self, F: Tensor, g: Tensor) -> Tensor:
        B, K, N = F.shape
        if g.shape != (B, N):
            raise ShapeError(f"context decoder: g has shape {g.shape}, expected {(B, N)}")
        g_rows = T.reshape(g, (B, 1, N)) * np.ones((1, K, 1))
        h = self.rnn2(self.rnn1(T.concat([F, g_rows], axis=-1)))
        return self.proj(h)


class MLPContextEncoder(Module):
    """Flatten-and-project alternative to :class:`ContextEncoder`."""

    def __init__(self, rng, n_feat: int, hidden: int, K: int):
        self.l1 = Linear(rng, K * n_feat, hidden)
        self.l2 = Linear(rng, hidden, n_feat)

    def __call__(self, F: Tensor) -> Tensor:
        B, K, N = F.shape
        return self.l2(T.tanh(self.l1(T.reshape(F, (B, K * N)))))


class MLPContextDecoder(Module):
    def __init__(self, rng, n_feat: int, hidden: int):
        self.l1 = Linear(rng, 2 * n_feat, hidden)
        self.l2 = Linear(rng, hidden, n_feat)

    def __call__(self, F: Tensor, g: Tensor) -> Tensor:
        B, K, N = F.shape
        g_rows = T.reshape(g, (B, 1, N)) * np.ones((1, K, 1))
        return self.l2(T.tanh(self.l1(T.concat([F, g_rows], axis=-1))))


def context_encode(F: Tensor, codec: Module) -> Tensor:
    """``(M, T, K, N) -> (M, T, N)`` through a context encoder."""
    M, n_frames, K, N = F.shape
    out = codec(T.reshape(F, (M * n_frames, K, N)))
    return T.reshape(out, (M, n_frames, N))


def context_decode(F_ref: Tensor, g: Tensor, codec: Module) -> Tensor:
    """``F_ref (T, K, N)``, ``g (S, T, N)`` -> filters ``(S, T, K, N)`` for S sources."""
    n_frames, K, N = F_ref.shape
    S = g.shape[0]
    F_rep = T.reshape(F_ref, (1, n_frames, K, N)) * np.ones((S, 1, 1, 1))
    out = codec(T.reshape(F_rep, (S * n_frames, K, N)), T.reshape(g, (S * n_frames, N)))
    return T.reshape(out, (S, n_frames, K, N))
