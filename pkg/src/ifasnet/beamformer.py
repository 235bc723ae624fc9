"""Apply estimated filters: waveform filter-and-sum or latent-space masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .features import decode_frames
from .framing import ContextFrameSet, FramingConfig, overlap_add, stack_feature_context
from .tensor import ShapeError, Tensor


@dataclass
class SeparatedOutput:
    waveforms: Tensor  # (n_sources, samples)
    latents: Tensor | None = None  # (n_sources, T, N) on the implicit path


def explicit_filter_and_sum(ctx, filters, ref: int = 0) -> Tensor:
    """Filter each context frame and sum over channels.

    ``ctx`` is ``(M, T, L+2W)``; ``filters`` is ``(S, M', T, 2W+1)``. With
    ``M' = 1`` only the reference channel is filtered. Returns ``(S, T, L)``.
    Filtering is a valid-mode sliding dot product (correlation).
    """
    ctx = T.as_tensor(ctx.frames if isinstance(ctx, ContextFrameSet) else ctx)
    filters = T.as_tensor(filters)
    if filters.ndim != 4:
        raise ShapeError(f"filters must be (S, M', T, K), got {filters.shape}")
    S, Mf, n_frames, K = filters.shape
    if Mf == 1 and ctx.shape[0] != 1:
        ctx = ctx[ref:ref + 1]
    if ctx.shape[:2] != (Mf, n_frames):
        raise ShapeError(f"context frames {ctx.shape} do not match filters {filters.shape}")
    if ctx.shape[-1] - K + 1 < 1:
        raise ShapeError(f"filter length {K} exceeds context frame length {ctx.shape[-1]}")
    out = T.corr_valid(T.reshape(ctx, (1,) + ctx.shape), filters)  # (S, M', T, L)
    return T.sorted_sum(out, 1)  # order-free so channel permutations give identical sums


def implicit_filter(f_ref, filters, C: int, context: bool | None = None) -> Tensor:
    """Mask latent frames of the reference channel, pooling over the context.

    ``f_ref`` is ``(T, N)``. For context filtering ``filters`` is
    ``([S,] T, 1+2C, N)`` and frame ``t`` averages ``f[t-C+j] * h[t, j]`` over
    ``j`` with a constant ``1/(1+2C)`` normalizer (zero rows past the edges).
    Otherwise ``filters`` is ``([S,] T, N)`` and the result is ``f * h``.
    ``context`` is inferred from the filter shape when not given.
    """
    f_ref = T.as_tensor(f_ref)
    filters = T.as_tensor(filters)
    n_frames, N = f_ref.shape
    if context is None:
        context = filters.shape[-2:] != (n_frames, N)
    if context:
        F = stack_feature_context(T.reshape(f_ref, (1, n_frames, N)), C)[0]  # (T, K, N)
        if filters.shape[-3:] != F.shape:
            raise ShapeError(f"context filters {filters.shape} do not match {F.shape}")
        return T.mean(F * filters, axis=-2)
    if filters.shape[-2:] != (n_frames, N):
        raise ShapeError(f"mask {filters.shape} does not match latent frames {f_ref.shape}")
    return f_ref * filters


def render_waveforms(frames_or_latents, framing: FramingConfig, n_samples: int,
                     decoder: Tensor | None = None) -> SeparatedOutput:
    """Turn per-source frames (explicit) or latents (with ``decoder``) into waveforms."""
    x = T.as_tensor(frames_or_latents)
    latents = None
    if decoder is not None:
        latents = x
        x = decode_frames(x, decoder)
    if x.shape[-1] != framing.frame_len:
        raise ShapeError(f"frames of length {x.shape[-1]}, expected {framing.frame_len}")
    wav = overlap_add(x, framing.hop, n_samples, framing.window)
    return SeparatedOutput(wav, latents)
