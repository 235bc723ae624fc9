"""Frame extraction, sample/feature context stacking and overlap-add."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import tensor as T
from .tensor import Tensor


class COLAError(ValueError):
    """Overlap-add window envelope vanishes somewhere in the output."""


@dataclass(frozen=True)
class FramingConfig:
    frame_len: int = 256
    hop: int = 128
    sample_context: int = 256
    window: str = "hann"

    def __post_init__(self):
        if self.frame_len <= 0 or self.sample_context < 0 or self.hop <= 0:
            raise ValueError("frame_len and hop must be positive, sample_context non-negative")
        if self.window not in ("hann", "rect"):
            raise ValueError(f"unknown synthesis window {self.window!r}")

    @property
    def feature_context(self) -> int:
        """Frames of feature context C that span the sample context W."""
        if self.sample_context % self.hop:
            raise ValueError(
                f"sample context {self.sample_context} is not a multiple of hop {self.hop}")
        return self.sample_context // self.hop

    @property
    def context_len(self) -> int:
        return self.frame_len + 2 * self.sample_context

    @property
    def n_lags(self) -> int:
        return 2 * self.sample_context + 1

    def n_frames(self, n_samples: int) -> int:
        return math.ceil(n_samples / self.hop)


@dataclass
class FrameSet:
    frames: np.ndarray  # (M, T, L)
    original_len: int
    pad_front: int
    pad_back: int


@dataclass
class ContextFrameSet:
    frames: np.ndarray  # (M, T, L + 2W)
    context: int


def split_frames(signal, cfg: FramingConfig) -> tuple[FrameSet, ContextFrameSet]:
    """Cut ``(M, samples)`` into center frames and zero-padded context frames.

    Frame ``t`` starts at sample ``t * hop``; its context frame extends ``W``
    samples further on each side.
    """
    x = np.atleast_2d(np.asarray(signal, dtype=np.float64))
    if x.ndim != 2:
        raise ValueError(f"signal must be (channels, samples), got shape {x.shape}")
    n = x.shape[1]
    if n == 0:
        raise ValueError("empty signal")
    if cfg.hop > cfg.frame_len:
        raise ValueError(f"hop {cfg.hop} exceeds frame length {cfg.frame_len}")
    if not np.all(np.isfinite(x)):
        raise ValueError("signal contains non-finite samples")
    L, W, hop = cfg.frame_len, cfg.sample_context, cfg.hop
    n_frames = cfg.n_frames(n)
    pad_back = (n_frames - 1) * hop + L - n
    padded = np.pad(x, ((0, 0), (W, W + pad_back)))
    ctx = sliding_window_view(padded, L + 2 * W, axis=-1)[:, ::hop][:, :n_frames]
    ctx = np.ascontiguousarray(ctx)
    centers = np.ascontiguousarray(ctx[..., W:W + L])
    return (FrameSet(centers, n, 0, pad_back), ContextFrameSet(ctx, W))


def synthesis_window(length: int, kind: str = "hann") -> np.ndarray:
    if kind == "rect":
        return np.ones(length)
    # half-sample offset keeps every tap strictly positive
    return np.sin(np.pi * (np.arange(length) + 0.5) / length) ** 2


def window_envelope(n_frames: int, frame_len: int, hop: int, length: int, kind: str = "hann"):
    w = np.broadcast_to(synthesis_window(frame_len, kind), (n_frames, frame_len))
    return T._fold_np(np.ascontiguousarray(w), hop, length)


def overlap_add(frames, hop: int, original_len: int, window: str = "hann") -> Tensor:
    """Window, overlap-add and envelope-normalize ``(..., T, L)`` frames.

    Accepts a Tensor (differentiable) or an array.
    """
    frames = T.as_tensor(frames)
    n_frames, L = frames.shape[-2], frames.shape[-1]
    env = window_envelope(n_frames, L, hop, original_len, window)
    if np.min(env) < 1e-8:
        raise COLAError(
            f"window envelope falls to {np.min(env):.3g}; hop {hop} does not cover frame length {L}")
    w = synthesis_window(L, window)
    out = T.fold(frames * w, hop, original_len)
    return out * (1.0 / env)


def stack_feature_context(features: Tensor, C: int) -> Tensor:
    """``(M, T, N) -> (M, T, 1 + 2C, N)`` with zero rows outside the sequence."""
    if C < 0:
        raise ValueError("feature context C must be non-negative")
    features = T.as_tensor(features)
    if features.ndim != 3:
        raise T.ShapeError(f"features must be (M, T, N), got {features.shape}")
    if C == 0:
        return T.reshape(features, features.shape[:2] + (1, features.shape[2]))
    padded = T.pad(features, ((0, 0), (C, C), (0, 0)))
    win = T.unfold(T.transpose(padded, (0, 2, 1)), 1 + 2 * C, 1)  # (M, N, T, 1+2C)
    return T.transpose(win, (0, 2, 3, 1))
