"""32-bit float WAV reading and writing."""

from __future__ import annotations

import numpy as np
from scipy.io import wavfile


class AudioFormatError(ValueError):
    pass


def write_wav(path, signal: np.ndarray, fs: int = 16000) -> None:
    """Write ``(channels, samples)`` or ``(samples,)`` as float32 PCM."""
    x = np.asarray(signal, dtype=np.float32)
    if x.ndim == 2:
        x = x.T  # interleave channels
    wavfile.write(path, fs, np.ascontiguousarray(x))


def read_wav(path, expect_fs: int | None = None) -> tuple[np.ndarray, int]:
    """Return ``(channels, samples)`` float64 and the sample rate.

    Integer PCM is scaled to [-1, 1).
    """
    fs, x = wavfile.read(path)
    if expect_fs is not None and fs != expect_fs:
        raise AudioFormatError(f"{path}: sample rate {fs} Hz, expected {expect_fs} Hz")
    if np.issubdtype(x.dtype, np.integer):
        x = x.astype(np.float64) / float(-np.iinfo(x.dtype).min)
    x = np.asarray(x, dtype=np.float64)
    x = x[None, :] if x.ndim == 1 else x.T
    return np.ascontiguousarray(x), fs
