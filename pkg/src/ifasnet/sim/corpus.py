"""Synthetic stand-ins for speech and noise corpora.

Voiced "utterances" are harmonic stacks with a wandering pitch and a
syllable-rate amplitude envelope; noise clips are coloured Gaussian noise.
They are enough to exercise the pipeline and the toy training runs without
any external data.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ..audio import write_wav


def synth_speech(rng: np.random.Generator, n_samples: int, fs: int = 16000,
                 f0: float | None = None) -> np.ndarray:
    t = np.arange(n_samples) / fs
    if f0 is None:
        f0 = rng.uniform(90.0, 250.0)
    # slow pitch drift plus vibrato-like wobble
    drift = 1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.2, 0.6) * t + rng.uniform(0, 2 * np.pi))
    phase = 2 * np.pi * np.cumsum(f0 * drift) / fs
    n_harm = int(min(30, 3800 // f0))
    tilt = rng.uniform(0.6, 0.9)
    x = np.zeros(n_samples)
    for k in range(1, n_harm + 1):
        x += tilt ** k * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    rate = rng.uniform(3.0, 6.0)
    env = np.clip(np.sin(2 * np.pi * rate * t + rng.uniform(0, 2 * np.pi)), 0.0, None) ** 0.7
    env *= rng.uniform(0.5, 1.0, size=int(np.ceil(t[-1] * rate)) + 2)[(t * rate).astype(int)]
    x *= env
    x += 0.01 * rng.standard_normal(n_samples) * env
    return 0.5 * x / np.max(np.abs(x))


def synth_noise(rng: np.random.Generator, n_samples: int) -> np.ndarray:
    pole = rng.uniform(0.0, 0.95)
    x = lfilter([1.0], [1.0, -pole], rng.standard_normal(n_samples))
    return 0.3 * x / np.max(np.abs(x))


def write_synthetic_corpus(out_dir, n_speech: int = 20, n_noise: int = 10,
                           seconds: float = 5.0, fs: int = 16000, seed: int = 0):
    """Write ``speech/*.wav`` and ``noise/*.wav``; returns the two directories."""
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    n = int(seconds * fs)
    dirs = out / "speech", out / "noise"
    for d in dirs:
        d.mkdir(parents=True, exist_ok=True)
    for i in range(n_speech):
        write_wav(dirs[0] / f"spk{i:03d}.wav", synth_speech(rng, n, fs), fs)
    for i in range(n_noise):
        write_wav(dirs[1] / f"noise{i:03d}.wav", synth_noise(rng, n), fs)
    return dirs
