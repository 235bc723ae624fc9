"""Dataset synthesis: WAV files plus a JSON-lines manifest."""

from __future__ import annotations

import json
from collections import Counter
from functools import lru_cache
from pathlib import Path

import numpy as np

from ..audio import read_wav, write_wav
from .mixture import (BUCKET_LABELS, FS, generate_mixture, overlap_bucket, overlap_layout,
                      sample_mixture_spec)

MIC_COUNTS = (2, 3, 4, 5, 6)
MANIFEST = "manifest.jsonl"


class CorpusError(RuntimeError):
    pass


def utterance_seed(seed: int, index: int) -> int:
    """Independent per-utterance seed derived from the dataset seed and index."""
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _wav_list(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"corpus directory {d} does not exist")
    files = sorted(d.glob("*.wav"))
    if not files:
        raise CorpusError(f"no .wav files in {d}")
    return files


@lru_cache(maxsize=256)
def _load_mono(path: str, fs: int) -> np.ndarray:
    x, _ = read_wav(path, expect_fs=fs)
    return x[0]


def _crop(rng, x: np.ndarray, n: int) -> np.ndarray:
    start = int(rng.integers(0, len(x) - n + 1))
    return x[start:start + n]


def make_utterance(seed: int, n_mics: int, speech_files, noise_files,
                   duration: float = 4.0, fs: int = FS):
    """Draw everything for one utterance from ``seed`` and render it."""
    rng = np.random.default_rng(seed)
    spec = sample_mixture_spec(rng, n_mics, seed=seed, duration=duration, fs=fs)
    seg, _ = overlap_layout(spec.n_samples, spec.overlap_ratio)
    speech = [(p, _load_mono(str(p), fs)) for p in speech_files]
    speech = [(p, x) for p, x in speech if len(x) >= seg]
    noise = [(p, x) for p, x in ((p, _load_mono(str(p), fs)) for p in noise_files)
             if len(x) >= spec.n_samples]
    if len(speech) < 2 or not noise:
        raise CorpusError(f"corpus exhausted: need 2 speech files of >= {seg} samples and "
                          f"1 noise file of >= {spec.n_samples} samples")
    ia, ib = rng.choice(len(speech), size=2, replace=False)
    inoise = int(rng.integers(len(noise)))
    sa, sb = _crop(rng, speech[ia][1], seg), _crop(rng, speech[ib][1], seg)
    nz = _crop(rng, noise[inoise][1], spec.n_samples)
    spec.extra = {"sources": [speech[ia][0].name, speech[ib][0].name, noise[inoise][0].name]}
    return generate_mixture(spec, sa, sb, nz)


def build_dataset(n_utts: int, seed: int, out_dir, speech_dir, noise_dir,
                  duration: float = 4.0, mics=MIC_COUNTS, fs: int = FS, log=None) -> Path:
    """Synthesize ``n_utts`` utterances; returns the manifest path.

    Utterance ``i`` uses ``mics[i % len(mics)]`` microphones so every array
    size gets the same number of utterances (up to rounding).
    """
    if n_utts < 1:
        raise ValueError("n_utts must be positive")
    mics = tuple(int(m) for m in mics)
    if not mics or min(mics) < 1:
        raise ValueError(f"invalid microphone counts {mics}")
    speech_files, noise_files = _wav_list(speech_dir), _wav_list(noise_dir)
    out = Path(out_dir)
    (out / "wav").mkdir(parents=True, exist_ok=True)
    lines = []
    for i in range(n_utts):
        useed = utterance_seed(seed, i)
        mix = make_utterance(useed, mics[i % len(mics)], speech_files, noise_files, duration, fs)
        uid = f"utt{i:05d}"
        rel_mix = f"wav/{uid}_mix.wav"
        rel_tgt = [f"wav/{uid}_s{k + 1}.wav" for k in range(2)]
        write_wav(out / rel_mix, mix.mixture, fs)
        for k in range(2):
            write_wav(out / rel_tgt[k], mix.targets[k], fs)
        spec = mix.spec
        lines.append({
            "id": uid, "mixture_path": rel_mix, "target_paths": rel_tgt,
            "n_mics": spec.n_mics, "overlap_ratio": spec.overlap_ratio, "t60": spec.room.t60,
            "rel_snr_db": spec.rel_snr_db, "noise_snr_db": spec.noise_snr_db,
            "room_dims": list(spec.room.dims), "seed": useed,
            "overlap_bucket": overlap_bucket(spec.overlap_ratio),
            "mic_positions": spec.mic_positions.tolist(),
            "source_positions": spec.source_positions.tolist(),
            "sources": spec.extra["sources"], "duration": duration, "fs": fs,
        })
        if log is not None:
            log(f"{uid}: {spec.n_mics} mics, overlap {spec.overlap_ratio:.2f}, t60 {spec.room.t60:.2f}")
    path = out / MANIFEST
    with open(path, "w") as fh:
        for line in lines:
            fh.write(json.dumps(line) + "\n")
    return path


def load_manifest(path) -> list[dict]:
    """Manifest entries with ``mixture_path``/``target_paths`` made absolute."""
    path = Path(path)
    root = path.parent
    entries = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            e = json.loads(line)
            e["mixture_path"] = str(root / e["mixture_path"])
            e["target_paths"] = [str(root / p) for p in e["target_paths"]]
            entries.append(e)
    return entries


def bucket_histogram(entries) -> dict[str, int]:
    counts = Counter(e["overlap_bucket"] for e in entries)
    return {b: counts.get(b, 0) for b in BUCKET_LABELS}


def toy_mixture(seed: int = 0, n_mics: int = 2, duration: float = 1.0, fs: int = FS):
    """One reproducible utterance built from synthetic sources, no files needed."""
    from .corpus import synth_noise, synth_speech
    rng = np.random.default_rng(seed)
    spec = sample_mixture_spec(rng, n_mics, seed=seed, duration=duration, fs=fs)
    n = spec.n_samples
    a = synth_speech(rng, n, fs, f0=rng.uniform(90, 140))
    b = synth_speech(rng, n, fs, f0=rng.uniform(180, 250))
    return generate_mixture(spec, a, b, synth_noise(rng, n))
