import json

import numpy as np
import pytest

from ifasnet.audio import read_wav
from ifasnet.sim.corpus import synth_noise, synth_speech
from ifasnet.sim.dataset import (CorpusError, bucket_histogram, build_dataset, load_manifest,
                                 toy_mixture, utterance_seed)

FIELDS = {"id", "mixture_path", "target_paths", "n_mics", "overlap_ratio", "t60", "rel_snr_db",
          "noise_snr_db", "room_dims", "seed", "overlap_bucket", "mic_positions", "source_positions",
          "sources", "duration", "fs"}


def test_manifest_contents(small_dataset):
    entries = load_manifest(small_dataset)
    assert [e["n_mics"] for e in entries] == [2, 3, 2, 3]
    assert sum(bucket_histogram(entries).values()) == 4
    for e in entries:
        assert set(e) == FIELDS
        mix, fs = read_wav(e["mixture_path"])
        assert fs == 16000 and mix.shape == (e["n_mics"], 8000)
        imgs = [read_wav(p)[0] for p in e["target_paths"]]
        assert all(i.shape == mix.shape for i in imgs)
    raw = json.loads(small_dataset.read_text().splitlines()[0])
    assert not raw["mixture_path"].startswith("/")  # relative in the file, absolute once loaded


def test_build_is_bit_exact_under_seed(corpus, tmp_path):
    paths = [build_dataset(2, 3, tmp_path / d, *corpus, duration=0.25, mics=(2,)) for d in "ab"]
    for name in ["manifest.jsonl", "wav/utt00000_mix.wav", "wav/utt00001_s2.wav"]:
        assert (paths[0].parent / name).read_bytes() == (paths[1].parent / name).read_bytes()


def test_utterance_seeds_are_distinct():
    seeds = {utterance_seed(7, i) for i in range(1000)}
    assert len(seeds) == 1000 and utterance_seed(7, 3) == utterance_seed(7, 3)


def test_corpus_errors(corpus, tmp_path):
    with pytest.raises(FileNotFoundError):
        build_dataset(1, 0, tmp_path / "x", tmp_path / "missing", corpus[1])
    (tmp_path / "empty").mkdir()
    with pytest.raises(CorpusError):
        build_dataset(1, 0, tmp_path / "x", tmp_path / "empty", corpus[1])
    with pytest.raises(CorpusError):  # 1.5 s files cannot cover a 10 s utterance
        build_dataset(1, 0, tmp_path / "x", *corpus, duration=10.0)
    with pytest.raises(ValueError):
        build_dataset(0, 0, tmp_path / "x", *corpus)


def test_synthetic_sources(rng):
    s = synth_speech(rng, 16000)
    n = synth_noise(rng, 16000)
    assert s.shape == n.shape == (16000,) and np.all(np.isfinite(s)) and np.max(np.abs(n)) <= 0.3 + 1e-12
    assert np.std(s) > 0


def test_toy_mixture_reproducible():
    a, b = toy_mixture(0), toy_mixture(0)
    assert a.mixture.shape == (2, 16000) and np.array_equal(a.mixture, b.mixture)
