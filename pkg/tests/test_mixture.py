import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ifasnet.sim.mixture import (BUCKET_LABELS, MixtureSpec, ZeroPowerError, generate_mixture,
                                 overlap_bucket, overlap_layout, place_sources, realized_snrs,
                                 sample_mixture_spec)
from ifasnet.sim.rir import RoomSpec

seeds = st.integers(0, 2**31 - 1)


def spec_for(ratio=0.5, rel=2.0, noise=15.0, duration=0.25, n_mics=2):
    room = RoomSpec((5.0, 4.0, 3.0), 0.2)
    return MixtureSpec(room, [[1.0, 1.0, 1.5], [1.1, 1.0, 1.5]][:n_mics],
                       [[3.0, 2.0, 1.5], [4.0, 3.0, 1.5], [2.0, 3.0, 1.2]], ratio, rel, noise, seed=0,
                       duration=duration)


@given(st.integers(100, 100000), st.floats(0, 1))
def test_overlap_layout_ratio(n, r):
    seg, onset = overlap_layout(n, r)
    assert seg + onset == n and 0 <= onset <= seg <= n
    assert abs((seg - onset) / n - r) <= 2.0 / n


def test_bucket_boundaries():
    assert [overlap_bucket(r) for r in (0.0, 0.2499, 0.25, 0.5, 0.75, 1.0)] == \
        ["<25%", "<25%", "25-50%", "50-75%", ">75%", ">75%"]
    assert len(BUCKET_LABELS) == 4


@given(seeds, st.floats(0, 1), st.floats(0, 5), st.floats(10, 20))
def test_realized_snrs_match_spec(seed, ratio, rel, noise):
    rng = np.random.default_rng(seed)
    spec = spec_for(ratio, rel, noise)
    a, b, n = (rng.standard_normal(4000) for _ in range(3))
    dry = place_sources(spec, a, b, n)
    r, s = realized_snrs(dry, spec)
    assert abs(r - rel) < 1e-9 and abs(s - noise) < 1e-9


def test_silent_speaker_in_overlap_falls_back():
    spec = spec_for(0.3)
    a = np.ones(4000)
    seg, onset = overlap_layout(spec.n_samples, 0.3)
    a[onset:seg] = 0.0
    dry = place_sources(spec, a, np.ones(4000), np.ones(4000))
    assert abs(realized_snrs(dry, spec)[0] - 2.0) < 1e-9


def test_rejects_short_and_silent_sources():
    spec = spec_for()
    with pytest.raises(ValueError):
        place_sources(spec, np.ones(10), np.ones(4000), np.ones(4000))
    with pytest.raises(ZeroPowerError):
        place_sources(spec, np.zeros(4000), np.ones(4000), np.ones(4000))


def test_generate_is_additive_and_deterministic(rng):
    spec = spec_for(n_mics=2)
    a, b, n = (rng.standard_normal(4000) for _ in range(3))
    m1 = generate_mixture(spec, a, b, n)
    m2 = generate_mixture(spec, a, b, n)
    assert np.max(np.abs(m1.mixture - m1.targets.sum(0) - m1.noise)) < 1e-9
    assert np.array_equal(m1.mixture, m2.mixture)
    assert m1.targets.shape == (2, 2, 4000) and np.isclose(np.max(np.abs(m1.mixture)), 0.9)


def test_sampled_geometry_respects_clearances():
    for seed in range(20):
        spec = sample_mixture_spec(np.random.default_rng(seed), 6)
        dims = np.array(spec.room.dims)
        pts = np.vstack([spec.mic_positions, spec.source_positions])
        assert np.all(pts >= 0.5) and np.all(pts <= dims - 0.5)
        src = spec.source_positions
        for i in range(3):
            for j in range(i + 1, 3):
                assert np.linalg.norm(src[i] - src[j]) >= 0.5
            assert np.all(np.linalg.norm(spec.mic_positions - src[i], axis=1) >= 0.3)
        assert 0.1 <= spec.room.t60 <= 0.5 and 0 <= spec.rel_snr_db <= 5 and 10 <= spec.noise_snr_db <= 20
