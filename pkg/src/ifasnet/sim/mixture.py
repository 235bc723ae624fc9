"""Two-speaker noisy reverberant mixtures for ad-hoc microphone arrays."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .rir import GeometryError, RoomSpec, simulate_rirs

FS = 16000
DIMS_RANGE = ((3.0, 10.0), (3.0, 10.0), (2.5, 4.0))
T60_RANGE = (0.1, 0.5)
REL_SNR_RANGE = (0.0, 5.0)
NOISE_SNR_RANGE = (10.0, 20.0)
WALL_CLEARANCE = 0.5
MIC_SOURCE_CLEARANCE = 0.3
SOURCE_SPACING = 0.5
PEAK = 0.9
BUCKET_EDGES = (0.25, 0.5, 0.75)
BUCKET_LABELS = ("<25%", "25-50%", "50-75%", ">75%")


class ZeroPowerError(ValueError):
    pass


def overlap_bucket(ratio: float) -> str:
    """Overlap bucket label; each boundary belongs to the bucket above it."""
    return BUCKET_LABELS[int(np.searchsorted(BUCKET_EDGES, ratio, side="right"))]


@dataclass
class MixtureSpec:
    room: RoomSpec
    mic_positions: np.ndarray          # (M, 3)
    source_positions: np.ndarray       # (3, 3): speaker a, speaker b, noise
    overlap_ratio: float
    rel_snr_db: float
    noise_snr_db: float
    seed: int
    duration: float = 4.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        self.source_positions = np.atleast_2d(np.asarray(self.source_positions, dtype=float))
        if self.source_positions.shape != (3, 3):
            raise ValueError("need positions for two speakers and one noise source")
        if not 0.0 <= self.overlap_ratio <= 1.0:
            raise ValueError(f"overlap_ratio {self.overlap_ratio} outside [0, 1]")

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.room.fs))

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k not in ("room", "extra")}
        d["mic_positions"] = self.mic_positions.tolist()
        d["source_positions"] = self.source_positions.tolist()
        d.update(room_dims=list(self.room.dims), t60=self.room.t60, fs=self.room.fs,
                 n_mics=self.n_mics, **self.extra)
        return d


def _uniform_point(rng, dims, clearance):
    lo = np.full(3, clearance)
    hi = np.asarray(dims) - clearance
    return rng.uniform(lo, hi)


def _far_from(p, others, dist):
    return all(np.linalg.norm(p - q) >= dist for q in others)


def sample_mixture_spec(rng: np.random.Generator, n_mics: int, seed: int = 0,
                        duration: float = 4.0, fs: int = FS, max_tries: int = 1000) -> MixtureSpec:
    """Draw a room, positions and level parameters.

    Every point keeps 0.5 m from the walls, sources (speakers and noise) are
    at least 0.5 m apart and each microphone at least 0.3 m from any source.
    """
    if not 1 <= n_mics:
        raise ValueError("need at least one microphone")
    dims = tuple(float(rng.uniform(lo, hi)) for lo, hi in DIMS_RANGE)
    room = RoomSpec(dims, float(rng.uniform(*T60_RANGE)), fs)
    sources, mics = [], []
    for _ in range(max_tries):
        p = _uniform_point(rng, dims, WALL_CLEARANCE)
        if _far_from(p, sources, SOURCE_SPACING):
            sources.append(p)
            if len(sources) == 3:
                break
    for _ in range(max_tries):
        p = _uniform_point(rng, dims, WALL_CLEARANCE)
        if _far_from(p, sources, MIC_SOURCE_CLEARANCE):
            mics.append(p)
            if len(mics) == n_mics:
                break
    if len(sources) < 3 or len(mics) < n_mics:
        raise GeometryError("could not place sources and microphones under the clearance rules")
    return MixtureSpec(room, np.array(mics), np.array(sources),
                       overlap_ratio=float(rng.uniform(0.0, 1.0)),
                       rel_snr_db=float(rng.uniform(*REL_SNR_RANGE)),
                       noise_snr_db=float(rng.uniform(*NOISE_SNR_RANGE)),
                       seed=seed, duration=duration)


def overlap_layout(n_samples: int, ratio: float) -> tuple[int, int]:
    """``(segment_len, later_onset)`` with overlap / union equal to ``ratio``.

    Both speakers are active for ``segment_len`` samples; the first starts at
    0 and the second ends at the canvas end, so the union is the whole canvas.
    """
    seg = int(np.ceil(n_samples * (1.0 + ratio) / 2.0))  # ceil: no gap for odd lengths
    return seg, n_samples - seg


def overlap_region(n_samples: int, ratio: float) -> slice:
    seg, onset = overlap_layout(n_samples, ratio)
    return slice(onset, seg)


def _power(x: np.ndarray) -> float:
    return float(np.mean(x * x)) if x.size else 0.0


def _speaker_powers(dry: np.ndarray, spec: MixtureSpec) -> tuple[float, float]:
    """Speaker powers over the overlap, or over their own extents without one."""
    seg, onset = overlap_layout(dry.shape[1], spec.overlap_ratio)
    if seg > onset:
        pa, pb = _power(dry[0, onset:seg]), _power(dry[1, onset:seg])
        if pa > 0.0 and pb > 0.0:
            return pa, pb
    # no overlap, or a speaker silent inside it
    return _power(dry[0, :seg]), _power(dry[1, onset:])


def place_sources(spec: MixtureSpec, speech_a, speech_b, noise) -> np.ndarray:
    """Dry ``(3, n_samples)`` canvas: shifted, level-adjusted speakers and noise."""
    D = spec.n_samples
    seg, onset = overlap_layout(D, spec.overlap_ratio)
    signals = [np.asarray(x, dtype=float).ravel() for x in (speech_a, speech_b, noise)]
    for name, x, need in zip(("speech_a", "speech_b", "noise"), signals, (seg, seg, D)):
        if len(x) < need:
            raise ValueError(f"{name} has {len(x)} samples, {need} needed")
        if not np.all(np.isfinite(x[:need])):
            raise ValueError(f"{name} contains non-finite samples")
        if _power(x[:need]) == 0.0:
            raise ZeroPowerError(f"{name} is silent over the required span")
    dry = np.zeros((3, D))
    dry[0, :seg] = signals[0][:seg]
    dry[1, onset:] = signals[1][:seg]
    dry[2] = signals[2][:D]

    pa, pb = _speaker_powers(dry, spec)
    dry[1] *= np.sqrt(pa / pb * 10.0 ** (-spec.rel_snr_db / 10.0))
    speech_pow = _power(dry[0] + dry[1])
    dry[2] *= np.sqrt(speech_pow / _power(dry[2]) * 10.0 ** (-spec.noise_snr_db / 10.0))
    return dry


@dataclass
class Mixture:
    mixture: np.ndarray      # (M, samples)
    targets: np.ndarray      # (2, M, samples) reverberant speaker images
    noise: np.ndarray        # (M, samples) reverberant noise image
    dry: np.ndarray          # (3, samples)
    spec: MixtureSpec


def generate_mixture(spec: MixtureSpec, speech_a, speech_b, noise, rirs=None) -> Mixture:
    """Convolve the placed sources with their responses and sum per microphone.

    The whole utterance is scaled so the mixture peak is 0.9; targets and
    noise share the scale, so mixture == targets.sum(0) + noise holds.
    """
    dry = place_sources(spec, speech_a, speech_b, noise)
    if rirs is None:
        rirs = simulate_rirs(spec.room, spec.source_positions, spec.mic_positions)
    D = spec.n_samples
    images = np.stack([[fftconvolve(dry[j], rirs[i, j])[:D] for j in range(3)]
                       for i in range(spec.n_mics)])              # (M, 3, D)
    targets = np.transpose(images[:, :2], (1, 0, 2))
    noise_img = images[:, 2]
    mixture = targets.sum(axis=0) + noise_img
    peak = np.max(np.abs(mixture))
    if peak == 0.0:
        raise ZeroPowerError("mixture is silent")
    g = PEAK / peak
    return Mixture(mixture * g, targets * g, noise_img * g, dry, spec)


def realized_snrs(dry: np.ndarray, spec: MixtureSpec) -> tuple[float, float]:
    """``(rel_snr_db, noise_snr_db)`` measured on a dry canvas."""
    pa, pb = _speaker_powers(dry, spec)
    rel = 10 * np.log10(pa / pb)
    noise = 10 * np.log10(_power(dry[0] + dry[1]) / _power(dry[2]))
    return float(rel), float(noise)
