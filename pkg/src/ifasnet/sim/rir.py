"""Shoebox room impulse responses by the image-source method."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import butter, lfilter

SOUND_SPEED = 343.0
SINC_TAPS = 81
_HALF = SINC_TAPS // 2
CALIBRATION_PAIRS = 4


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class RoomSpec:
    dims: tuple[float, float, float]
    t60: float
    fs: int = 16000
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        if len(self.dims) != 3 or min(self.dims) <= 0:
            raise GeometryError(f"room dimensions must be three positive lengths, got {self.dims}")
        if self.t60 <= 0:
            raise ValueError("t60 must be positive")

    @property
    def volume(self) -> float:
        x, y, z = self.dims
        return x * y * z

    @property
    def surface(self) -> float:
        x, y, z = self.dims
        return 2.0 * (x * y + x * z + y * z)

    def contains(self, p, margin: float = 0.0) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p > margin) and np.all(p < np.asarray(self.dims) - margin))


def sabine_absorption(room: RoomSpec) -> float:
    """Uniform absorption coefficient from Sabine's formula."""
    return 0.161 * room.volume / (room.surface * room.t60)


def eyring_absorption(room: RoomSpec) -> float:
    """Uniform absorption coefficient from Eyring's formula."""
    return 1.0 - np.exp(-0.161 * room.volume / (room.surface * room.t60))


def _safe(fn):
    def wrapped(alpha):
        try:
            return fn(alpha)
        except ValueError:
            return 0.0
    return wrapped


def _match_decay(decay, target: float, grid: np.ndarray, iters: int = 30) -> float:
    """Absorption whose decay time crosses ``target``.

    Decay time is not monotone in absorption when a few strong early
    reflections dominate, so the first crossing is bracketed on ``grid``
    (ascending) before bisecting.
    """
    decay = _safe(decay)
    times = np.array([decay(a) for a in grid])
    above = times > target
    cross = np.nonzero(above[:-1] & ~above[1:])[0]
    if len(cross) == 0:
        return float(grid[int(np.argmin(np.abs(np.log(np.maximum(times, 1e-9) / target))))])
    lo, hi = grid[cross[0]], grid[cross[0] + 1]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if decay(mid) > target:
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def calibrated_absorption(room: RoomSpec, bases, highpass_hz: float | None = 50.0) -> float:
    """Absorption for which the simulated responses decay 60 dB in ``room.t60``.

    Diffuse-field formulas misjudge the decay of a shoebox image model, badly
    so for short T60 in large flat rooms. The Schroeder decay time of the
    summed energy of the rendered responses (``bases`` from
    :func:`hit_basis`, one per source/mic pair) is matched instead.
    """
    def decay(alpha: float) -> float:
        energy = 0.0
        for basis in bases:
            h = _combine(basis, alpha, highpass_hz, room.fs)
            energy = energy + h * h
        return schroeder_decay_time(np.sqrt(energy), room.fs)

    grid = 1.0 - np.geomspace(0.9999, 1e-3, 60)
    return _match_decay(decay, room.t60, grid)


def _highpass(h: np.ndarray, cutoff: float | None, fs: int) -> np.ndarray:
    if not cutoff:
        return h
    # all image pulses are positive; remove the resulting DC build-up
    b, a = butter(2, cutoff, btype="high", fs=fs)
    return lfilter(b, a, h, axis=-1)


def wall_absorption(room: RoomSpec, formula: str = "calibrated", bases=None,
                    highpass_hz: float | None = 50.0) -> float:
    """Uniform wall absorption matching ``room.t60``.

    ``"sabine"`` falls back to Eyring when Sabine gives a value >= 1;
    ``"calibrated"`` matches the decay of the rendered responses (see
    :func:`calibrated_absorption`).
    """
    if formula == "calibrated":
        if bases is None:
            raise ValueError("calibrated absorption needs the rendered hit bases")
        return calibrated_absorption(room, bases, highpass_hz)
    if formula == "eyring":
        return eyring_absorption(room)
    if formula == "sabine":
        a = sabine_absorption(room)
        return a if a < 1.0 else eyring_absorption(room)
    raise ValueError(f"unknown absorption formula {formula!r}")


def default_rir_len(room: RoomSpec, max_dist: float = 0.0) -> int:
    return int(np.ceil((1.2 * room.t60 + max_dist / room.sound_speed) * room.fs)) + _HALF + 1


def _axis_images(src: float, mic: float, length: float, n_max: int):
    """Per-axis image offsets (image - mic) and wall-hit counts for q in {0, 1}."""
    n = np.arange(-n_max, n_max + 1)
    offsets, hits = [], []
    for q in (0, 1):
        offsets.append((1 - 2 * q) * src + 2 * n * length - mic)
        hits.append(np.abs(n - q) + np.abs(n))
    return np.concatenate(offsets), np.concatenate(hits)


def image_sources(room: RoomSpec, src, mic, max_delay_s: float):
    """Distances and wall-hit counts of all images arriving before ``max_delay_s``."""
    c = room.sound_speed
    reach = c * max_delay_s
    per_axis = []
    for ax in range(3):
        n_max = int(np.ceil(reach / (2 * room.dims[ax]))) + 1
        per_axis.append(_axis_images(src[ax], mic[ax], room.dims[ax], n_max))
    (ox, hx), (oy, hy), (oz, hz) = per_axis
    # prune x/y combinations that already exceed the reach before adding z
    dxy2 = ox[:, None] ** 2 + oy[None, :] ** 2
    ix, iy = np.nonzero(dxy2 <= reach * reach)
    dist2 = dxy2[ix, iy][:, None] + oz[None, :] ** 2
    rows, iz = np.nonzero(dist2 <= reach * reach)
    dist = np.sqrt(dist2[rows, iz])
    hits = hx[ix[rows]] + hy[iy[rows]] + hz[iz]
    return dist, hits


def render_arrivals(delays: np.ndarray, amps: np.ndarray, length: int,
                    groups: np.ndarray | None = None, n_groups: int = 1,
                    chunk: int = 50_000) -> np.ndarray:
    """Sum fractional-delay impulses with an 81-tap Hann-windowed sinc.

    With ``groups`` each arrival lands in row ``groups[k]`` of an
    ``(n_groups, length)`` output; otherwise a single ``(length,)`` signal.
    """
    # rows are padded so no tap needs bounds checks
    width = length + 3 * _HALF
    out = np.zeros(n_groups * width)
    taps = np.arange(-_HALF, _HALF + 1)
    sign = np.where(taps % 2 == 0, 1.0, -1.0)
    ck, sk = np.cos(2 * np.pi * taps / SINC_TAPS), np.sin(2 * np.pi * taps / SINC_TAPS)
    for lo in range(0, len(delays), chunk):
        d = delays[lo:lo + chunk]
        a = amps[lo:lo + chunk]
        centre = np.round(d)
        keep = centre <= length - 1 + _HALF   # later arrivals miss the output
        frac = d - centre                      # in [-0.5, 0.5]
        # sinc(k - f) = -(-1)^k sin(pi f) / (pi (k - f)), and 1 where k == f
        den = np.pi * (taps[None, :] - frac[:, None])
        num = -np.sin(np.pi * frac)[:, None] * sign[None, :]
        w = np.divide(num, den, out=np.ones_like(den), where=den != 0.0)
        hann = 0.5 + 0.5 * (np.cos(2 * np.pi * frac / SINC_TAPS)[:, None] * ck[None, :]
                            + np.sin(2 * np.pi * frac / SINC_TAPS)[:, None] * sk[None, :])
        w *= hann
        w *= np.where(keep, a, 0.0)[:, None]
        base = np.minimum(centre, length - 1 + _HALF).astype(np.int64)
        if groups is not None:
            base = base + groups[lo:lo + chunk] * width
        idx = base[:, None] + (taps + _HALF)[None, :]
        out += np.bincount(idx.ravel(), weights=w.ravel(), minlength=out.size)
    out = out.reshape(n_groups, width)[:, _HALF:_HALF + length]
    return out[0].copy() if groups is None else out


def hit_basis(room: RoomSpec, src, mic, rir_len: int) -> np.ndarray:
    """Rendered response split by wall-hit count: ``(max_hits + 1, rir_len)``.

    Row ``k`` holds all images reflected ``k`` times, so the response for a
    reflection coefficient ``r`` is ``sum_k r**k basis[k]``. Rendering once
    makes trying many absorption values cheap.
    """
    dist, hits = image_sources(room, src, mic, (rir_len + _HALF) / room.fs)
    n_groups = int(hits.max()) + 1
    return render_arrivals(dist / room.sound_speed * room.fs, 1.0 / (4 * np.pi * dist),
                           rir_len, hits, n_groups)


def _combine(basis: np.ndarray, alpha: float, highpass_hz: float | None, fs: int) -> np.ndarray:
    if alpha == 1.0:
        # direct path only; nothing accumulates, so no high-pass either
        return basis[0].copy()
    r = np.sqrt(1.0 - alpha)
    weights = r ** np.arange(basis.shape[0], dtype=float)
    weights[0] = 1.0
    return _highpass(weights @ basis, highpass_hz, fs)


def simulate_rir(room: RoomSpec, src, mic, rir_len: int | None = None,
                 absorption: float | None = None, formula: str = "calibrated",
                 highpass_hz: float | None = 50.0) -> np.ndarray:
    """Impulse response from ``src`` to ``mic`` (metres) in a shoebox room.

    ``absorption`` overrides the value derived from ``room.t60``; ``1.0`` gives
    the anechoic (direct path only) response.
    """
    return simulate_rirs(room, [src], [mic], rir_len, absorption, formula, highpass_hz)[0, 0]


def simulate_rirs(room: RoomSpec, sources, mics, rir_len: int | None = None,
                  absorption: float | None = None, formula: str = "calibrated",
                  highpass_hz: float | None = 50.0) -> np.ndarray:
    """``(n_mics, n_sources, rir_len)`` responses sharing one length and absorption."""
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    mics = np.atleast_2d(np.asarray(mics, dtype=float))
    for p in (*sources, *mics):
        if p.shape != (3,) or not room.contains(p):
            raise GeometryError("sources and microphones must lie strictly inside the room")
    for s in sources:
        for m in mics:
            if np.linalg.norm(s - m) == 0.0:
                raise GeometryError("source and microphone coincide")
    if absorption is not None and not 0.0 < float(absorption) <= 1.0:
        raise ValueError(f"absorption {absorption} outside (0, 1]")
    if rir_len is None:
        dmax = max(np.linalg.norm(s - m) for s in sources for m in mics)
        rir_len = default_rir_len(room, dmax)
    pairs = [(i, j) for i in range(len(mics)) for j in range(len(sources))]
    # bases are large for long T60, so only a few are kept for calibration
    kept = {(i, j): hit_basis(room, sources[j], mics[i], rir_len)
            for i, j in pairs[:CALIBRATION_PAIRS]}
    if absorption is None:
        absorption = wall_absorption(room, formula, list(kept.values()), highpass_hz)
    alpha = float(absorption)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"absorption {alpha} outside (0, 1]")
    out = np.zeros((len(mics), len(sources), rir_len))
    for i, j in pairs:
        basis = kept.pop((i, j), None)
        if basis is None:
            basis = hit_basis(room, sources[j], mics[i], rir_len)
        out[i, j] = _combine(basis, alpha, highpass_hz, room.fs)
    return out


def schroeder_decay_time(rir: np.ndarray, fs: int, lo_db: float = -5.0, hi_db: float = -35.0) -> float:
    """Reverberation time from a line fit to the backward-integrated energy curve."""
    energy = np.cumsum(np.asarray(rir, dtype=float)[::-1] ** 2)[::-1]
    edc = 10.0 * np.log10(np.maximum(energy / energy[0], 1e-300))
    sel = np.nonzero((edc <= lo_db) & (edc >= hi_db))[0]
    if len(sel) < 2:
        raise ValueError("energy decay curve does not span the fit range")
    slope, _ = np.polyfit(sel / fs, edc[sel], 1)
    return -60.0 / slope
