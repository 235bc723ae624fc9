"""Invariant suite behind ``ifasnet selfcheck``.

Every check returns a :class:`CheckResult`; :func:`run_selfcheck` runs them
all and the CLI exits nonzero if any failed.
"""

from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import checkpoint
from .beamformer import explicit_filter_and_sum
from .features import fncc, tncc
from .framing import FramingConfig, overlap_add, split_frames, stack_feature_context
from .gradcheck import check_directional, check_gradients, primitive_cases
from .losses import a2t_loss, pit_loss
from .model import PRESETS, Model, micro_config
from .sim import rir as R

TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<22} {self.detail} ({self.seconds:.1f}s)"


def primitive_errors(seeds: int = 20) -> dict[str, float]:
    """Worst per-coordinate relative error of every primitive over ``seeds`` draws."""
    worst: dict[str, float] = {}
    for s in range(seeds):
        for name, (f, x) in primitive_cases(np.random.default_rng(s)).items():
            err = check_gradients(f, x).max_rel_error
            worst[name] = max(worst.get(name, 0.0), err)
    return worst


def preset_gradient_error(preset: str, seed: int) -> tuple[float, str]:
    """Directional check of the PIT + A2T loss of a micro ``preset`` model.

    Each seed checks a rotating slice of the parameter tensors (so every
    tensor is covered three times over 20 seeds) plus one joint direction.
    """
    rng = np.random.default_rng(100 + seed)
    model = Model(micro_config(preset, seed=seed))
    params = dict(model.named_parameters())
    names = list(params)
    k = math.ceil(3 * len(names) / 20)
    subset = [names[(seed * k + i) % len(names)] for i in range(k)]
    mix, refs, img = (rng.standard_normal((2, 40)) for _ in range(3))

    def loss():
        return pit_loss(model(mix), refs)[0] + a2t_loss(model, img, refs[0])

    reports = check_directional(loss, params, subset, rng=rng)
    name, rep = max(reports.items(), key=lambda kv: kv[1].max_rel_error)
    return rep.max_rel_error, name


def _timed(name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failed check, not a crashed suite
        ok, detail = False, f"raised {type(exc).__name__}: {exc}"
    return CheckResult(name, bool(ok), detail, time.perf_counter() - t0)


def check_primitives(seeds: int = 20) -> tuple[bool, str]:
    worst = primitive_errors(seeds)
    name = max(worst, key=worst.get)
    bad = [k for k, v in worst.items() if not v <= TOL]
    return not bad, f"{len(worst)} ops x {seeds} seeds, worst {worst[name]:.1e} ({name})" + (
        f"; failing: {', '.join(bad)}" if bad else "")


def check_presets(seeds: int = 20) -> tuple[bool, str]:
    worst, where, bad = 0.0, "", []
    for p in PRESETS:
        for s in range(seeds):
            err, name = preset_gradient_error(p, s)
            if not err <= TOL:
                bad.append(f"{p}/{s}/{name}")
            if err > worst or not np.isfinite(err):
                worst, where = err, f"{p} {name}"
    return not bad, f"{len(PRESETS)} presets x {seeds} seeds, worst {worst:.1e} ({where})" + (
        f"; failing: {', '.join(bad[:5])}" if bad else "")


def check_framing(n: int = 10) -> tuple[bool, str]:
    rng = np.random.default_rng(0)
    cfg = FramingConfig(frame_len=256, hop=128, sample_context=256)
    worst = 0.0
    for _ in range(n):
        x = rng.standard_normal((2, int(rng.integers(1000, 20000))))
        frames, _ = split_frames(x, cfg)
        y = overlap_add(frames.frames, cfg.hop, x.shape[1]).data
        worst = max(worst, float(np.max(np.abs(y - x))))
    return worst < 1e-10, f"{n} signals, max error {worst:.1e}"


def check_ncc() -> tuple[bool, str]:
    rng = np.random.default_rng(1)
    cfg = FramingConfig(frame_len=32, hop=16, sample_context=32)
    src = rng.standard_normal(2000)
    delays = [0, 5, -7, 32, -32]
    x = np.stack([np.roll(src, d) for d in delays])
    frames, ctx = split_frames(x, cfg)
    t = tncc(frames, ctx).data
    inner = slice(4, -4)  # frames whose context is free of padding and roll wrap
    lags = np.argmax(t[:, inner], axis=-1) - cfg.sample_context
    recovered = all(np.all(lags[m] == d) for m, d in enumerate(delays))
    F = stack_feature_context(rng.standard_normal((3, 20, 8)), 2)
    g = fncc(F).data.reshape(3, 20, 5, 5)
    sym = float(np.max(np.abs(g[0] - np.swapaxes(g[0], -1, -2))))
    diag = float(np.max(np.abs(np.diagonal(g[0], axis1=-2, axis2=-1)[:, 2] - 1)))
    bound = max(float(np.max(np.abs(t))), float(np.max(np.abs(g)))) - 1.0
    ok = recovered and bound <= 1e-9 and sym < 1e-12 and diag < 1e-12
    return ok, f"delays recovered={recovered}, bound excess {bound:.1e}, asym {sym:.1e}, diag {diag:.1e}"


def check_beamformer() -> tuple[bool, str]:
    rng = np.random.default_rng(2)
    L, W = 16, 8
    ctx = rng.standard_normal((3, 10, L + 2 * W))
    filt = np.zeros((1, 3, 10, 2 * W + 1))
    filt[0, 1, :, W] = 1.0  # pass channel 1 through at zero delay
    out = explicit_filter_and_sum(ctx, filt).data[0]
    err = float(np.max(np.abs(out - ctx[1, :, W:W + L])))
    return err < 1e-9, f"delta-filter identity error {err:.1e}"


def check_rir(n: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(3)
    wrong = 0
    leak = 0.0
    for _ in range(n):
        dims = np.array([rng.uniform(3, 10), rng.uniform(3, 10), rng.uniform(2.5, 4)])
        room = R.RoomSpec(tuple(dims), 0.3)
        s, m = rng.uniform(0.5, dims - 0.5), rng.uniform(0.5, dims - 0.5)
        delay = int(round(np.linalg.norm(s - m) / room.sound_speed * room.fs))
        h = R.simulate_rir(room, s, m, absorption=1.0)
        wrong += int(np.argmax(np.abs(h))) != delay
        outside = np.r_[h[:max(delay - R.SINC_TAPS // 2, 0)], h[delay + R.SINC_TAPS // 2 + 1:]]
        leak = max(leak, float(np.max(np.abs(outside), initial=0.0)))
    return wrong == 0 and leak == 0.0, f"{n} anechoic geometries, {wrong} wrong delays, leak {leak:.1e}"


def check_checkpoint() -> tuple[bool, str]:
    model = Model(micro_config("ifasnet", seed=4))
    state = model.state_dict()
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "m.ifsn"
        checkpoint.save(path, state)
        back = checkpoint.load(path)
    same = set(back) == set(state) and all(np.array_equal(back[k], state[k]) for k in state)
    return same, f"{len(state)} tensors round-tripped bit-exactly" if same else "mismatch"


def run_selfcheck(seeds: int = 20, report: Callable[[str], None] | None = print) -> list[CheckResult]:
    checks = [
        ("gradients/primitives", lambda: check_primitives(seeds)),
        ("gradients/presets", lambda: check_presets(seeds)),
        ("framing/round-trip", check_framing),
        ("ncc/properties", check_ncc),
        ("beamformer/delta", check_beamformer),
        ("rir/direct-path", check_rir),
        ("checkpoint/round-trip", check_checkpoint),
    ]
    results = []
    for name, fn in checks:
        res = _timed(name, fn)
        results.append(res)
        if report is not None:
            report(res.line())
    return results
