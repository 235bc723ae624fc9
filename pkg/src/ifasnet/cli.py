"""``ifasnet`` command line: corpus, simulate, train, separate, evaluate, selfcheck.

Exit codes: 0 success, 1 check failures, 2 bad arguments, 3 I/O errors,
4 training divergence, 5 input channel count or sample rate mismatch.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_FAIL, EXIT_ARGS, EXIT_IO, EXIT_DIVERGED, EXIT_MISMATCH = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    """Bad arguments discovered after parsing (exit 2)."""


def _mic_counts(text: str) -> tuple[int, ...]:
    """``"2..6"`` or ``"2,4,6"``."""
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            counts = tuple(range(lo, hi + 1))
        else:
            counts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a range like 2..6 or a list like 2,4,6, got {text!r}")
    if not counts or min(counts) < 1:
        raise argparse.ArgumentTypeError(f"microphone counts must be positive, got {text!r}")
    return counts


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


# -- commands -------------------------------------------------------------------

def cmd_corpus(args) -> int:
    from .sim.corpus import write_synthetic_corpus
    speech, noise = write_synthetic_corpus(args.out, args.n_speech, args.n_noise, args.seconds,
                                           seed=args.seed)
    print(f"speech: {speech}")
    print(f"noise:  {noise}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .sim.dataset import bucket_histogram, build_dataset, load_manifest
    log = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    path = build_dataset(args.n, args.seed, args.out, args.speech_dir, args.noise_dir,
                         duration=args.duration, mics=args.mics, log=log)
    hist = bucket_histogram(load_manifest(path))
    print(f"manifest: {path}")
    for label, count in hist.items():
        print(f"  overlap {label:>7}: {count}")
    return EXIT_OK


def _describe(preset: str, cfg) -> str:
    from .model import PRESET_LABELS
    t = cfg.toggles
    names = ["MISO" if t["miso"] else "MIMO",
             "implicit" if t["implicit"] else "explicit",
             "fNCC" if t["feature"] == "fncc" else "tNCC",
             "context" if t["context"] else "no-context"]
    return f"preset {preset} ({PRESET_LABELS[preset]}): {', '.join(names)}"


def cmd_train(args) -> int:
    from .config import load_run_config
    from .model import Model
    from .training import train
    run = load_run_config(args.config, args.preset, epochs=args.epochs, seed=args.seed, lr=args.lr,
                          ref=args.ref, manifest=args.manifest, val_manifest=args.val_manifest,
                          out=args.out)
    print(_describe(run.preset, run.model))
    print(f"parameters: {Model(run.model).num_params()}")
    if args.describe:
        return EXIT_OK
    manifest, out = run.paths.get("manifest"), run.paths.get("out")
    if not manifest or not out:
        raise UsageError("train needs --manifest and --out (or manifest/out in the config file)")
    Path(out).mkdir(parents=True, exist_ok=True)
    (Path(out) / "run.cfg").write_text(run.to_text())
    t0 = time.perf_counter()

    def report(rec):
        print(f"epoch {rec['epoch']:3d}  train {rec['train_loss']:8.3f}  val {rec['val_loss']:8.3f}  "
              f"lr {rec['lr']:.2e}  {time.perf_counter() - t0:7.1f}s", flush=True)

    result = train(run.model, manifest, run.train, out, run.paths.get("val_manifest"), report)
    stop = " (early stop)" if result.stopped_early else ""
    print(f"best epoch {result.best_epoch}, val loss {result.best_val:.3f}{stop}")
    print(f"checkpoint: {Path(out) / 'best.ifsn'}")
    return EXIT_OK


def cmd_separate(args) -> int:
    from .audio import AudioFormatError, read_wav, write_wav
    from .tensor import no_grad
    from .training import load_model, read_sidecar
    meta = read_sidecar(args.checkpoint)
    model = load_model(args.checkpoint)
    try:
        mix, fs = read_wav(args.input)
    except ValueError as exc:  # unreadable or non-WAV content
        raise AudioFormatError(f"{args.input}: {exc}") from exc
    lo, hi = meta["mic_range"]
    if fs != meta["fs"]:
        print(f"error: {args.input} is {fs} Hz; the model expects {meta['fs']} Hz", file=sys.stderr)
        return EXIT_MISMATCH
    if not lo <= mix.shape[0] <= hi:
        print(f"error: {mix.shape[0]} channels; the model was trained on {lo}..{hi}", file=sys.stderr)
        return EXIT_MISMATCH
    with no_grad():
        est = model(mix, args.ref).data
    if not np.all(np.isfinite(est)):
        print("error: separation produced non-finite samples", file=sys.stderr)
        return EXIT_FAIL
    peak = float(np.max(np.abs(est)))
    if peak > 0.99:  # one gain for all sources keeps their relative level
        est = est * (0.99 / peak)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.input).stem
    for k, y in enumerate(est):
        path = out / f"{stem}_s{k + 1}.wav"
        write_wav(path, y, fs)
        print(path)
    return EXIT_OK


def _identity(mixture, ref=0):
    x = np.asarray(mixture)
    return np.stack([x[ref], x[ref]])


def cmd_evaluate(args) -> int:
    from .training import evaluate, load_model
    if args.identity:
        model = _identity
    elif args.checkpoint:
        model = load_model(args.checkpoint)
    else:
        raise UsageError("evaluate needs --checkpoint or --identity")
    report = evaluate(model, args.manifest, ref=args.ref)
    Path(args.report).parent.mkdir(parents=True, exist_ok=True)
    Path(args.report).write_text(report.to_json())
    mics = sorted({r["n_mics"] for r in report.records})
    print("SI-SDRi (dB)  " + "".join(f"{m:>8}" for m in [f"{m}ch" for m in mics]) + "    mean")
    for bucket, row in report.grid.items():
        cells = "".join(f"{row[str(m)]:8.2f}" if row[str(m)] is not None else f"{'-':>8}" for m in mics)
        mean = report.bucket_means[bucket]
        print(f"{bucket:>12}  {cells}  " + (f"{mean:6.2f}" if mean is not None else "     -"))
    print(f"overall {report.overall:.2f} dB over {len(report.records)} utterances; report: {args.report}")
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    from .selfcheck import run_selfcheck
    t0 = time.perf_counter()
    results = run_selfcheck(seeds=args.seeds)
    failed = [r.name for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed in {time.perf_counter() - t0:.1f}s")
    return EXIT_FAIL if failed else EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    from .model import PRESETS
    p = argparse.ArgumentParser(prog="ifasnet", description="Multi-channel speech separation toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("corpus", help="write a synthetic speech/noise corpus")
    c.add_argument("--out", required=True)
    c.add_argument("--n-speech", type=_positive_int, default=20)
    c.add_argument("--n-noise", type=_positive_int, default=10)
    c.add_argument("--seconds", type=_positive_float, default=5.0)
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_corpus)

    s = sub.add_parser("simulate", help="synthesize a reverberant multi-channel dataset")
    s.add_argument("--n", type=_positive_int, required=True, help="number of utterances")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--speech-dir", required=True)
    s.add_argument("--noise-dir", required=True)
    s.add_argument("--duration", type=_positive_float, default=4.0, help="seconds per utterance")
    s.add_argument("--mics", type=_mic_counts, default=(2, 3, 4, 5, 6), help="e.g. 2..6 or 2,4,6")
    s.add_argument("-v", "--verbose", action="store_true")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train one ablation configuration")
    t.add_argument("--preset", choices=list(PRESETS))
    t.add_argument("--config", help="flat key = value file overlaid on the preset")
    t.add_argument("--manifest")
    t.add_argument("--val-manifest")
    t.add_argument("--out")
    t.add_argument("--epochs", type=_positive_int)
    t.add_argument("--seed", type=int)
    t.add_argument("--lr", type=_positive_float)
    t.add_argument("--ref", type=int, help="reference microphone (default 0)")
    t.add_argument("--describe", action="store_true", help="print toggles and parameter count only")
    t.set_defaults(func=cmd_train)

    sp = sub.add_parser("separate", help="separate a multi-channel WAV file")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--ref", type=int)
    sp.set_defaults(func=cmd_separate)

    e = sub.add_parser("evaluate", help="SI-SDRi over a manifest, by overlap and mic count")
    e.add_argument("--checkpoint")
    e.add_argument("--identity", action="store_true", help="score the unprocessed mixture instead")
    e.add_argument("--manifest", required=True)
    e.add_argument("--report", required=True)
    e.add_argument("--ref", type=int)
    e.set_defaults(func=cmd_evaluate)

    k = sub.add_parser("selfcheck", help="run the invariant suite")
    k.add_argument("--seeds", type=_positive_int, default=20)
    k.set_defaults(func=cmd_selfcheck)
    return p


def main(argv=None) -> int:
    from .audio import AudioFormatError
    from .checkpoint import CheckpointError
    from .config import ConfigError
    from .sim.dataset import CorpusError
    from .training import DivergenceError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, CorpusError, CheckpointError, AudioFormatError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
