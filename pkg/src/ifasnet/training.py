"""Training and evaluation loops."""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import checkpoint
from . import tensor as T
from .audio import read_wav
from .losses import a2t_loss, clip_grad_norm, pit_loss, si_sdr, snr_loss
from .model import Model, ModelConfig
from .optim import Adam, lr_at
from .sim.mixture import BUCKET_LABELS, overlap_bucket

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass
class TrainConfig:
    lr: float = 1e-3
    lr_decay: float = 0.98
    decay_every: int = 2
    max_grad_norm: float = 5.0
    epochs: int = 10
    early_stop_patience: int = 10
    a2t_weight: float = 1.0
    batch_size: int = 1
    seed: int = 0

    def __post_init__(self):
        for name in ("lr", "max_grad_norm", "epochs", "early_stop_patience", "batch_size", "decay_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must be in (0, 1]")
        if self.a2t_weight < 0:
            raise ValueError("a2t_weight must be non-negative")

    def lr_for(self, epoch: int) -> float:
        return lr_at(epoch, self.lr, self.lr_decay, self.decay_every)


@dataclass
class Utterance:
    id: str
    mixture: np.ndarray          # (M, n)
    images: np.ndarray           # (2, M, n) reverberant source images
    overlap_ratio: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def n_mics(self) -> int:
        return self.mixture.shape[0]

    def refs(self, ref: int) -> np.ndarray:
        return self.images[:, ref]


def load_utterances(manifest) -> list[Utterance]:
    from .sim.dataset import load_manifest
    out = []
    for e in load_manifest(manifest):
        mix, fs = read_wav(e["mixture_path"])
        images = np.stack([read_wav(p, expect_fs=fs)[0] for p in e["target_paths"]])
        out.append(Utterance(e["id"], mix, images, float(e["overlap_ratio"]), e))
    return out


# -- checkpoints ----------------------------------------------------------------

DEFAULT_MIC_RANGE = (2, 6)


def save_model(model: Model, path, mic_range=DEFAULT_MIC_RANGE, fs: int = 16000) -> None:
    """IFSN tensor container plus a ``.json`` sidecar.

    The sidecar holds the model config, the microphone counts seen in
    training and the sample rate, which ``separate`` checks inputs against.
    """
    path = Path(path)
    checkpoint.save(path, model.state_dict())
    meta = {"model": model.cfg.to_dict(), "mic_range": [int(m) for m in mic_range], "fs": int(fs)}
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=1)


def read_sidecar(path) -> dict:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    if "model" not in meta:
        raise checkpoint.CheckpointError(f"{path}.json: missing model config")
    meta.setdefault("mic_range", list(DEFAULT_MIC_RANGE))
    meta.setdefault("fs", 16000)
    return meta


def load_model(path) -> Model:
    model = Model(ModelConfig.from_dict(read_sidecar(path)["model"]))
    model.load_state_dict(checkpoint.load(path))
    return model


# -- one step -------------------------------------------------------------------

def utterance_loss(model, utt: Utterance, ref: int, a2t_weight: float = 0.0,
                   a2t_source: int | None = None):
    """PIT SNR loss on the mixture, plus the weighted A2T term on one source image."""
    refs = utt.refs(ref)
    loss, perm = pit_loss(model(utt.mixture, ref), refs, snr_loss)
    if a2t_weight > 0 and a2t_source is not None:
        loss = loss + a2t_weight * a2t_loss(model, utt.images[a2t_source], refs[a2t_source], ref)
    return loss, perm


def train_step(model, opt: Adam, batch: Sequence[Utterance], cfg: TrainConfig, ref: int = 0,
               rng: np.random.Generator | None = None) -> float:
    """Accumulate gradients over ``batch``, clip, and update. Returns the mean loss."""
    opt.zero_grad()
    total = 0.0
    for utt in batch:
        src = int(rng.integers(2)) if (rng is not None and cfg.a2t_weight > 0) else None
        try:
            with T.Tape():
                loss, _ = utterance_loss(model, utt, ref, cfg.a2t_weight, src)
                loss = loss * (1.0 / len(batch))
        except T.NumericError as exc:
            raise DivergenceError(f"non-finite value while training on {utt.id}: {exc}") from exc
        if not np.isfinite(loss.item()):
            raise DivergenceError(f"non-finite loss on {utt.id}")
        if loss.requires_grad:  # parameter-free stand-ins have nothing to update
            T.backward(loss)
        total += loss.item()
    clip_grad_norm(opt.params, cfg.max_grad_norm)
    opt.step()
    return total


def validation_loss(model, data: Sequence[Utterance], ref: int = 0) -> float:
    with T.no_grad():
        return float(np.mean([utterance_loss(model, u, ref)[0].item() for u in data]))


# -- loop -----------------------------------------------------------------------

@dataclass
class TrainResult:
    history: list[dict]
    best_epoch: int
    best_val: float
    stopped_early: bool


def fit(model, train_data: Sequence[Utterance], cfg: TrainConfig,
        val_data: Sequence[Utterance] | None = None, out_dir=None, ref: int = 0,
        on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Epoch loop with step-decayed learning rate, best-model tracking and early stop.

    Without ``val_data`` the training loss drives model selection. With
    ``out_dir`` a JSON-lines log and ``best.ifsn``/``last.ifsn`` checkpoints
    are written (checkpoints only for :class:`Model` instances).
    """
    if not train_data:
        raise ValueError("no training data")
    opt = Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng(cfg.seed)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "train_log.jsonl").write_text("")
    mics = [u.n_mics for u in train_data if hasattr(u, "n_mics")]
    mic_range = (min(mics), max(mics)) if mics else DEFAULT_MIC_RANGE
    history, best_val, best_epoch, stale = [], np.inf, -1, 0
    stopped = False
    for epoch in range(cfg.epochs):
        opt.lr = cfg.lr_for(epoch)
        order = rng.permutation(len(train_data))
        losses = []
        for lo in range(0, len(order), cfg.batch_size):
            batch = [train_data[i] for i in order[lo:lo + cfg.batch_size]]
            losses.append(train_step(model, opt, batch, cfg, ref, rng))
        train_loss = float(np.mean(losses))
        val_loss = validation_loss(model, val_data, ref) if val_data else train_loss
        if not np.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        record = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss, "lr": opt.lr}
        history.append(record)
        if out is not None:
            with open(out / "train_log.jsonl", "a") as fh:
                fh.write(json.dumps(record) + "\n")
        if on_epoch is not None:
            on_epoch(record)
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            if out is not None and isinstance(model, Model):
                save_model(model, out / "best.ifsn", mic_range)
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                stopped = True
                break
    if out is not None and isinstance(model, Model):
        save_model(model, out / "last.ifsn", mic_range)
    return TrainResult(history, best_epoch, float(best_val), stopped)


def train(model_cfg: ModelConfig, manifest, cfg: TrainConfig, out_dir,
          val_manifest=None, on_epoch=None) -> TrainResult:
    model = Model(model_cfg)
    train_data = load_utterances(manifest)
    val_data = load_utterances(val_manifest) if val_manifest else None
    return fit(model, train_data, cfg, val_data, out_dir, model_cfg.ref, on_epoch)


# -- toy overfit ----------------------------------------------------------------

def overfit(model, mixture: np.ndarray, refs: np.ndarray, steps: int = 500, lr: float = 1e-3,
            max_grad_norm: float = 5.0, ref: int = 0, every: int = 25,
            on_step: Callable[[int, float, float], None] | None = None) -> list[tuple[int, float, float]]:
    """Fit one mixture with plain PIT-SNR; returns ``(step, loss, si_sdri)`` samples."""
    opt = Adam(model.parameters(), lr=lr)
    trace = []
    for step in range(steps):
        opt.zero_grad()
        with T.Tape():
            est = model(mixture, ref)
            loss, perm = pit_loss(est, refs)
        T.backward(loss)
        clip_grad_norm(opt.params, max_grad_norm)
        opt.step()
        if step % every == 0 or step == steps - 1:
            e = est.data[list(perm)]
            imp = float(np.mean([si_sdr(e[k], refs[k]) - si_sdr(mixture[ref], refs[k])
                                 for k in range(len(refs))]))
            trace.append((step, loss.item(), imp))
            if on_step is not None:
                on_step(step, loss.item(), imp)
    return trace


# -- evaluation -----------------------------------------------------------------

@dataclass
class EvalReport:
    records: list[dict]
    grid: dict[str, dict[str, float | None]]
    counts: dict[str, dict[str, int]]
    bucket_means: dict[str, float | None]
    mic_means: dict[str, float | None]
    overall: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls(**json.loads(text))


def best_perm_si_sdri(est: np.ndarray, refs: np.ndarray, mix_ref: np.ndarray):
    """Mean SI-SDRi under the permutation that maximizes mean SI-SDR."""
    S = len(refs)
    best = None
    for perm in itertools.permutations(range(S)):
        sdr = [si_sdr(est[perm[k]], refs[k]) for k in range(S)]
        if best is None or np.mean(sdr) > np.mean(best[1]):
            best = (perm, sdr)
    perm, sdr = best
    base = [si_sdr(mix_ref, refs[k]) for k in range(S)]
    return float(np.mean(np.subtract(sdr, base))), float(np.mean(sdr)), perm


def summarize(records: list[dict]) -> EvalReport:
    if not records:
        raise ValueError("no utterances to summarize")
    mics = sorted({r["n_mics"] for r in records})
    grid, counts = {}, {}
    for b in BUCKET_LABELS:
        grid[b], counts[b] = {}, {}
        for m in mics:
            vals = [r["si_sdri"] for r in records if r["overlap_bucket"] == b and r["n_mics"] == m]
            grid[b][str(m)] = float(np.mean(vals)) if vals else None
            counts[b][str(m)] = len(vals)

    def mean_of(sel):
        vals = [r["si_sdri"] for r in records if sel(r)]
        return float(np.mean(vals)) if vals else None

    return EvalReport(
        records=records, grid=grid, counts=counts,
        bucket_means={b: mean_of(lambda r, b=b: r["overlap_bucket"] == b) for b in BUCKET_LABELS},
        mic_means={str(m): mean_of(lambda r, m=m: r["n_mics"] == m) for m in mics},
        overall=float(np.mean([r["si_sdri"] for r in records])),
    )


def evaluate(model, data: Sequence[Utterance] | str | Path, ref: int | None = None) -> EvalReport:
    """Per-utterance best-permutation SI-SDRi, bucketed by overlap and mic count.

    ``model`` is anything callable as ``model(mixture, ref) -> (S, n)``.
    """
    if isinstance(data, (str, Path)):
        data = load_utterances(data)
    if ref is None:
        ref = getattr(getattr(model, "cfg", None), "ref", 0)
    records = []
    with T.no_grad():
        for u in data:
            out = model(u.mixture, ref)
            est = np.asarray(getattr(out, "data", out))
            imp, sdr, perm = best_perm_si_sdri(est, u.refs(ref), u.mixture[ref])
            records.append({"id": u.id, "n_mics": u.n_mics, "overlap_ratio": u.overlap_ratio,
                            "overlap_bucket": overlap_bucket(u.overlap_ratio),
                            "si_sdr": sdr, "si_sdri": imp, "perm": list(perm)})
    return summarize(records)
