"""FaSNet / iFaSNet assembly over the four ablation toggles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .beamformer import SeparatedOutput, explicit_filter_and_sum, implicit_filter, render_waveforms
from .features import (
    ContextDecoder, ContextEncoder, MLPContextDecoder, MLPContextEncoder,
    context_decode, context_encode, encode_center_frames, encode_context_frames,
    fncc, ncc_dim, tncc,
)
from .framing import FramingConfig, split_frames, stack_feature_context
from .nn import Module, uniform
from .separator import Separator, SeparatorConfig
from .tensor import Tensor

# preset name -> (miso, implicit, feature_kind, context), one per ablation row
PRESETS: dict[str, tuple[bool, bool, str, bool]] = {
    "fasnet": (False, False, "tncc", False),
    "fasnet-miso": (True, False, "tncc", False),
    "fasnet-fncc": (False, False, "fncc", False),
    "fasnet-miso-fncc": (True, False, "fncc", False),
    "fasnet-miso-implicit": (True, True, "tncc", False),
    "ifasnet-nocontext": (True, True, "fncc", False),
    "ifasnet": (True, True, "fncc", True),
}

PRESET_LABELS = {
    "fasnet": "FaSNet",
    "fasnet-miso": "+MISO",
    "fasnet-fncc": "+fNCC",
    "fasnet-miso-fncc": "+MISO+fNCC",
    "fasnet-miso-implicit": "+MISO+implicit",
    "ifasnet-nocontext": "+MISO+implicit+fNCC",
    "ifasnet": "+MISO+implicit+fNCC+context",
}


@dataclass(frozen=True)
class ModelConfig:
    framing: FramingConfig = field(default_factory=FramingConfig)
    separator: SeparatorConfig = field(default_factory=SeparatorConfig)
    n_feat: int = 64  # latent width N
    codec: str = "rnn"  # context codec variant: rnn | mlp
    codec_hidden: int = 40
    ref: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.codec not in ("rnn", "mlp"):
            raise ValueError(f"unknown context codec {self.codec!r}")
        if self.separator.feature_kind == "fncc" or self.separator.context:
            self.framing.feature_context  # raises if W is not a multiple of hop

    @property
    def toggles(self) -> dict[str, object]:
        s = self.separator
        return {"miso": s.miso, "implicit": s.implicit, "feature": s.feature_kind, "context": s.context}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["framing"] = FramingConfig(**d.get("framing", {}))
        d["separator"] = SeparatorConfig(**d.get("separator", {}))
        return cls(**d)


def preset_config(name: str, **overrides) -> ModelConfig:
    """Build a :class:`ModelConfig` for a named ablation preset.

    ``overrides`` may contain ``framing``/``separator`` field names as well as
    top-level ones; they are routed to the right sub-config.
    """
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    miso, implicit, kind, context = PRESETS[name]
    fr_fields = FramingConfig.__dataclass_fields__
    sep_fields = SeparatorConfig.__dataclass_fields__
    fr = {k: v for k, v in overrides.items() if k in fr_fields}
    sep = {k: v for k, v in overrides.items() if k in sep_fields}
    top = {k: v for k, v in overrides.items() if k not in fr_fields and k not in sep_fields}
    sep.update(miso=miso, implicit=implicit, feature_kind=kind, context=context)
    return ModelConfig(framing=FramingConfig(**fr), separator=SeparatorConfig(**sep), **top)


class Model(Module):
    """Filter-and-sum separation network over ``(M, samples)`` mixtures."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        fr, sep, N = cfg.framing, cfg.separator, cfg.n_feat
        L, W = fr.frame_len, fr.sample_context
        self.C = fr.feature_context if (sep.feature_kind == "fncc" or sep.context) else 0
        K = 1 + 2 * self.C
        self.enc_ctx = None if sep.implicit else uniform(rng, (L + 2 * W, N), 1 / np.sqrt(L + 2 * W))
        needs_center = sep.implicit or sep.feature_kind == "fncc"
        self.enc_center = uniform(rng, (L, N), 1 / np.sqrt(L)) if needs_center else None
        self.dec_U = uniform(rng, (N, L), 1 / np.sqrt(N)) if sep.implicit else None
        self.ctx_enc = self.ctx_dec = None
        if sep.context:
            if cfg.codec == "rnn":
                self.ctx_enc = ContextEncoder(rng, N, cfg.codec_hidden)
                self.ctx_dec = ContextDecoder(rng, N, cfg.codec_hidden)
            else:
                self.ctx_enc = MLPContextEncoder(rng, N, cfg.codec_hidden, K)
                self.ctx_dec = MLPContextDecoder(rng, N, cfg.codec_hidden)
        input_dim = N + ncc_dim(sep.feature_kind, W, self.C)
        filter_dim = N if sep.implicit else 1 + 2 * W
        self.sep = Separator(rng, sep, input_dim, filter_dim)

    _NAMES = {"enc_ctx": "enc.ctx", "enc_center": "enc.center", "dec_U": "dec.U"}

    def named_parameters(self, prefix: str = ""):
        for attr, name in self._NAMES.items():
            p = getattr(self, attr)
            if p is not None:
                yield prefix + name, p
        if self.ctx_enc is not None:
            yield from self.ctx_enc.named_parameters(prefix + "ctxcodec.enc.")
            yield from self.ctx_dec.named_parameters(prefix + "ctxcodec.dec.")
        yield from self.sep.named_parameters(prefix + "sep.")

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"checkpoint mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data[...] = state[k]

    def separate(self, mixture, ref: int | None = None) -> SeparatedOutput:
        """Forward pass: ``(M, samples)`` array -> per-source waveforms."""
        cfg, sep, fr = self.cfg, self.cfg.separator, self.cfg.framing
        ref = cfg.ref if ref is None else ref
        mix = np.atleast_2d(np.asarray(mixture, dtype=np.float64))
        n = mix.shape[1]
        if not 0 <= ref < mix.shape[0]:
            raise ValueError(f"reference channel {ref} out of range for {mix.shape[0]} channels")
        frames, ctx = split_frames(mix, fr)

        f = F = None
        if self.enc_center is not None:
            f = encode_center_frames(frames, self.enc_center)  # (M, T, N)
            if self.C > 0:
                F = stack_feature_context(f, self.C)  # (M, T, K, N)

        if not sep.implicit:
            chan = encode_context_frames(ctx, self.enc_ctx)
        elif sep.context:
            chan = context_encode(F, self.ctx_enc)
        else:
            chan = f
        ncc = tncc(frames, ctx, ref) if sep.feature_kind == "tncc" else fncc(F, ref)
        g = self.sep(T.concat([chan, ncc], axis=-1), ref=ref)  # (S, M', T, K)

        if not sep.implicit:
            est = explicit_filter_and_sum(ctx, g, ref)
            return render_waveforms(est, fr, n)
        g_ref = g[:, 0]  # (S, T, N)
        if sep.context:
            filt = context_decode(F[ref], g_ref, self.ctx_dec)
            z = implicit_filter(f[ref], filt, self.C, context=True)
        else:
            z = implicit_filter(f[ref], g_ref, self.C, context=False)
        return render_waveforms(z, fr, n, decoder=self.dec_U)

    def __call__(self, mixture, ref: int | None = None) -> Tensor:
        return self.separate(mixture, ref).waveforms


def build_model(preset: str, **overrides) -> Model:
    return Model(preset_config(preset, **overrides))


MICRO = dict(frame_len=8, hop=4, sample_context=8, n_feat=8, hidden=8, feature_dim=8,
             chunk_len=4, n_blocks=1, codec_hidden=3)


def micro_config(preset: str, seed: int = 0, **overrides) -> ModelConfig:
    """A tiny instance of ``preset`` for gradient checks and fast tests."""
    return preset_config(preset, **{**MICRO, "seed": seed, **overrides})
