"""Run configuration: a preset overlaid with flat ``key = value`` settings.

Example file::

    preset = ifasnet
    hidden = 32
    lr = 0.0005
    epochs = 20

Keys are routed by name to the framing, separator, model or training
settings; ``manifest``, ``val_manifest`` and ``out`` are paths. A
``[run]`` section header is optional.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .framing import FramingConfig
from .model import PRESETS, ModelConfig, preset_config
from .separator import SeparatorConfig
from .training import TrainConfig

PATH_KEYS = ("manifest", "val_manifest", "out")
_TOGGLE_KEYS = ("miso", "implicit", "feature_kind", "context")


class ConfigError(ValueError):
    pass


def _field_types() -> dict[str, tuple[str, type]]:
    table = {}
    for section, cls in (("framing", FramingConfig), ("separator", SeparatorConfig),
                         ("model", ModelConfig), ("train", TrainConfig)):
        for f in dataclasses.fields(cls):
            if f.name in ("framing", "separator"):
                continue
            default = f.default if f.default is not dataclasses.MISSING else None
            table.setdefault(f.name, (section, type(default)))
    return table


FIELDS = _field_types()


def _coerce(key: str, text: str, kind: type):
    try:
        if kind is bool:
            low = text.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(text)
            return low in ("true", "1", "yes", "on")
        return kind(text.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


@dataclass
class RunConfig:
    preset: str = "ifasnet"
    model: ModelConfig = field(default_factory=lambda: preset_config("ifasnet"))
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: dict = field(default_factory=dict)
    overrides: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"preset = {self.preset}"]
        lines += [f"{k} = {v}" for k, v in self.overrides.items()]
        lines += [f"{k} = {v}" for k, v in self.paths.items()]
        return "\n".join(lines) + "\n"


def build_run_config(preset: str | None = None, values: dict | None = None) -> RunConfig:
    """Apply ``values`` (strings or typed) on top of ``preset``.

    The preset fixes the four ablation toggles; setting any of them
    explicitly is rejected so a preset name always means the same model.
    """
    values = dict(values or {})
    preset = values.pop("preset", None) or preset or "ifasnet"
    if preset not in PRESETS:
        raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
    model_kw, train_kw, paths, typed = {}, {}, {}, {}
    for key, raw in values.items():
        if key in PATH_KEYS:
            paths[key] = str(raw)
            continue
        if key in _TOGGLE_KEYS:
            raise ConfigError(f"{key} is fixed by the preset; pick another preset instead")
        if key not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        section, kind = FIELDS[key]
        val = _coerce(key, raw, kind) if isinstance(raw, str) else raw
        typed[key] = val
        if key == "seed":  # one seed drives both initialization and data order
            model_kw[key] = train_kw[key] = val
        else:
            (train_kw if section == "train" else model_kw)[key] = val
    try:
        model = preset_config(preset, **model_kw)
        train = TrainConfig(**train_kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(preset, model, train, paths, typed)


def read_config_file(path) -> dict[str, str]:
    text = Path(path).read_text()
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values = {}
    for section in parser.sections():
        values.update(parser[section])
    return values


def load_run_config(path=None, preset: str | None = None, **overrides) -> RunConfig:
    """File values overlay the preset; keyword ``overrides`` overlay both.

    A preset named in the file is used unless ``preset`` is given explicitly.
    """
    values = read_config_file(path) if path else {}
    if preset is not None:
        values["preset"] = preset
    values.update({k: v for k, v in overrides.items() if v is not None})
    return build_run_config(None, values)
