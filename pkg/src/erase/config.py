"""Run configuration: nested dataclasses loaded from JSON.

A single JSON file may hold a ``scene`` section (read by ``erase simulate``)
and the pipeline sections ``dsp``, ``ica``, ``erase``, ``conventional``,
``metrics`` and ``trials`` (read by ``erase run``). Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .dsp import FilterSpec, bandpass, lowpass
from .emg import EmgSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DspConfig:
    preprocess: FilterSpec = bandpass(3.0, 200.0, 3)
    gamma: FilterSpec = bandpass(80.0, 160.0, 4)
    mu: FilterSpec = bandpass(8.0, 12.0, 4)
    smoother: FilterSpec = lowpass(4.0, 4)
    zero_phase: bool = False
    stft_window: int = 512
    stft_hop: int = 128  # 75% overlap


@dataclass(frozen=True)
class IcaConfig:
    n_components: Optional[int] = None
    nonlinearity: str = "tanh"
    max_iter: int = 500
    tol: float = 1e-5
    seed: int = 0
    retries: int = 2


@dataclass(frozen=True)
class EraseConfig:
    theta: float = 1.0
    # Virtual-electrode EMG; louder than the scalp contamination so that
    # components driven by it load mostly on the virtual channels.
    emg: EmgSpec = EmgSpec(amplitude_scale=100.0)


@dataclass(frozen=True)
class ConventionalConfig:
    gamma_fraction: float = 0.5


@dataclass(frozen=True)
class MetricsConfig:
    alpha: float = 0.05
    t_variant: str = "n_minus_1"
    n_force_levels: int = 10
    fd_time_unit_ms: float = 1.0
    fd_amp_unit_uv: float = 1.0


@dataclass(frozen=True)
class TrialConfig:
    idle_len_s: float = 1.0
    move_len_s: float = 2.0


@dataclass(frozen=True)
class PipelineConfig:
    dsp: DspConfig = DspConfig()
    ica: IcaConfig = IcaConfig()
    erase: EraseConfig = EraseConfig()
    conventional: ConventionalConfig = ConventionalConfig()
    metrics: MetricsConfig = MetricsConfig()
    trials: TrialConfig = TrialConfig()


def build(cls, data: Any, where: str = ""):
    """Instantiate dataclass ``cls`` from nested dicts, rejecting unknown keys."""
    if dataclasses.is_dataclass(data):
        return data
    if not isinstance(data, dict):
        raise ConfigError(f"{where or cls.__name__}: expected an object, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where or cls.__name__}: unknown keys {unknown}")
    kwargs = {}
    for key, val in data.items():
        typ = hints[key]
        origin = typing.get_origin(typ)
        if origin is typing.Union:
            args = [a for a in typing.get_args(typ) if a is not type(None)]
            typ = args[0] if val is not None else type(None)
        path = f"{where}.{key}" if where else key
        if dataclasses.is_dataclass(typ):
            kwargs[key] = build(typ, val, path)
        elif typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
            kwargs[key] = float(val)
        elif typ is int and isinstance(val, int) and not isinstance(val, bool):
            kwargs[key] = val
        elif typ in (str, bool) and isinstance(val, typ):
            kwargs[key] = val
        elif typ is type(None) and val is None:
            kwargs[key] = None
        elif typing.get_origin(typ) is typing.Literal and val in typing.get_args(typ):
            kwargs[key] = val
        elif typ is tuple or typing.get_origin(typ) is tuple:
            if not isinstance(val, (list, tuple)):
                raise ConfigError(f"{path}: expected a list, got {val!r}")
            args = typing.get_args(typ)
            item = args[0] if len(args) == 2 and args[1] is Ellipsis else None
            if item is not None and dataclasses.is_dataclass(item):
                kwargs[key] = tuple(build(item, v, f"{path}[{i}]") for i, v in enumerate(val))
            else:
                kwargs[key] = tuple(val)
        else:
            raise ConfigError(f"{path}: invalid value {val!r}")
    return cls(**kwargs)


def to_dict(obj) -> dict:
    return dataclasses.asdict(obj)


def load_json(path) -> dict:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


_PIPELINE_KEYS = {f.name for f in dataclasses.fields(PipelineConfig)}


def pipeline_config(raw: Optional[dict] = None) -> PipelineConfig:
    raw = {k: v for k, v in (raw or {}).items() if k in _PIPELINE_KEYS}
    cfg = build(PipelineConfig, raw)
    validate_pipeline(cfg)
    return cfg


def validate_pipeline(cfg: PipelineConfig) -> None:
    if cfg.ica.nonlinearity not in ("tanh", "cube"):
        raise ConfigError(f"ica.nonlinearity must be tanh or cube, got {cfg.ica.nonlinearity!r}")
    if cfg.metrics.t_variant not in ("n_minus_1", "standard"):
        raise ConfigError(f"metrics.t_variant must be n_minus_1 or standard, got {cfg.metrics.t_variant!r}")
    if not 0 < cfg.conventional.gamma_fraction <= 1:
        raise ConfigError("conventional.gamma_fraction must lie in (0, 1]")
    if not cfg.erase.theta > 0:
        raise ConfigError(f"erase.theta must be positive, got {cfg.erase.theta}")
    if cfg.ica.max_iter < 1 or not cfg.ica.tol > 0 or cfg.ica.retries < 0:
        raise ConfigError("ica.max_iter >= 1, ica.tol > 0 and ica.retries >= 0 required")
    if cfg.ica.n_components is not None and cfg.ica.n_components < 1:
        raise ConfigError("ica.n_components must be positive")
    if cfg.metrics.n_force_levels < 2 or not 0 < cfg.metrics.alpha < 1:
        raise ConfigError("metrics.n_force_levels >= 2 and 0 < metrics.alpha < 1 required")
    if cfg.trials.idle_len_s <= 0 or cfg.trials.move_len_s <= 0:
        raise ConfigError("trial epoch lengths must be positive")
    if cfg.dsp.stft_window < 2 or cfg.dsp.stft_hop < 1:
        raise ConfigError("dsp.stft_window must be >= 2 and dsp.stft_hop >= 1")
    for name in ("preprocess", "gamma", "mu", "smoother"):
        spec = getattr(cfg.dsp, name)
        if spec.kind not in ("bandpass", "lowpass"):
            raise ConfigError(f"dsp.{name}.kind must be bandpass or lowpass")
