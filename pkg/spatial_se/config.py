"""
Pipeline configuration: one YAML file, parsed strictly into dataclasses.

Environment overrides (after `.env` is loaded):
    SPATIAL_SE__ENHANCEMENT__BEAMFORMER__MU=0.5
sets enhancement.beamformer.mu; values use YAML scalar rules.
"""
import dataclasses
import hashlib
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

import yaml
from dotenv import load_dotenv

from .beamforming.weights import VARIANTS, BeamformerConfig
from .errors import ConfigError, MissingInputError
from .losses.mtl import MtlSpec
from .losses.wrappers import build_wrapper
from .metrics.evaluate import validate_metrics
from .simulate.scene import SceneConstraints
from .stft import StftConfig

ENV_PREFIX = "SPATIAL_SE__"
METHODS = VARIANTS + ("auxiva_iss", "passthrough")
MASK_SOURCES = ("oracle_irm", "from_files")
REFERENCES = ("reverberant", "anechoic")
NUM_STAGES = 4


@dataclass
class StagesSection:
    start: int = 1
    stop: int = NUM_STAGES


@dataclass
class IoSection:
    corpus_manifest: str = ""
    work_dir: str = "work"
    seed: int = 0


@dataclass
class SpatializerSection:
    noise_bank: str = ""
    diffuse_bank: str = ""
    alt_diffuse_bank: Optional[str] = None
    count: Optional[int] = None
    sample_rate: int = 16000
    max_order: Optional[int] = None
    scene: SceneConstraints = field(default_factory=SceneConstraints)


@dataclass
class BeamformerSection:
    ref_channel: int = 0
    mu: float = 1.0
    diag_loading: float = 1e-6
    taps: int = 5
    delay: int = 3
    power_floor: float = 1e-8
    mask_floor: float = 1e-4

    def to_config(self, variant: str) -> BeamformerConfig:
        return BeamformerConfig(variant=variant, **dataclasses.asdict(self))


@dataclass
class BssSection:
    n_iter: int = 50
    n_fft: int = 1024
    hop: int = 256
    contrast_eps: float = 1e-8


@dataclass
class EnhancementSection:
    method: str = "mvdr_souden"
    mask_source: str = "oracle_irm"
    mask_dir: Optional[str] = None
    stft: StftConfig = field(default_factory=StftConfig)
    beamformer: BeamformerSection = field(default_factory=BeamformerSection)
    bss: BssSection = field(default_factory=BssSection)


@dataclass
class ScoringSection:
    metrics: List[str] = field(default_factory=lambda: ["pesq", "stoi", "si_snr", "si_snri"])
    reference: str = "reverberant"
    ref_channel: int = 0


@dataclass
class PipelineConfig:
    stages: StagesSection = field(default_factory=StagesSection)
    io: IoSection = field(default_factory=IoSection)
    spatializer: SpatializerSection = field(default_factory=SpatializerSection)
    enhancement: EnhancementSection = field(default_factory=EnhancementSection)
    scoring: ScoringSection = field(default_factory=ScoringSection)
    loss_eval: Optional[MtlSpec] = None

    def stage_range(self) -> range:
        return range(self.stages.start, self.stages.stop + 1)


# ---------- strict parsing ------------------------------------------------------

def _coerce(value: Any, tp: Any, key: str) -> Any:
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            if type(None) in args:
                return None
            raise ConfigError(key, "must not be null")
        return _coerce(value, inner[0], key)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, key)
    if tp is MtlSpec:
        if not isinstance(value, list):
            raise ConfigError(key, "expected a list of loss entries")
        try:
            return MtlSpec.from_records(value)
        except (ValueError, TypeError) as e:
            raise ConfigError(key, str(e)) from e
    if origin in (list, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list, got {type(value).__name__}")
        if origin is tuple and args and args[-1] is not Ellipsis:
            if len(value) != len(args):
                raise ConfigError(key, f"expected {len(args)} items, got {len(value)}")
            return tuple(_coerce(v, a, f"{key}[{i}]") for i, (v, a) in enumerate(zip(value, args)))
        elem = args[0] if args else Any
        items = [_coerce(v, elem, f"{key}[{i}]") for i, v in enumerate(value)]
        return tuple(items) if origin is tuple else items
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(key, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        # YAML 1.1 reads "1e-6" (no dot) as a string
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                raise ConfigError(key, f"expected a number, got {value!r}") from None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    return value


def _build(cls, data: Any, prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(prefix or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}.{key}" if prefix else str(key), "unknown key")
    kwargs = {
        k: _coerce(v, hints[k], f"{prefix}.{k}" if prefix else k) for k, v in data.items()
    }
    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (ValueError, TypeError) as e:
        raise ConfigError(prefix or "<root>", str(e)) from e


def _validate(cfg: PipelineConfig) -> PipelineConfig:
    st = cfg.stages
    if not 1 <= st.start <= st.stop <= NUM_STAGES:
        raise ConfigError("stages", f"need 1 <= start <= stop <= {NUM_STAGES}, got {st.start}..{st.stop}")
    enh = cfg.enhancement
    if enh.method not in METHODS:
        raise ConfigError("enhancement.method", f"unknown method {enh.method!r}; expected one of {list(METHODS)}")
    if enh.mask_source not in MASK_SOURCES:
        raise ConfigError("enhancement.mask_source", f"expected one of {list(MASK_SOURCES)}")
    if enh.mask_source == "from_files" and not enh.mask_dir:
        raise ConfigError("enhancement.mask_dir", "required when mask_source is from_files")
    if enh.stft.sample_rate != cfg.spatializer.sample_rate:
        raise ConfigError("enhancement.stft.sample_rate",
                          f"{enh.stft.sample_rate} != spatializer.sample_rate {cfg.spatializer.sample_rate}")
    if enh.method in VARIANTS:
        try:
            enh.beamformer.to_config(enh.method).validate()
        except ValueError as e:
            raise ConfigError("enhancement.beamformer", str(e)) from e
    try:
        StftConfig(n_fft=enh.bss.n_fft, hop=enh.bss.hop, sample_rate=cfg.spatializer.sample_rate)
    except ValueError as e:
        raise ConfigError("enhancement.bss", str(e)) from e
    if enh.bss.n_iter < 0 or enh.bss.contrast_eps <= 0:
        raise ConfigError("enhancement.bss", "need n_iter >= 0 and contrast_eps > 0")
    if cfg.spatializer.count is not None and cfg.spatializer.count < 0:
        raise ConfigError("spatializer.count", "must be >= 0")
    if cfg.spatializer.max_order is not None and cfg.spatializer.max_order < 1:
        raise ConfigError("spatializer.max_order", "must be >= 1")
    sc = cfg.scoring
    try:
        validate_metrics(sc.metrics)
    except ValueError as e:
        raise ConfigError("scoring.metrics", str(e)) from e
    if sc.reference not in REFERENCES:
        raise ConfigError("scoring.reference", f"expected one of {list(REFERENCES)}")
    if sc.ref_channel < 0 or enh.beamformer.ref_channel < 0:
        raise ConfigError("scoring.ref_channel", "channel indices must be >= 0")
    if cfg.loss_eval is not None:
        for i, entry in enumerate(cfg.loss_eval.entries):
            try:
                build_wrapper(entry.wrapper, entry.criterion.build())
            except ValueError as e:
                raise ConfigError(f"loss_eval[{i}]", str(e)) from e
    return cfg


def apply_env_overrides(raw: Dict[str, Any], environ: Optional[Mapping[str, str]] = None) -> Dict[str, Any]:
    environ = os.environ if environ is None else environ
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX):
            continue
        path = [p.lower() for p in name[len(ENV_PREFIX):].split("__") if p]
        key = ".".join(path)
        if not path:
            raise ConfigError(name, "empty override path")
        node = raw
        for part in path[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(key, f"cannot override inside non-mapping {part!r}")
            node = child
        try:
            node[path[-1]] = yaml.safe_load(environ[name])
        except yaml.YAMLError as e:
            raise ConfigError(key, f"unparseable override value: {e}") from e
    return raw


def parse_config(raw: Any) -> PipelineConfig:
    return _validate(_build(PipelineConfig, raw, ""))


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None,
                dotenv: bool = True) -> PipelineConfig:
    """Read YAML (or defaults when `path` is None), apply env overrides, validate."""
    if dotenv:
        load_dotenv(override=False)
    raw: Any = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise MissingInputError(f"config not found: {p}")
        try:
            raw = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as e:
            raise ConfigError("<root>", f"invalid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "top level must be a mapping")
    return parse_config(apply_env_overrides(raw, environ))


# ---------- normalized form -----------------------------------------------------

def _plain(value: Any) -> Any:
    if isinstance(value, MtlSpec):
        return value.to_records()
    if dataclasses.is_dataclass(value):
        return {f.name: _plain(getattr(value, f.name)) for f in dataclasses.fields(value) if f.init}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    return value


def config_to_dict(cfg: PipelineConfig) -> Dict[str, Any]:
    return _plain(cfg)


def dump_config(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)


def config_hash(cfg: PipelineConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode("utf-8")).hexdigest()


def section_hash(cfg: PipelineConfig, sections: Sequence[str]) -> str:
    """SHA-256 over the named top-level sections; io.work_dir is left out."""
    data = config_to_dict(cfg)
    data["io"] = {k: v for k, v in data["io"].items() if k != "work_dir"}
    picked = {name: data[name] for name in sections}
    return hashlib.sha256(yaml.safe_dump(picked, sort_keys=True).encode("utf-8")).hexdigest()
