"""Flat ``key = value`` configuration files for runs and trace generation.

Blank lines and ``#`` comments are ignored. Lists are comma separated.
Relative paths are resolved against the directory holding the config file.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from .errors import ConfigurationError
from .evaluation import DEFAULT_LEVEL
from .fusion import (
    DEFAULT_AVG_HORIZON,
    DEFAULT_MAX_GAP,
    DEFAULT_TRAINING_COUNT,
    STANDARD_FUSION_CONFIGS,
    FusionConfig,
)
from .synth import ProcessParams, SynthConfig
from .univariate import CATALOG, PredictorSpec

log = logging.getLogger(__name__)


def parse_key_values(text: str, source: str = "<config>") -> Dict[str, str]:
    """Read ``key = value`` lines; duplicate keys are an error."""
    out: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if key in out:
            raise ConfigurationError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _split(value: str) -> List[str]:
    return [p.strip() for p in value.split(",") if p.strip()]


def _as_int(key, value) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: expected an integer, got {value!r}") from None


def _as_float(key, value) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigurationError(f"config key {key!r}: expected a number, got {value!r}") from None


def _as_optional_float(key, value) -> Optional[float]:
    if value.lower() in ("", "none", "all"):
        return None
    return _as_float(key, value)


def _as_bool(key, value) -> bool:
    v = value.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"config key {key!r}: expected true/false, got {value!r}")


def _floats(key, value, count) -> Tuple[float, ...]:
    parts = _split(value)
    if len(parts) != count:
        raise ConfigurationError(f"config key {key!r}: expected {count} comma-separated numbers")
    return tuple(_as_float(key, p) for p in parts)


def _reject_unknown(values: Dict[str, str], known, what: str):
    extra = sorted(set(values) - set(known))
    if extra:
        raise ConfigurationError(f"unknown {what} config key(s): {', '.join(extra)}")


# --------------------------------------------------------------------------- run config


def parse_predictor_list(value: str) -> List[PredictorSpec]:
    """``all``, ``none`` or a comma list of catalog names (``:classed`` allowed)."""
    v = value.strip().lower()
    if v == "all":
        return list(CATALOG.values())
    if v in ("", "none"):
        return []
    return [PredictorSpec.parse(p) for p in _split(value)]


def parse_fusion_list(value: str, **kwargs) -> List[FusionConfig]:
    """``standard``, ``none`` or a comma list such as ``N:avg, ND:lv:2``."""
    v = value.strip().lower()
    if v == "standard":
        return [replace(c, **kwargs) for c in STANDARD_FUSION_CONFIGS]
    if v in ("", "none"):
        return []
    return [FusionConfig.parse(p, **kwargs) for p in _split(value)]


@dataclass
class RunConfig:
    transfers: Path
    probes: Path
    disks: Path
    predictors: List[PredictorSpec] = field(default_factory=lambda: list(CATALOG.values()))
    fusion: List[FusionConfig] = field(default_factory=lambda: list(STANDARD_FUSION_CONFIGS))
    training_count: int = DEFAULT_TRAINING_COUNT
    max_gap: float = DEFAULT_MAX_GAP
    avg_horizon: float = DEFAULT_AVG_HORIZON
    fit_window: Optional[float] = None
    level: float = DEFAULT_LEVEL
    by_class: bool = False
    strict: bool = False
    output: Optional[Path] = None
    name: str = ""

    def check_files(self):
        for key in ("transfers", "probes", "disks"):
            path = getattr(self, key)
            if not Path(path).is_file():
                raise ConfigurationError(f"config key {key!r}: file not found: {path}")


RUN_KEYS = (
    "transfers", "probes", "disks", "predictors", "fusion", "training_count",
    "max_gap_seconds", "avg_horizon_seconds", "fit_window_seconds", "level",
    "by_class", "strict", "output", "name",
)


def run_config_from_dict(values: Dict[str, str], base_dir=".") -> RunConfig:
    _reject_unknown(values, RUN_KEYS, "run")
    base = Path(base_dir)
    for key in ("transfers", "probes", "disks"):
        if key not in values:
            raise ConfigurationError(f"missing config key {key!r}")

    def path(key):
        p = Path(values[key])
        return p if p.is_absolute() else base / p

    max_gap = _as_float("max_gap_seconds", values.get("max_gap_seconds", str(DEFAULT_MAX_GAP)))
    horizon = _as_float("avg_horizon_seconds", values.get("avg_horizon_seconds", str(DEFAULT_AVG_HORIZON)))
    fit_window = _as_optional_float("fit_window_seconds", values.get("fit_window_seconds", "none"))
    level = _as_float("level", values.get("level", str(DEFAULT_LEVEL)))
    if not 0 < level < 1:
        raise ConfigurationError(f"config key 'level': must be in (0, 1), got {level}")
    training = _as_int("training_count", values.get("training_count", str(DEFAULT_TRAINING_COUNT)))
    if training < 0:
        raise ConfigurationError("config key 'training_count': must be >= 0")
    try:
        predictors = parse_predictor_list(values.get("predictors", "all"))
        fusion = parse_fusion_list(
            values.get("fusion", "standard"), max_gap=max_gap, avg_horizon=horizon, fit_window=fit_window
        )
    except ConfigurationError as exc:
        raise ConfigurationError(f"config key 'predictors'/'fusion': {exc}") from None
    return RunConfig(
        transfers=path("transfers"),
        probes=path("probes"),
        disks=path("disks"),
        predictors=predictors,
        fusion=fusion,
        training_count=training,
        max_gap=max_gap,
        avg_horizon=horizon,
        fit_window=fit_window,
        level=level,
        by_class=_as_bool("by_class", values.get("by_class", "false")),
        strict=_as_bool("strict", values.get("strict", "false")),
        output=path("output") if "output" in values else None,
        name=values.get("name", ""),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    return run_config_from_dict(parse_key_values(text, str(path)), path.parent)


# --------------------------------------------------------------------------- synth config

SYNTH_KEYS = (
    "seed", "duration", "start_time", "probe_period", "disk_period", "disk_offset",
    "transfer_rate", "size_mix", "intercept", "b_n", "b_d", "noise_stdev", "class_offsets",
    "n_mean", "n_stdev", "n_rho", "d_mean", "d_stdev", "d_rho",
    "level_stdev", "level_rho", "source_id", "output_dir", "prefix",
)


def synth_config_from_dict(values: Dict[str, str]) -> Tuple[SynthConfig, Dict[str, str]]:
    """Build a SynthConfig; returns it with the output settings (output_dir, prefix)."""
    _reject_unknown(values, SYNTH_KEYS, "generate")
    base = SynthConfig()
    kw = {}
    for key in ("seed",):
        if key in values:
            kw[key] = _as_int(key, values[key])
    if "start_time" in values:
        kw["start_time"] = _as_int("start_time", values["start_time"])
    for key in ("duration", "probe_period", "disk_period", "disk_offset", "transfer_rate",
                "intercept", "b_n", "b_d", "noise_stdev"):
        if key in values:
            kw[key] = _as_float(key, values[key])
    if "size_mix" in values:
        kw["size_mix"] = _floats("size_mix", values["size_mix"], 4)
    if "class_offsets" in values:
        kw["class_offsets"] = _floats("class_offsets", values["class_offsets"], 4)
    if "source_id" in values:
        kw["source_id"] = values["source_id"]

    def process(prefix, default: ProcessParams):
        return ProcessParams(
            _as_float(f"{prefix}_mean", values.get(f"{prefix}_mean", str(default.mean))),
            _as_float(f"{prefix}_stdev", values.get(f"{prefix}_stdev", str(default.stdev))),
            _as_float(f"{prefix}_rho", values.get(f"{prefix}_rho", str(default.rho))),
        )

    kw["n_process"] = process("n", base.n_process)
    kw["d_process"] = process("d", base.d_process)
    lp = base.level_process
    kw["level_process"] = ProcessParams(
        0.0,
        _as_float("level_stdev", values.get("level_stdev", str(lp.stdev))),
        _as_float("level_rho", values.get("level_rho", str(lp.rho))),
    )
    cfg = SynthConfig(**kw)
    cfg.validate()
    out = {"output_dir": values.get("output_dir", "."), "prefix": values.get("prefix", "synth")}
    return cfg, out


def load_synth_config(path) -> Tuple[SynthConfig, Dict[str, str]]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc.strerror}") from None
    cfg, out = synth_config_from_dict(parse_key_values(text, str(path)))
    od = Path(out["output_dir"])
    if not od.is_absolute():
        out["output_dir"] = str(path.parent / od)
    return cfg, out
