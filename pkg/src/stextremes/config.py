"""Flat ``key = value`` pipeline configuration."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .detect import STRUCTURE_NAMES, canonical_name
from .errors import ConfigError, DomainError
from .grid import format_month, parse_month

FORMATS = ("csv", "json", "svg")


@dataclass(frozen=True)
class PipelineConfig:
    gpp: str = ""
    tas: str = ""
    pr: str = ""
    start: int | None = None
    end: int | None = None
    ssa_window: int | None = None
    gpp_is_anomaly: bool = False
    drivers_preprocessed: bool = False
    percentile: float = 10.0
    tail: str = "negative"
    split_tails: bool = True
    structures: tuple[str, ...] = STRUCTURE_NAMES
    lesd_connectivity: int = 8
    wrap_lon: str = "auto"  # auto | on | off
    top_k: int = 100
    lags: int = 3
    reference_mode: str = "footprint-climatology"
    powerlaw_method: str = "logbin"
    powerlaw_sesd: bool = False
    out: str = "stx_out"
    formats: tuple[str, ...] = FORMATS
    base_dir: str = field(default=".", compare=False)

    def path(self, name: str) -> Path | None:
        value = getattr(self, name)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def canonical(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        d["start"] = format_month(self.start) if self.start is not None else None
        d["end"] = format_month(self.end) if self.end is not None else None
        d["structures"] = list(self.structures)
        d["formats"] = list(self.formats)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in ("gpp", "tas", "pr", "out", "reference_mode", "powerlaw_method"):
        return raw
    if key in ("start", "end"):
        return parse_month(raw) if raw else None
    if key == "ssa_window":
        return int(raw) if raw and raw.lower() != "auto" else None
    if key in ("gpp_is_anomaly", "drivers_preprocessed", "split_tails", "powerlaw_sesd"):
        return _bool(raw)
    if key == "percentile":
        return float(raw)
    if key in ("top_k", "lags", "lesd_connectivity"):
        return int(raw)
    if key == "tail":
        t = {"neg": "negative", "pos": "positive"}.get(raw.lower(), raw.lower())
        if t not in ("negative", "positive", "both"):
            raise ValueError(f"tail must be neg|pos|both, got {raw!r}")
        return t
    if key == "wrap_lon":
        t = raw.lower()
        if t not in ("auto", "on", "off"):
            raise ValueError(f"wrap_lon must be auto|on|off, got {raw!r}")
        return t
    if key == "structures":
        return tuple(canonical_name(s) for s in raw.split(",") if s.strip())
    if key == "formats":
        fmts = tuple(s.strip().lower() for s in raw.split(",") if s.strip())
        bad = [f for f in fmts if f not in FORMATS]
        if bad:
            raise ValueError(f"unknown output format(s): {', '.join(bad)}")
        return fmts
    raise KeyError(key)


_KEYS = {f.name for f in fields(PipelineConfig)} - {"base_dir"}


def parse_config(text: str, base_dir: str = ".") -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key = value")
        if key not in _KEYS:
            raise ConfigError(f"config line {lineno}: unknown key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"config line {lineno} ({key}): {exc}") from exc
    return validate(PipelineConfig(base_dir=base_dir, **values))


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=str(path.parent))


def override(cfg: PipelineConfig, **raw) -> PipelineConfig:
    """Apply textual overrides (e.g. from CLI flags); ``None`` values are skipped."""
    values = {}
    for key, value in raw.items():
        if value is None:
            continue
        try:
            values[key] = _parse_value(key, value) if isinstance(value, str) else value
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"--{key.replace('_', '-')}: {exc}") from exc
    return validate(replace(cfg, **values))


def validate(cfg: PipelineConfig) -> PipelineConfig:
    if not cfg.structures:
        raise ConfigError("no neighborhood structure selected")
    for s in cfg.structures:
        try:
            canonical_name(s)
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
    if not 0.0 < cfg.percentile < 100.0:
        raise ConfigError(f"percentile must be in (0, 100), got {cfg.percentile}")
    if cfg.top_k < 1 or cfg.lags < 0:
        raise ConfigError("top_k must be >= 1 and lags >= 0")
    if cfg.lesd_connectivity not in (4, 8):
        raise ConfigError("lesd_connectivity must be 4 or 8")
    if cfg.reference_mode not in ("footprint-climatology", "global-snapshot"):
        raise ConfigError(f"unknown reference_mode {cfg.reference_mode!r}")
    if cfg.powerlaw_method not in ("logbin", "mle"):
        raise ConfigError(f"unknown powerlaw_method {cfg.powerlaw_method!r}")
    if cfg.start is not None and cfg.end is not None and cfg.end < cfg.start:
        raise ConfigError("end precedes start")
    return cfg


def check_inputs(cfg: PipelineConfig, need_gpp: bool = True) -> None:
    names = (["gpp"] if need_gpp else []) + ["tas", "pr"]
    for name in names:
        p = cfg.path(name)
        if name == "gpp" and p is None:
            raise ConfigError("no gpp input configured")
        if p is not None and not p.is_file():
            raise ConfigError(f"{name} input {p} does not exist")
    if bool(cfg.tas) != bool(cfg.pr):
        raise ConfigError("attribution needs both tas and pr (or neither)")


def write_config(cfg: PipelineConfig) -> str:
    lines = []
    for key, value in cfg.canonical().items():
        if value is None:
            continue
        if isinstance(value, list):
            value = ",".join(value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
