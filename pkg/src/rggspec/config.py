"""Experiment configuration: TOML file plus command-line overrides."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class ExperimentConfig:
    dim: int = 2
    alpha: float = 4.0
    m_list: list = field(default_factory=lambda: [3, 4, 5])
    k_max: int = 6
    trials: int = 8
    master_seed: int = 20240601
    tol_solver: float = 1e-10
    tol_eig: float = 1e-6
    c_admissibility: float = 1.0
    sigma_mode: str = "estimate"
    sigma_value: float | None = None
    bulk_margin: float = 0.25
    two_scale: bool = True
    alpha_grid: list = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0, 3.0, 4.0])
    probe_side: float = 81.0
    homog_box_side: float = 243.0
    directions: list = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    mc_k: int = 1
    out_dir: str = "out"
    format: str = "csv"
    svg: bool = False

    def as_dict(self):
        return dataclasses.asdict(self)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
# keys accepted inside an [output] table
_OUTPUT_KEYS = {"dir": "out_dir", "out_dir": "out_dir", "format": "format", "svg": "svg"}


def _line_of(text: str, key: str):
    if text is None:
        return None
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.M)
    hit = pat.search(text)
    return text.count("\n", 0, hit.start()) + 1 if hit else None


def _where(key, text):
    line = _line_of(text, key)
    return f"field '{key}'" + (f" (line {line})" if line else "")


def _coerce(name, value, text):
    f = _FIELDS[name]
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError("expected true/false")
            return value
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, bool) or not float(value).is_integer():
                raise TypeError("expected an integer")
            return int(value)
        if isinstance(default, float) or name == "sigma_value":
            if value is None:
                return None
            if isinstance(value, bool):
                raise TypeError("expected a number")
            return float(value)
        if isinstance(default, list):
            if not isinstance(value, list):
                raise TypeError("expected a list")
            return list(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError("expected a string")
            return value
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(name, text)}: {exc}, got {value!r}") from None
    return value


def validate(cfg: ExperimentConfig, text: str | None = None) -> ExperimentConfig:
    def bad(key, msg):
        raise ConfigError(f"{_where(key, text)}: {msg}")

    if cfg.dim not in (2, 3):
        bad("dim", f"must be 2 or 3, got {cfg.dim}")
    if not cfg.alpha > 0:
        bad("alpha", f"must be positive, got {cfg.alpha}")
    if not cfg.m_list:
        bad("m_list", "must be nonempty")
    if any(not isinstance(m, int) or m < 1 for m in cfg.m_list):
        bad("m_list", f"entries must be positive integers, got {cfg.m_list}")
    if list(cfg.m_list) != sorted(set(cfg.m_list)):
        bad("m_list", f"must be strictly ascending, got {cfg.m_list}")
    if cfg.k_max < 1:
        bad("k_max", f"must be >= 1, got {cfg.k_max}")
    if cfg.trials < 1:
        bad("trials", f"must be >= 1, got {cfg.trials}")
    if not 0 <= cfg.master_seed < 2 ** 64:
        bad("master_seed", "must be an unsigned 64-bit integer")
    for key in ("tol_solver", "tol_eig", "c_admissibility"):
        if not getattr(cfg, key) > 0:
            bad(key, f"must be positive, got {getattr(cfg, key)}")
    if cfg.sigma_mode not in ("estimate", "fixed"):
        bad("sigma_mode", f"must be 'estimate' or 'fixed', got {cfg.sigma_mode!r}")
    if cfg.sigma_mode == "fixed" and not (cfg.sigma_value is not None and cfg.sigma_value > 0):
        bad("sigma_value", "a positive sigma_value is required when sigma_mode = 'fixed'")
    if not 0 < cfg.bulk_margin < 0.5:
        bad("bulk_margin", f"must lie in (0, 0.5), got {cfg.bulk_margin}")
    if cfg.format not in ("csv", "json"):
        bad("format", f"must be 'csv' or 'json', got {cfg.format!r}")
    if not cfg.probe_side > 0 or not cfg.homog_box_side > 0:
        bad("probe_side", "box sides must be positive")
    if any(not a > 0 for a in cfg.alpha_grid):
        bad("alpha_grid", "intensities must be positive")
    for d in cfg.directions:
        if len(d) != cfg.dim:
            bad("directions", f"each direction needs {cfg.dim} components, got {d}")
    if cfg.mc_k < 1:
        bad("mc_k", f"must be >= 1, got {cfg.mc_k}")
    return cfg


def from_mapping(data: dict, text: str | None = None) -> ExperimentConfig:
    kwargs = {}
    for key, value in data.items():
        if key == "output" and isinstance(value, dict):
            for sub, v in value.items():
                if sub not in _OUTPUT_KEYS:
                    raise ConfigError(f"{_where(sub, text)}: unknown key in [output]")
                name = _OUTPUT_KEYS[sub]
                kwargs[name] = _coerce(name, v, text)
            continue
        if key == "sigma" and isinstance(value, dict):
            if "mode" in value:
                kwargs["sigma_mode"] = _coerce("sigma_mode", value["mode"], text)
            if "value" in value:
                kwargs["sigma_value"] = _coerce("sigma_value", value["value"], text)
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{_where(key, text)}: unknown key")
        kwargs[key] = _coerce(key, value, text)
    return ExperimentConfig(**kwargs)


def load(path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Read a TOML config (optional), apply overrides, validate."""
    text = None
    data = {}
    if path is not None:
        p = Path(path)
        try:
            text = p.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{p}: {exc}") from None
    cfg = from_mapping(data, text)
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(cfg, key, _coerce(key, value, None))
    return validate(cfg, text)
