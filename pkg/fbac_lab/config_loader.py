# === fbac_lab/config_loader.py ===

import json
import logging
import re
from dataclasses import fields
from typing import Any, Dict, Optional

import yaml

from fbac_lab.errors import ConfigError, FormatError, NonCommensurate, TooCoarse
from fbac_lab.expressions import SeedGraph
from fbac_lab.models import SolverConfig

logger = logging.getLogger(__name__)

CONFIG_KEYS = tuple(f.name for f in fields(SolverConfig))
REQUIRED_KEYS = ("eps", "gamma0")
STRING_KEYS = ("gamma0", "mode")
MODES = ("variational", "trial_fb")

_LINE = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*?)\s*$")


def normalize_config_text(raw_text: str, source: str = "<config>") -> str:
    """
    Rewrites flat `key = value` lines into YAML mapping lines so that
    yaml.safe_load yields typed scalars. Comma-separated values become flow
    lists; expression-valued keys are quoted verbatim.
    """
    out = []
    for lineno, raw in enumerate(raw_text.splitlines(), start=1):
        line = raw.replace("\t", "  ")
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        m = _LINE.match(stripped)
        if not m:
            raise FormatError(f"expected 'key = value', got {raw.strip()!r}", source, lineno)
        key, value = m.group(1), m.group(2)
        if key in STRING_KEYS:
            value = json.dumps(value)
        elif "," in value and not value.startswith("["):
            value = "[" + value + "]"
        out.append(f"{key}: {value}")
    return "\n".join(out) + "\n"


def load_config_file(file_path: str) -> Dict[str, Any]:
    """
    Loads a flat key = value config into a dict of typed values.
    Raises FormatError (file/line) when the file cannot be read or parsed.
    """
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            raw_text = f.read()
    except OSError as e:
        logger.warning(f"Could not open '{file_path}': {e}")
        raise FormatError(f"cannot read config: {e}", file_path)

    text = normalize_config_text(raw_text, file_path)
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as ye:
        line = None
        mark = getattr(ye, "problem_mark", None)
        if mark is not None:
            line = mark.line + 1
        logger.warning(f"Could not parse config '{file_path}': {ye}")
        raise FormatError(f"cannot parse config: {ye}", file_path, line)
    if not isinstance(data, dict):
        raise FormatError("config must be a list of key = value lines", file_path)
    return data


def config_from_dict(data: Dict[str, Any], overrides: Optional[Dict[str, Any]] = None) -> SolverConfig:
    """Builds and validates a SolverConfig; overrides (CLI flags) win over file values."""
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value

    unknown = sorted(set(merged) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], f"unknown key (allowed: {', '.join(CONFIG_KEYS)})")
    for key in REQUIRED_KEYS:
        if key not in merged or merged[key] is None or merged[key] == "":
            raise ConfigError(key, "missing required key")

    base_dim = _as_int(merged, "base_dim", 1)
    gamma0 = merged["gamma0"]
    if not isinstance(gamma0, SeedGraph):
        gamma0 = SeedGraph(str(gamma0), base_dim)

    deltas = merged.get("deltas", SolverConfig.deltas)
    if isinstance(deltas, (int, float)):
        deltas = [deltas]
    cfg = SolverConfig(
        eps=_as_float(merged, "eps"),
        gamma0=gamma0,
        base_dim=base_dim,
        half_height=_as_float(merged, "half_height", 0.5),
        h=_as_float(merged, "h", None),
        mode=str(merged.get("mode", "trial_fb")),
        deltas=tuple(_to_float("deltas", d) for d in deltas),
        relaxation=_as_float(merged, "relaxation", 0.5),
        linear_tol=_as_float(merged, "linear_tol", 1e-10),
        tol_fb=_as_float(merged, "tol_fb", 1e-6),
        max_iter=_as_int(merged, "max_iter", None),
    )
    validate_config(cfg)
    return cfg


def load_config(file_path: str, overrides: Optional[Dict[str, Any]] = None) -> SolverConfig:
    data = load_config_file(file_path)
    logger.debug(f"Loaded config '{file_path}': {sorted(data)}")
    return config_from_dict(data, overrides)


def validate_config(cfg: SolverConfig) -> SolverConfig:
    """Enforces the SolverConfig invariants; raises ConfigError naming the key."""
    if not 0 < cfg.eps <= 0.2:
        raise ConfigError("eps", f"must satisfy 0 < eps <= 0.2, got {cfg.eps}")
    if cfg.base_dim not in (1, 2):
        raise ConfigError("base_dim", f"must be 1 or 2, got {cfg.base_dim}")
    if cfg.gamma0.base_dim != cfg.base_dim:
        raise ConfigError("gamma0", f"defined over dimension {cfg.gamma0.base_dim}, base has {cfg.base_dim}")
    if not cfg.half_height > 0:
        raise ConfigError("half_height", f"must be positive, got {cfg.half_height}")
    if cfg.mode not in MODES:
        raise ConfigError("mode", f"must be one of {MODES}, got '{cfg.mode}'")
    h = cfg.spacing
    if not 0 < h <= cfg.eps / 4 * (1 + 1e-12):
        raise ConfigError("h", f"need 0 < h <= eps/4 = {cfg.eps / 4:.6g}, got {h}")
    if cfg.gamma0.sup_abs() + 2 * cfg.eps >= cfg.half_height:
        raise ConfigError("half_height", f"layer does not fit: sup|gamma0| + 2 eps >= {cfg.half_height}")
    if not cfg.deltas:
        raise ConfigError("deltas", "empty smoothing schedule")
    if any(not 0 < d < 1 for d in cfg.deltas):
        raise ConfigError("deltas", f"each delta must lie in (0, 1), got {list(cfg.deltas)}")
    if any(b >= a for a, b in zip(cfg.deltas, cfg.deltas[1:])):
        raise ConfigError("deltas", f"must be strictly decreasing, got {list(cfg.deltas)}")
    if not 0 < cfg.relaxation <= 1:
        raise ConfigError("relaxation", f"must lie in (0, 1], got {cfg.relaxation}")
    if not cfg.linear_tol > 0:
        raise ConfigError("linear_tol", "must be positive")
    if not cfg.tol_fb > 0:
        raise ConfigError("tol_fb", "must be positive")
    if cfg.max_iter is not None and cfg.max_iter < 1:
        raise ConfigError("max_iter", f"must be a positive integer, got {cfg.max_iter}")

    # the ambient grid must tile the box
    from fbac_lab.field import build_grid
    try:
        build_grid(solver_box(cfg), h)
    except NonCommensurate as e:
        raise ConfigError("h", str(e))
    except TooCoarse as e:
        raise ConfigError("h", str(e))
    return cfg


def solver_box(cfg: SolverConfig):
    """Ambient box [-1,1]^n x [-L, L] (vertical axis last)."""
    return [(-1.0, 1.0)] * cfg.base_dim + [(-cfg.half_height, cfg.half_height)]


def _to_float(key: str, value: Any) -> float:
    if isinstance(value, bool):
        raise ConfigError(key, f"expected a number, got {value!r}")
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(key, f"expected a number, got {value!r}")


def _as_float(data: Dict[str, Any], key: str, default: Any = ...) -> Optional[float]:
    if key not in data or data[key] is None:
        if default is ...:
            raise ConfigError(key, "missing required key")
        return default
    return _to_float(key, data[key])


def _as_int(data: Dict[str, Any], key: str, default: Any = ...) -> Optional[int]:
    value = _as_float(data, key, default)
    if value is None:
        return None
    if value != int(value):
        raise ConfigError(key, f"expected an integer, got {data[key]!r}")
    return int(value)
