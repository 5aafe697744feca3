"""Run configuration: flat ``key = value`` text with dotted sections, echo and reparse."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from .geometry import CATALOGUE


class ConfigError(ValueError):
    """Malformed or invalid configuration; the message names the field."""


@dataclass
class RunConfig:
    metric: str = "minkowski"
    params: dict = field(default_factory=dict)
    mass: float = 1.0
    eps: tuple = (0.01,)
    N: int = 1
    pairs: int = 20
    seed: int = 0
    scale: float = 0.5
    quad_nodes: int = 12
    quad_tol: float = 1e-9
    regfield_sign: int = 1
    out: str = "-"
    format: str = "csv"

    def validate(self) -> "RunConfig":
        if self.metric not in CATALOGUE:
            raise ConfigError(f"metric: unknown metric {self.metric!r}")
        if not self.mass > 0:
            raise ConfigError("mass: must be positive")
        eps = tuple(float(e) for e in self.eps)
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError("eps: values must be strictly positive")
        if list(eps) != sorted(eps) or len(set(eps)) != len(eps):
            raise ConfigError("eps: values must be strictly increasing")
        self.eps = eps
        if self.N < 0:
            raise ConfigError("N: truncation order must be non-negative")
        if self.pairs < 1:
            raise ConfigError("pairs: must be at least 1")
        if not self.scale > 0:
            raise ConfigError("scale: must be positive")
        if self.quad_nodes < 1:
            raise ConfigError("quad.nodes: must be at least 1")
        if not self.quad_tol > 0:
            raise ConfigError("quad.tol: must be positive")
        if self.regfield_sign not in (1, -1):
            raise ConfigError("regfield.sign: must be +1 or -1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format: must be csv or json")
        return self


# text key <-> attribute
_KEYS = {
    "metric.name": "metric",
    "mass": "mass",
    "eps": "eps",
    "truncation.N": "N",
    "pairs.count": "pairs",
    "pairs.seed": "seed",
    "pairs.scale": "scale",
    "quad.nodes": "quad_nodes",
    "quad.tol": "quad_tol",
    "regfield.sign": "regfield_sign",
    "output.path": "out",
    "output.format": "format",
}
_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt(attr, value) -> str:
    if attr == "eps":
        return ",".join(fmt_float(e) for e in value)
    if isinstance(value, float):
        return fmt_float(value)
    return str(value)


def _parse_value(attr: str, text: str, key: str):
    try:
        if attr == "eps":
            return tuple(float(t) for t in text.split(",") if t.strip())
        if attr in ("mass", "scale", "quad_tol"):
            return float(text)
        if attr in ("N", "pairs", "seed", "quad_nodes", "regfield_sign"):
            return int(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {text!r}") from exc


def parse_param_value(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def echo(cfg: RunConfig) -> str:
    """Comment block ``# key = value`` that :func:`parse_text` reads back."""
    lines = []
    for key, attr in _KEYS.items():
        lines.append(f"# {key} = {_fmt(attr, getattr(cfg, attr))}")
    for k in sorted(cfg.params):
        v = cfg.params[k]
        lines.append(f"# metric.param.{k} = {fmt_float(v) if isinstance(v, float) else v}")
    return "\n".join(lines)


def parse_text(text: str, base: RunConfig | None = None) -> RunConfig:
    """Parse ``key = value`` lines (leading ``#`` and blank lines tolerated)."""
    cfg = dataclasses.replace(base) if base is not None else RunConfig()
    cfg.params = dict(cfg.params)
    for raw in text.splitlines():
        line = raw.strip().lstrip("#").strip()
        if not line or "=" not in line:
            continue
        key, val = (s.strip() for s in line.split("=", 1))
        if key.startswith("metric.param."):
            cfg.params[key[len("metric.param."):]] = parse_param_value(val)
            continue
        if key not in _KEYS:
            raise ConfigError(f"{key}: unknown configuration key")
        attr = _KEYS[key]
        setattr(cfg, attr, _parse_value(attr, val, key))
    return cfg.validate()
