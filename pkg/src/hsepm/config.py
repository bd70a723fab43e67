"""Run configuration in a flat ``key = value`` text format."""
from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Invalid or unreadable configuration."""


_CHOICES = {
    "model": ("hsepm", "ghsepm"),
    "ck_shape": ("paper", "conjugate"),
    "transition_update": ("mh", "gibbs"),
    "rho_recursion": ("coupled", "paper"),
    "gamma1_update": ("slice", "crt"),
}


@dataclass
class RunConfig:
    model: str = "ghsepm"
    K: int = 10
    D: int = 5
    iterations: int = 3000
    burn_in: int = 2000
    seed: int = 0
    holdout_fraction: float = 0.3
    tau: float = 1.0
    a0: float = 1.0
    f0: float = 1.0
    g0: float = 1.0
    e0: float = 1.0
    j0: float = 1.0
    gamma0: float = 1.0
    ck_shape: str = "conjugate"
    freeze_beta: bool = False
    threshold: float = 0.5
    threads: int = 1
    repeats: int = 1
    # sampler variants; the defaults are the exact ones
    transition_update: str = "mh"
    rho_recursion: str = "coupled"
    gamma1_update: str = "slice"
    check_invariants: bool = False

    def validate(self) -> "RunConfig":
        for key, allowed in _CHOICES.items():
            if getattr(self, key) not in allowed:
                raise ConfigError(f"{key} must be one of {allowed}, got {getattr(self, key)!r}")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.model == "ghsepm" and self.D < 1:
            raise ConfigError("D must be >= 1 for ghsepm")
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise ConfigError("need 0 <= burn_in < iterations")
        if not 0.0 <= self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must lie in [0, 1)")
        for key in ("tau", "a0", "f0", "g0", "e0", "j0", "gamma0"):
            if not getattr(self, key) > 0:
                raise ConfigError(f"{key} must be positive")
        if self.threads < 1 or self.repeats < 1:
            raise ConfigError("threads and repeats must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        return self

    def replace(self, **kw) -> "RunConfig":
        d = asdict(self)
        d.update(kw)
        return RunConfig(**d).validate()


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    if typ is bool or typ == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        if typ in (tuple, "tuple"):
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{name}: cannot parse {raw!r}") from None
    return raw


def parse_pairs(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_pairs(pairs: dict[str, str], cls=RunConfig):
    types = {f.name: f.type for f in fields(cls)}
    kw = {}
    for key, value in pairs.items():
        if key not in types:
            raise ConfigError(f"unknown key {key!r}")
        kw[key] = _coerce(key, value, types[key])
    return cls(**kw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return config_from_pairs(parse_pairs(text)).validate()


def format_config(cfg) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, bool):
            v = "true" if v else "false"
        elif isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
