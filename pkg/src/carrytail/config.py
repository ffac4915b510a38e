"""Run configuration: a plain ``key = value`` text file plus flag overrides.

Example::

    # carry-trade tail dependence run
    spot = spot.csv
    forward = forward.csv
    invert = [JPY, CHF]
    base = USD
    window = 126
    margin_model = lggd
    families = [cfg, cg, opc]
    seed = 7

Relative paths are resolved against the directory holding the config file.
"""
from __future__ import annotations

import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    spot: str | None = None
    forward: str | None = None
    panel: str | None = None
    invert: list[str] = field(default_factory=list)
    base: str = "USD"
    window: int = 126
    allow_any_window: bool = False
    margin_model: str = "lggd"
    families: list[str] = field(default_factory=lambda: ["cfg", "cg", "opc"])
    quintiles: int = 5
    horizon: int = 21
    seed: int = 0
    out: str = "out"
    td_h: int = 1
    upper_percentiles: list[int] = field(default_factory=lambda: [1, 20])
    lower_percentiles: list[int] = field(default_factory=lambda: [80, 99])
    restarts: int = 2
    aic_free_weights: bool = False
    combine: bool = False
    min_members: int = 3
    regression_currencies: int = 3
    jobs: int | None = None

    def validate(self) -> "RunConfig":
        if self.window not in (126, 252) and not self.allow_any_window:
            raise ConfigError(f"window must be 126 or 252 (set allow_any_window to override), got {self.window}")
        if self.window < 20:
            raise ConfigError("window must be at least 20 trading days")
        if self.margin_model not in ("lggd", "garch11"):
            raise ConfigError(f"margin_model must be lggd or garch11, got {self.margin_model!r}")
        bad = [f for f in self.families if f.lower() not in ("cfg", "cg", "opc")]
        if bad or not self.families:
            raise ConfigError(f"families must be drawn from cfg, cg, opc; got {self.families}")
        if self.base != "USD":
            raise ConfigError("only base = USD is supported")
        if self.horizon < 1 or self.quintiles < 3:
            raise ConfigError("horizon must be >= 1 and quintiles >= 3")
        if self.td_h < 1:
            raise ConfigError("td_h must be >= 1")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        return self

    @property
    def family_codes(self) -> list[str]:
        return [f.upper() for f in self.families]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None or f.name == "jobs":
                continue
            if isinstance(v, list):
                v = "[" + ", ".join(str(x) for x in v) + "]"
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return asdict(self)


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    t = str(typ)
    if t.startswith("list"):
        if not (raw.startswith("[") and raw.endswith("]")):
            raise ConfigError(f"{name}: expected a [list]")
        items = [x.strip() for x in raw[1:-1].split(",") if x.strip()]
        return [int(x) for x in items] if "int" in t else items
    if t == "bool":
        if raw.lower() not in ("true", "false"):
            raise ConfigError(f"{name}: expected true or false")
        return raw.lower() == "true"
    if t.startswith("int"):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {raw!r}") from None
    return raw


def parse_config_text(text: str, base_dir: Path | None = None) -> RunConfig:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, types[key])
    for key in ("spot", "forward", "panel", "out"):
        if key in values and base_dir is not None and not Path(values[key]).is_absolute():
            values[key] = str(base_dir / values[key])
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), path.parent)


def substream(seed: int, name: str, *keys: int) -> np.random.SeedSequence:
    """Independent, named random stream derived from the top-level seed."""
    return np.random.SeedSequence([seed, zlib.crc32(name.encode()), *keys])
