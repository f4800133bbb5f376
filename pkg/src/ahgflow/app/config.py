"""Plain ``key = value`` run configuration.

Lines starting with ``#`` and blank lines are ignored. Zeros are written as
``x,y;x,y`` with an optional multiplicity suffix ``*m`` on a position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

KINDS = ("vacuum", "flux", "ansatz", "vortex", "file")

# key -> (parser name, default); None default means no default.
_SCHEMA = {
    "grid.n": ("int", None),
    "grid.L": ("float", None),
    "flow.gauge": ("gauge", "temporal"),
    "flow.dt_factor": ("float", 0.25),
    "flow.T": ("float", 1.0),
    "flow.output_every": ("int", 100),
    "flow.checkpoints": ("floats", ""),
    "lambda": ("float", 1.0),
    "init.kind": ("kind", None),
    "init.N": ("int", 0),
    "init.zeros": ("zeros", ""),
    "init.file": ("str", ""),
    "init.phi": ("float", 1.0),
    "init.core_width": ("float", 1.6),
    "vortex.tol": ("float", 1e-10),
    "perturb.amplitude": ("float", 0.0),
    "perturb.corr_len": ("float", 4.0),
    "perturb.seed": ("int", 0),
    "out.dir": ("str", "."),
}

_REQUIRED_BY_KIND = {
    "vacuum": (),
    "flux": ("init.N",),
    "ansatz": ("init.N", "init.zeros"),
    "vortex": ("init.zeros",),
    "file": ("init.file",),
}


class ConfigError(ValueError):
    """Malformed configuration text."""


def parse_zeros(text: str) -> list:
    out = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        mult = 1
        if "*" in chunk:
            chunk, m = chunk.rsplit("*", 1)
            mult = int(m)
        parts = [p.strip() for p in chunk.split(",")]
        if len(parts) != 2:
            raise ConfigError(f"zero {chunk!r} must be 'x,y'")
        out.append(((float(parts[0]), float(parts[1])), mult))
    return out


def _convert(kind: str, key: str, raw: str):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "floats":
            return tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())
        if kind == "zeros":
            return parse_zeros(raw)
        if kind == "gauge":
            if raw not in ("temporal", "deturck"):
                raise ValueError("expected temporal or deturck")
            return raw
        if kind == "kind":
            if raw not in KINDS:
                raise ValueError(f"expected one of {', '.join(KINDS)}")
            return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} ({exc})") from None


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(default_factory=dict)
    given: frozenset = frozenset()

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        return self.values.get(key, default)

    @property
    def zeros(self) -> list:
        return self.values["init.zeros"]

    @property
    def N(self) -> int:
        if "init.N" in self.given or not self.zeros:
            return self.values["init.N"]
        return sum(m for _, m in self.zeros)


def parse_config(text: str) -> RunConfig:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    for key in ("grid.n", "grid.L", "init.kind"):
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")
    values = {}
    for key, (kind, default) in _SCHEMA.items():
        values[key] = _convert(kind, key, raw[key]) if key in raw else default
    for key in _REQUIRED_BY_KIND[values["init.kind"]]:
        if key not in raw:
            raise ConfigError(f"init.kind = {values['init.kind']} requires {key!r}")
    if values["grid.n"] < 8 or values["grid.n"] & (values["grid.n"] - 1):
        raise ConfigError(f"grid.n must be a power of two >= 8, got {values['grid.n']}")
    if not values["grid.L"] > 0:
        raise ConfigError("grid.L must be positive")
    if values["flow.output_every"] < 1:
        raise ConfigError("flow.output_every must be positive")
    if values["perturb.amplitude"] < 0:
        raise ConfigError("perturb.amplitude must be non-negative")
    return RunConfig(values=values, given=frozenset(raw))


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)
