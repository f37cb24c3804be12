"""Flat ``key = value`` run configuration.

Grammar: one ``key = value`` per line, ``#`` starts a comment, blank lines
are ignored, keys are dotted names from :data:`KEYS`.  Lists are comma
separated.  ``params`` is a ``;``-separated list of ``name=value`` pairs
whose values may themselves be comma-separated vectors, e.g.
``params = a=1,0.5; b=1,3``.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError


def _float(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {text!r}", key=key) from None
    return v


def _positive(key, text):
    v = _float(key, text)
    if not v > 0:
        raise ConfigurationError(f"{key}: must be positive, got {text!r}", key=key)
    return v


def _nonneg(key, text):
    v = _float(key, text)
    if v < 0:
        raise ConfigurationError(f"{key}: must be non-negative, got {text!r}", key=key)
    return v


def _int(key, text):
    try:
        v = int(text)
    except ValueError:
        raise ConfigurationError(f"{key}: expected an integer, got {text!r}", key=key) from None
    return v


def _pos_int(key, text):
    v = _int(key, text)
    if v < 1:
        raise ConfigurationError(f"{key}: must be a positive integer, got {text!r}", key=key)
    return v


def _seed(key, text):
    v = _int(key, text)
    if not 0 <= v < 2**64:
        raise ConfigurationError(f"{key}: must be an unsigned 64-bit integer", key=key)
    return v


def _bool(key, text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {text!r}", key=key)


def _float_list(key, text):
    items = [x.strip() for x in text.split(",") if x.strip()]
    return tuple(_positive(key, x) for x in items)


def _str(key, text):
    return text.strip()


def _method(key, text):
    t = text.strip().lower()
    if t not in ("ma", "spectral"):
        raise ConfigurationError(f"{key}: expected 'ma' or 'spectral', got {text!r}", key=key)
    return t


def parse_params(text: str, key: str = "params") -> dict:
    """``"a=1,0.5; b=1,3"`` -> ``{"a": (1.0, 0.5), "b": (1.0, 3.0)}``; scalars stay floats."""
    out = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigurationError(f"{key}: expected name=value, got {part!r}", key=key)
        name, val = (s.strip() for s in part.split("=", 1))
        if not name:
            raise ConfigurationError(f"{key}: empty parameter name", key=key)
        vals = [v.strip() for v in val.split(",") if v.strip()]
        if not vals:
            raise ConfigurationError(f"{key}: parameter {name!r} has no value", key=key)
        nums = tuple(_float(f"{key}.{name}", v) for v in vals)
        out[name] = nums[0] if len(nums) == 1 else nums
    return out


# key -> (attribute, parser)
KEYS = {
    "family": ("family", _str),
    "params": ("params", lambda key, text: parse_params(text, key)),
    "density.csv": ("density_csv", _str),
    "grid.M": ("M", _positive),
    "grid.dmu": ("dmu", _positive),
    "floor": ("floor", _positive),
    "szego.threshold": ("szego_threshold", _float),
    "szego.max_subfloor_fraction": ("szego_max_subfloor_fraction", _nonneg),
    "time.h": ("h", _positive),
    "time.L": ("L", _positive),
    "predict.tau": ("taus", _float_list),
    "predict.T": ("Ts", _float_list),
    "predict.oracle": ("oracle", _bool),
    "predict.psi": ("psi", _bool),
    "oracle.h": ("oracle_h", _positive),
    "oracle.window": ("oracle_window", _positive),
    "simulate.n": ("n_points", _pos_int),
    "simulate.method": ("method", _method),
    "simulate.real": ("real", _bool),
    "verify.N": ("N", _pos_int),
    "verify.theory_override": ("theory_override", _float),
    "whiten.margin_factor": ("margin_factor", _positive),
    "seed": ("seed", _seed),
    "tol.factor": ("tol_factor", _positive),
    "tol.support": ("tol_support", _positive),
    "tol.plancherel": ("tol_plancherel", _positive),
    "tol.log_integral": ("tol_log", _positive),
    "tol.compare": ("tol_compare", _positive),
    "tol.z": ("tol_z", _positive),
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration; every default is the documented one."""

    family: str = "ou"
    params: dict = field(default_factory=dict)
    density_csv: str | None = None
    M: float = 64.0
    dmu: float = 1.0 / 256.0
    floor: float = 1e-12
    szego_threshold: float = -50.0
    szego_max_subfloor_fraction: float = 0.01
    h: float = 1.0 / 256.0
    L: float = 40.0
    taus: tuple = (1.0,)
    Ts: tuple = ()
    oracle: bool = True
    psi: bool = True
    oracle_h: float = 0.01
    oracle_window: float = 20.0
    n_points: int = 4096
    method: str = "ma"
    real: bool = False
    N: int = 10000
    theory_override: float | None = None
    margin_factor: float = 4.0
    seed: int | None = None
    tol_factor: float = 1e-10
    tol_support: float = 1e-6
    tol_plancherel: float = 1e-6
    tol_log: float = 1e-3
    tol_compare: float = 1e-3
    tol_z: float = 3.0
    source: str | None = None

    def canonical(self) -> str:
        """Stable text form used for the configuration hash."""
        lines = []
        for f in fields(self):
            if f.name == "source":
                continue
            v = getattr(self, f.name)
            if isinstance(v, dict):
                v = ";".join(f"{k}={v[k]!r}" for k in sorted(v))
            lines.append(f"{f.name}={v!r}")
        return "\n".join(lines)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def with_overrides(self, **kw) -> "RunConfig":
        from dataclasses import replace

        return replace(self, **kw)


def parse_config(text: str, base_dir: str | None = None, source: str | None = None) -> RunConfig:
    values = {}
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigurationError(f"unknown configuration key {key!r} (line {lineno})", key=key)
        if key in seen:
            raise ConfigurationError(f"configuration key {key!r} given twice (line {lineno})", key=key)
        seen.add(key)
        attr, parser = KEYS[key]
        if key in ("predict.tau", "predict.T") and not val:
            values[attr] = ()
            continue
        if not val:
            raise ConfigurationError(f"{key}: empty value (line {lineno})", key=key)
        values[attr] = parser(key, val)
    if "density_csv" in values and base_dir and not os.path.isabs(values["density_csv"]):
        values["density_csv"] = os.path.join(base_dir, values["density_csv"])
    return RunConfig(**values, source=source)


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path!r}: {exc.strerror}", key="--config") from None
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)), source=path)
