"""CSV and JSON readers/writers.

Every written file starts with a provenance line
``# ctpredict <version> config_sha256=<hash>``; in JSON reports the same
text sits under the ``"header"`` key.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import __version__
from .errors import ConfigurationError, ValidationError


def header_line(config_hash: str) -> str:
    return f"# ctpredict {__version__} config_sha256={config_hash}"


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def write_csv(path: str, columns, rows, config_hash: str) -> str:
    """Write ``rows`` (2-D array or iterable of sequences) under a header."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header_line(config_hash) + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def write_json(path: str, report: dict, config_hash: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    body = {"header": header_line(config_hash)[2:], **_jsonable(report)}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(body, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def read_csv(path: str, expected: tuple[str, ...]) -> np.ndarray:
    """Read a numeric CSV whose first non-comment line is ``expected`` (comma separated)."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path!r}: {exc.strerror}", key="density.csv") from None
    if not lines:
        raise ValidationError(f"{path}: empty file")
    cols = tuple(c.strip() for c in lines[0].split(","))
    if cols != tuple(expected):
        raise ValidationError(f"{path}: expected header {','.join(expected)!r}, got {lines[0]!r}")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]], dtype=float)
    except ValueError as exc:
        raise ValidationError(f"{path}: non-numeric entry ({exc})") from None
    if data.ndim != 2 or data.shape[1] != len(expected):
        raise ValidationError(f"{path}: every row needs {len(expected)} fields")
    return data


def read_density_csv(path: str):
    data = read_csv(path, ("mu", "density"))
    return data[:, 0], data[:, 1]


def write_density_csv(path: str, model, config_hash: str) -> str:
    return write_csv(path, ("mu", "density"), np.column_stack([model.mu, model.values]), config_hash)


def read_covariance_csv(path: str):
    data = read_csv(path, ("t", "re", "im"))
    return data[:, 0], data[:, 1] + 1j * data[:, 2]
