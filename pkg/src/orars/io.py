"""Dataset files, synthetic datasets and flat key=value configuration."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import Dataset
from .exceptions import DatasetParseError, InvalidConfigError
from .harness import ExperimentSpec
from .simulation import SimConfig

ENV_PREFIX = "ORARS_"
SYNTH_KINDS = ("linear", "monotone_noisy", "constant")


@dataclass(frozen=True)
class DatasetFileSpec:
    path: str
    delimiter: str = ","
    target_column: int = -1
    header: bool | None = None  # None: detect from the first row


def _parse_float(cell: str) -> float:
    value = float(cell)
    if not math.isfinite(value):
        raise ValueError(cell)
    return value


def load_csv(spec: DatasetFileSpec | str, name: str | None = None) -> Dataset:
    """Read a delimited numeric file; every non-target column becomes a feature.

    Rows with missing or unparseable cells are rejected with the row number
    (1-based, counting the header) rather than dropped.
    """
    if not isinstance(spec, DatasetFileSpec):
        spec = DatasetFileSpec(str(spec))
    path = Path(spec.path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter=spec.delimiter) if any(c.strip() for c in r)]
    if not rows:
        raise DatasetParseError(f"{path}: file is empty")
    header = spec.header
    if header is None:
        try:
            [_parse_float(c) for c in rows[0]]
            header = False
        except ValueError:
            header = True
    names = [c.strip() for c in rows[0]] if header else []
    body = rows[1:] if header else rows
    first_line = 2 if header else 1
    if not body:
        raise DatasetParseError(f"{path}: no data rows")
    width = len(rows[0])
    target = spec.target_column if spec.target_column >= 0 else width + spec.target_column
    if not 0 <= target < width:
        raise DatasetParseError(f"{path}: target column {spec.target_column} outside width {width}")
    if width < 2:
        raise DatasetParseError(f"{path}: need at least one feature column and one target column")
    values = np.empty((len(body), width))
    for r, row in enumerate(body):
        line = first_line + r
        if len(row) != width:
            raise DatasetParseError(f"{path}: row {line} has {len(row)} cells, expected {width}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = _parse_float(cell.strip())
            except ValueError:
                what = "target" if c == target else f"column {c}"
                raise DatasetParseError(f"{path}: row {line}, {what}: cannot parse {cell!r}") from None
    feats = [c for c in range(width) if c != target]
    feature_names = tuple(names[c] for c in feats) if names else ()
    return Dataset(name or path.stem, values[:, feats], values[:, target], feature_names)


def write_csv(dataset: Dataset, path, header: bool = True, delimiter: str = ",") -> None:
    """Write features then target (last column) with round-trip float precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        if header:
            names = list(dataset.feature_names) or [f"x{i}" for i in range(dataset.feature_dim)]
            w.writerow(names + ["y"])
        for x, y in zip(dataset.X, dataset.y):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


@dataclass(frozen=True)
class SynthDataset:
    dataset: Dataset
    coef: np.ndarray | None = None
    intercept: float | None = None


def synth_dataset(kind: str = "monotone_noisy", n: int = 300, dims: int = 1, noise: float = 0.05,
                  seed: int = 0, constant: float = 1.0) -> SynthDataset:
    """Seeded synthetic regression data with features drawn from U(0, 1).

    ``linear``: y = x . w + b (+ Normal(0, noise)); w and b are returned.
    ``monotone_noisy``: y = x_1 + Normal(0, noise).
    ``constant``: y = ``constant``.
    """
    if kind not in SYNTH_KINDS:
        raise InvalidConfigError(f"kind must be one of {SYNTH_KINDS}, got {kind!r}")
    if n < 2 or dims < 1:
        raise InvalidConfigError("need n >= 2 and dims >= 1")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, dims))
    coef = intercept = None
    if kind == "linear":
        coef = rng.uniform(-3.0, 3.0, dims)
        intercept = float(rng.uniform(-1.0, 1.0))
        y = X @ coef + intercept
        if noise > 0:
            y = y + rng.normal(0.0, noise, n)
    elif kind == "monotone_noisy":
        y = X[:, 0] + (rng.normal(0.0, noise, n) if noise > 0 else 0.0)
    else:
        y = np.full(n, float(constant))
    return SynthDataset(Dataset(f"synth_{kind}", X, y), coef, intercept)


def _coerce(key: str, raw, typ):
    typ = typ if isinstance(typ, type) else {"int": int, "float": float, "str": str, "bool": bool}[typ]
    if isinstance(raw, typ) and not (typ is int and isinstance(raw, bool)):
        return raw
    text = str(raw).strip()
    try:
        if typ is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise InvalidConfigError(f"config key {key!r}: cannot read {text!r} as {typ.__name__}") from None


def parse_flat(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"config line {n}: expected key = value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise InvalidConfigError(f"config line {n}: empty key")
        out[key] = value
    return out


_KINDS = {"experiment": ExperimentSpec, "simulation": SimConfig}


def build_config(kind: str, *layers: Mapping):
    """Merge value layers (later wins) over the dataclass defaults and validate."""
    cls = _KINDS[kind]
    types = {f.name: f.type for f in fields(cls)}
    merged = {}
    for layer in layers:
        for key, value in layer.items():
            if value is None:
                continue
            if key not in types:
                raise InvalidConfigError(f"unknown config key {key!r} (known: {', '.join(sorted(types))})")
            merged[key] = _coerce(key, value, types[key])
    return cls(**merged)


def env_overrides(kind: str, environ: Mapping | None = None) -> dict:
    """``ORARS_<KEY>`` variables that name a field of the config kind."""
    environ = os.environ if environ is None else environ
    names = {f.name.upper(): f.name for f in fields(_KINDS[kind])}
    out = {}
    for var, value in environ.items():
        if var.startswith(ENV_PREFIX) and var[len(ENV_PREFIX):] in names:
            out[names[var[len(ENV_PREFIX):]]] = value
    return out


def load_config(path=None, kind: str = "experiment", overrides: Mapping | None = None,
                environ: Mapping | None = None):
    """Effective config: defaults < file < ``ORARS_*`` environment < ``overrides``."""
    if kind not in _KINDS:
        raise InvalidConfigError(f"config kind must be one of {tuple(_KINDS)}")
    file_values = parse_flat(Path(path).read_text()) if path else {}
    return build_config(kind, file_values, env_overrides(kind, environ), overrides or {})
