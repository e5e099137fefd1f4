"""Experiment configuration: one JSON file plus a few command-line overrides."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .spectral_generator import _model_id

__all__ = ["GridSpec", "ExperimentConfig", "load_config", "dumps", "worker_count"]


@dataclass(frozen=True)
class GridSpec:
    min: float
    max: float
    count: int
    spacing: str = "log"

    def __post_init__(self):
        if not (self.min > 0 and self.max > self.min):
            raise ValueError(f"grid needs 0 < min < max, got [{self.min}, {self.max}]")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError("grid count must be a positive integer")
        if self.spacing not in ("log", "linear"):
            raise ValueError(f"unknown spacing {self.spacing!r}")

    def values(self):
        if self.count == 1:
            return np.array([float(self.min)])
        if self.spacing == "log":
            return np.geomspace(self.min, self.max, int(self.count))
        return np.linspace(self.min, self.max, int(self.count))


def _grid(value, default):
    if value is None:
        return default
    if isinstance(value, GridSpec):
        return value
    return GridSpec(**value)


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple = ("vmb1",)
    degree_cap: int = 6
    collision: str = "const"
    nu0: float = 1.0
    collision_path: str | None = None
    radial_grid: GridSpec = GridSpec(1e-3, 30.0, 400)
    spectrum_grid: GridSpec = GridSpec(1e-3, 1e3, 400)
    k_grid: GridSpec = GridSpec(1e-3, 1e3, 31)
    k_values: tuple | None = None
    k_direction: tuple = (1.0, 0.0, 0.0)
    time_grid: GridSpec = GridSpec(1e2, 1e5, 41)
    fit_window: tuple = (1e2, 1e5)
    m: int = 0
    kappas: tuple | None = None
    equiv_floor: float = 0.25
    equiv_ceiling: float = 4.0
    lambda_floor: float = 1e-5
    rate_tolerance: float = 0.05
    out: str = "out"
    seed: int = 20240607
    workers: int | None = None

    def __post_init__(self):
        models = (self.models,) if isinstance(self.models, str) else tuple(self.models)
        if not models:
            raise ValueError("no models configured")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("models", tuple(_model_id(m) for m in models))
        for name in ("radial_grid", "spectrum_grid", "k_grid", "time_grid"):
            set_(name, _grid(getattr(self, name), None))
        d = np.asarray(self.k_direction, dtype=float)
        if d.shape != (3,) or not np.linalg.norm(d) > 0:
            raise ValueError("k_direction must be a nonzero 3-vector")
        set_("k_direction", tuple(float(x) for x in d / np.linalg.norm(d)))
        lo, hi = self.fit_window
        if not 0 <= lo < hi:
            raise ValueError("fit_window must satisfy 0 <= lo < hi")
        set_("fit_window", (float(lo), float(hi)))
        if self.kappas is not None:
            if len(self.kappas) != 4:
                raise ValueError("kappas needs four entries")
            set_("kappas", tuple(float(x) for x in self.kappas))
        if self.k_values is not None:
            set_("k_values", tuple(float(x) for x in self.k_values))
            if not self.k_values:
                raise ValueError("k_values is empty")
        if self.collision not in ("const", "variable", "external"):
            raise ValueError(f"unknown collision kind {self.collision!r}")

    def k_radii(self):
        if self.k_values is not None:
            return np.array(self.k_values)
        return self.k_grid.values()

    def wave_vector(self, r):
        return float(r) * np.array(self.k_direction)

    def to_dict(self):
        return asdict(self)


def load_config(path=None, **overrides):
    """Read a JSON config (or defaults) and apply non-None overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**data)


def worker_count(config=None):
    env = os.environ.get("KINEDECAY_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("KINEDECAY_THREADS must be a positive integer")
        return n
    if config is not None and config.workers:
        return int(config.workers)
    return os.cpu_count() or 1


def _fmt(x):
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return json.dumps(str(x))
        return format(x, ".17g")
    return json.dumps(str(x) if not isinstance(x, str) else x)


def dumps(obj, indent=2, _level=0):
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {dumps(v, indent, _level + 1)}"
            for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in seq):
            return "[" + ", ".join(_fmt(v) for v in seq) + "]"
        return (
            "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in seq) + "\n" + end + "]"
        )
    return _fmt(obj)
