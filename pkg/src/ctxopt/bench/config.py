"""Experiment configuration loaded from JSON and validated before any work starts."""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..kernel import KernelFamily

__all__ = ["ExperimentConfig", "EXPERIMENTS", "default_config", "load_config", "log_grid"]

EXPERIMENTS = ("portfolio", "newsvendor", "wind", "bounds")


def log_grid(lo, hi, num):
    return [float(v) for v in np.logspace(np.log10(lo), np.log10(hi), num)]


@dataclass
class ExperimentConfig:
    experiment: str
    n: int = 1000
    trials: int = 5
    seed: int = 0
    kernel: str = "exponential"
    bandwidth_grid: list = field(default_factory=lambda: [1.0])  # C_h in h = C_h * n^(-1/(p+4))
    lambda_grid: list = field(default_factory=lambda: [0.0])
    pca: bool = False
    intrinsic_dim: int = 1
    split_fraction: float = 0.5
    output: Optional[str] = None
    # experiment-specific knobs
    eval_points: int = 300
    eval_samples: int = 500
    probes: Optional[list] = None
    horizon: int = 25
    burn_in: int = 10
    backorder: float = 10.0
    holding: float = 6.0
    delta: float = 0.2
    ldr_lambda_grid: list = field(default_factory=lambda: log_grid(1e-2, 1e2, 17))
    cv_fraction: float = 2.0 / 3.0
    wind_params: dict = field(default_factory=dict)
    solver_iterations: int = 5000

    def validate(self) -> "ExperimentConfig":
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        for name in ("n", "trials", "eval_points", "eval_samples", "horizon", "intrinsic_dim", "solver_iterations"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.n < 2:
            raise ConfigError("n must be at least 2")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        try:
            KernelFamily(self.kernel)
        except ValueError:
            raise ConfigError(f"unknown kernel family {self.kernel!r}") from None
        for name in ("bandwidth_grid", "lambda_grid", "ldr_lambda_grid"):
            grid = getattr(self, name)
            if not isinstance(grid, (list, tuple)) or len(grid) == 0:
                raise ConfigError(f"{name} must be a nonempty list")
            try:
                vals = [float(v) for v in grid]
            except (TypeError, ValueError):
                raise ConfigError(f"{name} must contain numbers") from None
            if not all(np.isfinite(vals)):
                raise ConfigError(f"{name} must contain finite numbers")
            if name == "bandwidth_grid" and min(vals) <= 0:
                raise ConfigError("bandwidth_grid entries must be positive")
            if min(vals) < 0:
                raise ConfigError(f"{name} entries must be nonnegative")
        if not 0.0 < self.split_fraction < 1.0 or not 0.0 < self.cv_fraction < 1.0:
            raise ConfigError("split_fraction and cv_fraction must lie in (0, 1)")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError("delta must lie in (0, 1)")
        if self.backorder < 0 or self.holding < 0:
            raise ConfigError("cost rates must be nonnegative")
        if self.probes is not None:
            arr = np.asarray(self.probes, dtype=float)
            if arr.ndim != 2 or arr.shape[0] == 0:
                raise ConfigError("probes must be a nonempty list of covariate vectors")
        if self.output is not None:
            parent = Path(self.output).resolve().parent
            if not parent.is_dir() or not os.access(parent, os.W_OK):
                raise ConfigError(f"output directory {parent} is not writable")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


_DEFAULTS = {
    "portfolio": dict(n=1000, trials=5, bandwidth_grid=[0.25], lambda_grid=[1.0], eval_points=300),
    "newsvendor": dict(n=10, trials=10, bandwidth_grid=[1.0], lambda_grid=[0.0] + log_grid(1e-2, 1e2, 17)),
    "wind": dict(
        n=14,
        trials=40,
        horizon=25,
        bandwidth_grid=log_grid(5e2, 5e4, 9),
        lambda_grid=log_grid(1e-2, 1e2, 17),
        solver_iterations=600,
    ),
    "bounds": dict(n=500, trials=200, bandwidth_grid=[0.42], delta=0.2, probes=[[8.2247, 5.0]]),
}


def default_config(experiment: str, **overrides) -> ExperimentConfig:
    if experiment not in _DEFAULTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    kw = dict(_DEFAULTS[experiment])
    kw.update(overrides)
    return _build(experiment, kw)


def _build(experiment, kw):
    names = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = sorted(set(kw) - names)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    try:
        cfg = ExperimentConfig(experiment=experiment, **{k: v for k, v in kw.items() if k != "experiment"})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    """Parse a JSON document; missing keys fall back to the experiment's defaults."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict) or "experiment" not in raw:
        raise ConfigError("config must be a JSON object with an 'experiment' key")
    exp = str(raw["experiment"]).lower()
    if exp not in _DEFAULTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {raw['experiment']!r}")
    kw = dict(_DEFAULTS[exp])
    kw.update({k: v for k, v in raw.items() if k != "experiment"})
    return _build(exp, kw)
