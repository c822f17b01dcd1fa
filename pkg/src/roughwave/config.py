"""Experiment configuration: flat key=value files plus command-line overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from .errors import ValidationError
from .hilbert import make_params

KINDS = (
    "simulate",
    "variance-scan",
    "clt",
    "ergodic",
    "chaos-tables",
    "malliavin-check",
    "conjecture",
    "selftest",
)

STATISTICAL_KINDS = ("simulate", "variance-scan", "clt", "ergodic", "conjecture")


def _floats(s):
    return [float(v) for v in str(s).split(",") if v != ""]


@dataclass
class ExperimentConfig:
    kind: str = "selftest"
    hurst: float = 0.35
    t: float = 1.0
    probe_times: list = field(default_factory=list)  # defaults to [t]
    r_list: list = field(default_factory=lambda: [25.0, 50.0, 100.0, 200.0])
    delta: float = 0.05
    replicas: int = 2000
    master_seed: int = 20240801
    out_dir: str = "out"
    kappa_convention: str = "spectral"
    cov_cache: str = ""
    workers: int = 0  # 0: use the available core count
    x_window: float = 20.0
    cov_x_max: float = 4.0
    ergodic_coeffs: list = field(default_factory=lambda: [1.0])
    ergodic_shifts: list = field(default_factory=lambda: [0.0])
    chaos_n_max: int = 2
    chaos_xs: list = field(default_factory=lambda: [0.0, 0.5, 1.0, 2.0])
    malliavin_eps: float = 1e-3
    malliavin_cells: int = 5
    allow_small_m: bool = False
    store_trajectory: bool = False

    def merged(self, overrides: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        for key, raw in overrides.items():
            cfg._set(key, raw)
        return cfg

    def _set(self, key, raw):
        names = {f.name: f for f in fields(self)}
        if key not in names:
            raise ValidationError(f"unknown configuration key '{key}'")
        cur = getattr(self, key)
        if isinstance(cur, bool):
            val = str(raw).lower() in ("1", "true", "yes", "on")
        elif isinstance(cur, int):
            val = int(raw)
        elif isinstance(cur, float):
            val = float(raw)
        elif isinstance(cur, list):
            val = _floats(raw)
        else:
            val = str(raw)
        setattr(self, key, val)

    def validate(self) -> "ExperimentConfig":
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {', '.join(KINDS)}")
        make_params(self.hurst)  # enforces the open interval (1/4, 1/2)
        if self.kappa_convention not in ("spectral", "gagliardo"):
            raise ValidationError("kappa_convention must be 'spectral' or 'gagliardo'")
        if self.delta <= 0:
            raise ValidationError("delta must be positive")
        if not self.probe_times:
            self.probe_times = [self.t]
        if self.t not in self.probe_times:
            self.probe_times.append(self.t)
        for pt in self.probe_times:
            k = pt / self.delta
            if abs(k - round(k)) > 1e-9 or pt <= 0:
                raise ValidationError(f"delta must divide every probe time; got t={pt}")
        if self.t < max(self.probe_times):
            raise ValidationError("t must be the largest probe time")
        if not self.r_list or min(self.r_list) <= 0:
            raise ValidationError("r_list must contain positive radii")
        if self.replicas < 1:
            raise ValidationError("replicas must be at least 1")
        if (
            self.kind in STATISTICAL_KINDS
            and self.replicas < 500
            and not self.allow_small_m
        ):
            raise ValidationError(
                f"{self.kind} needs at least 500 replicas (override with allow_small_m=true)"
            )
        if self.chaos_n_max not in (1, 2, 3):
            raise ValidationError("chaos_n_max must be 1, 2 or 3")
        if self.workers < 0:
            raise ValidationError("workers must be nonnegative")
        return self

    def resolved_workers(self) -> int:
        return self.workers if self.workers > 0 else (os.cpu_count() or 1)


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Parse a flat key=value file (`#` comments) and apply overrides."""
    cfg = ExperimentConfig()
    if path:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValidationError(f"{path}:{lineno}: expected key=value")
                key, val = (part.strip() for part in line.split("=", 1))
                cfg._set(key, val)
    for key, val in (overrides or {}).items():
        cfg._set(key, val)
    return cfg
