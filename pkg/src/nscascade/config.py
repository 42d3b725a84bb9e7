"""Experiment configuration: a flat ``key = value`` file under ``[experiment]``.

Example::

    [experiment]
    schema_version = 1
    theta_star = 32, 0, 0
    eta_star = 0, 0, 2
    b = 1.5
    gamma = 0.85
    A = 16
    k_star = 2
    epsilon0 = 0.5
    n = 256
    K = 8
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .construction import (
    ConfigError,
    TargetSpec,
    build_scales,
    default_diagnostic_exponent,
)

__all__ = ["ExperimentConfig", "load_config", "reference_config", "SCHEMA_VERSION"]

SCHEMA_VERSION = 1


@dataclass
class ExperimentConfig:
    theta_star: tuple = (32.0, 0.0, 0.0)
    eta_star: tuple = (0, 0, 2)
    b: float = 1.5
    gamma: float = 0.85
    A: float = 16.0
    k_star: object = 2
    epsilon0: float = 0.5
    n: int | None = 256
    K: float = 8.0
    cfl: float = 0.5
    dt_max: float = 1e-2
    alpha: float | None = None
    beta: float | None = None
    eps_star: float = 0.1
    n_max: int = 2
    samples_per_decade: int = 16
    snapshot_times: tuple = ()
    output: str = "out"
    remesh_tol: float = 1e-26
    min_grid: int = 16
    max_wall: float = 0.0
    field_snapshots: str = "none"

    def __post_init__(self):
        b, g = self.b, self.gamma
        d = default_diagnostic_exponent(b, g) if 1 < b < 2 else 0.0
        if self.alpha is None:
            self.alpha = d
        if self.beta is None:
            self.beta = d

    def target(self) -> TargetSpec:
        return TargetSpec(tuple(self.theta_star), tuple(self.eta_star), self.eps_star, self.n_max)

    def scales(self):
        return build_scales(
            self.target(), self.b, self.gamma, self.A, self.k_star, self.epsilon0, self.n
        )

    def t_end(self, scales=None) -> float:
        scales = scales or self.scales()
        return self.K / scales.N[0] ** 2

    def validate(self):
        """Check every run precondition; returns the scale table."""
        if not self.cfl > 0:
            raise ConfigError(f"cfl={self.cfl} violates cfl > 0")
        if not self.dt_max > 0:
            raise ConfigError(f"dt_max={self.dt_max} violates dt_max > 0")
        if not self.K > 0:
            raise ConfigError(f"K={self.K} violates K > 0")
        if self.samples_per_decade < 1:
            raise ConfigError("samples_per_decade must be at least 1")
        if self.field_snapshots not in ("none", "psi", "all"):
            raise ConfigError("field_snapshots must be one of none, psi, all")
        if any(t < 0 for t in self.snapshot_times):
            raise ConfigError("snapshot_times must be non-negative")
        return self.scales()

    def to_dict(self) -> dict:
        out = asdict(self)
        out["theta_star"] = list(self.theta_star)
        out["eta_star"] = list(self.eta_star)
        out["snapshot_times"] = list(self.snapshot_times)
        out["schema_version"] = SCHEMA_VERSION
        return out


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _ints(text: str) -> tuple:
    vals = _floats(text)
    if any(v != int(v) for v in vals):
        raise ConfigError(f"expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


_PARSERS = {
    "theta_star": _floats,
    "eta_star": _ints,
    "b": float,
    "gamma": float,
    "A": float,
    "k_star": lambda s: "auto" if s.strip() == "auto" else int(s),
    "epsilon0": lambda s: float(eval_fraction(s)),
    "n": lambda s: None if s.strip() == "auto" else int(s),
    "K": float,
    "cfl": float,
    "dt_max": float,
    "alpha": float,
    "beta": float,
    "eps_star": float,
    "n_max": int,
    "samples_per_decade": int,
    "snapshot_times": _floats,
    "output": str,
    "remesh_tol": float,
    "min_grid": int,
    "max_wall": float,
    "field_snapshots": str,
}


def eval_fraction(text: str) -> float:
    """Parse ``0.5`` or ``1/2``."""
    if "/" in text:
        a, b = text.split("/", 1)
        return float(a) / float(b)
    return float(text)


def load_config(path, check: bool = True) -> ExperimentConfig:
    """Read a configuration file and, unless ``check`` is false, validate it.

    Raises ``ConfigError`` on unreadable files, unknown keys or bad values.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    if "experiment" not in parser:
        raise ConfigError(f"{path}: missing [experiment] section")
    sec = parser["experiment"]
    version = sec.get("schema_version")
    if version is None or int(version) != SCHEMA_VERSION:
        raise ConfigError(f"{path}: schema_version must be {SCHEMA_VERSION}")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {}
    for key, raw in sec.items():
        if key == "schema_version":
            continue
        if key not in known:
            raise ConfigError(f"{path}: unknown key {key!r}")
        try:
            kwargs[key] = _PARSERS[key](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"{path}: bad value for {key}: {raw!r}") from exc
    cfg = ExperimentConfig(**kwargs)
    if check:
        cfg.validate()
    return cfg


def reference_config(**overrides) -> ExperimentConfig:
    """Desk-scale stand-in: ``N = (2, 8, 64)`` on a 256^3 grid.

    ``k_star = 2`` deliberately undercuts the automatic choice (9 for a
    growth ratio of 16), which no desk grid can hold.
    """
    return ExperimentConfig(**overrides)


def write_config(cfg: ExperimentConfig, path) -> None:
    d = cfg.to_dict()
    lines = ["[experiment]", f"schema_version = {SCHEMA_VERSION}"]
    for f in fields(ExperimentConfig):
        v = d[f.name]
        if isinstance(v, (list, tuple)):
            v = ", ".join(repr(x) for x in v)
        elif v is None:
            v = "auto"
        lines.append(f"{f.name} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")

