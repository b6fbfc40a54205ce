"""Experiment configuration: TOML files mapped onto nested dataclasses.

Unknown keys are rejected and every validation failure is collected before
reporting, so one run of the loader lists all problems in a file.  Times in
the ``*_diam`` fields are in units of the medium's travel-time diameter.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
import typing
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import MediumSpec


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every failure."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ProfileConfig:
    """Coefficient field.

    ``kind = "constant"``: ``mean``.
    ``kind = "sine"``: ``mean + amplitude * prod_k sin(2 pi wavenumber x_k / L_k + phase)``.
    ``kind = "gaussian"``: ``mean + amplitude * exp(-|x - centre|^2 / (2 width^2))``.
    """

    kind: str = "constant"
    mean: float = 1.0
    amplitude: float = 0.0
    wavenumber: float = 1.0
    phase: float = 0.0
    centre: tuple[float, ...] = ()
    width: float = 0.1

    def validate(self, path: str, errors: list[str]) -> None:
        if self.kind not in ("constant", "sine", "gaussian"):
            errors.append(f"{path}.kind: unknown profile kind {self.kind!r}")
        if self.kind == "gaussian" and not self.width > 0:
            errors.append(f"{path}.width: must be positive")

    def to_coefficient(self, lengths: tuple[float, ...]):
        if self.kind == "constant":
            return float(self.mean)
        if self.kind == "sine":
            def sine(*xs):
                prod = np.ones_like(xs[0])
                for x, L in zip(xs, lengths):
                    prod = prod * np.sin(2 * np.pi * self.wavenumber * x / L + self.phase)
                return self.mean + self.amplitude * prod
            return sine
        centre = self.centre or tuple(0.5 * L for L in lengths)

        def gaussian(*xs):
            r2 = sum((x - c) ** 2 for x, c in zip(xs, centre))
            return self.mean + self.amplitude * np.exp(-r2 / (2 * self.width**2))
        return gaussian


@dataclass(frozen=True)
class MediumConfig:
    lengths: tuple[float, ...] = (1.0,)
    nodes: tuple[int, ...] = (401,)
    speed: ProfileConfig = ProfileConfig()
    density: ProfileConfig = ProfileConfig()
    potential: ProfileConfig = ProfileConfig(mean=0.0)

    def validate(self, path: str, errors: list[str]) -> None:
        if len(self.lengths) not in (1, 2) or len(self.nodes) != len(self.lengths):
            errors.append(f"{path}: lengths and nodes must both have 1 or 2 entries")
        if any(n < 3 for n in self.nodes):
            errors.append(f"{path}.nodes: at least 3 nodes per axis")
        if any(not L > 0 for L in self.lengths):
            errors.append(f"{path}.lengths: must be positive")

    def to_spec(self, resolution_scale: int = 1) -> MediumSpec:
        nodes = tuple((n - 1) * resolution_scale + 1 for n in self.nodes)
        return MediumSpec(
            lengths=self.lengths,
            nodes=nodes,
            speed=self.speed.to_coefficient(self.lengths),
            density=self.density.to_coefficient(self.lengths),
            potential=self.potential.to_coefficient(self.lengths),
        )


@dataclass(frozen=True)
class SourceConfig:
    """Smooth pulse ``amplitude * bump(t; start*T, stop*T)`` on the listed boundary nodes.

    An empty ``boundary_nodes`` list means every boundary node.
    """

    boundary_nodes: tuple[int, ...] = ()
    start: float = 0.0
    stop: float = 1.0
    amplitude: float = 1.0

    def validate(self, path: str, errors: list[str]) -> None:
        if not 0 <= self.start < self.stop <= 2:
            errors.append(f"{path}: need 0 <= start < stop <= 2 (units of T)")


@dataclass(frozen=True)
class IterationSettings:
    omega_rule: str = "norm"
    kappa: float = 2.2
    tol: float = 1e-6
    residual_tol: float = 1e-5
    max_iter: int = 100_000
    sharing: str = "naive"
    derivative: str = "causal"

    def validate(self, path: str, errors: list[str]) -> None:
        if self.omega_rule not in ("norm", "reciprocal"):
            errors.append(f"{path}.omega_rule: expected 'norm' or 'reciprocal'")
        if self.omega_rule == "norm" and not self.kappa > 2:
            errors.append(f"{path}.kappa: must exceed 2")
        if self.sharing not in ("naive", "shared"):
            errors.append(f"{path}.sharing: expected 'naive' or 'shared'")
        if self.derivative not in ("causal", "centered"):
            errors.append(f"{path}.derivative: expected 'causal' or 'centered'")
        if not self.tol > 0 or not self.residual_tol > 0:
            errors.append(f"{path}: tolerances must be positive")
        if self.max_iter < 1:
            errors.append(f"{path}.max_iter: must be positive")


@dataclass(frozen=True)
class CutoffConfig:
    """Mask ``Gamma x (T - s, T)`` and the regularization schedule."""

    boundary_nodes: tuple[int, ...] = (0,)
    duration_diam: float = 0.4
    alphas: tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    solver: str = "neumann"

    def validate(self, path: str, errors: list[str]) -> None:
        if not self.boundary_nodes:
            errors.append(f"{path}.boundary_nodes: must not be empty")
        if not self.duration_diam > 0:
            errors.append(f"{path}.duration_diam: must be positive")
        _check_schedule(f"{path}.alphas", self.alphas, errors, unit=True)
        if self.solver not in ("neumann", "cg"):
            errors.append(f"{path}.solver: expected 'neumann' or 'cg'")


@dataclass(frozen=True)
class FocusConfig:
    z: int = 0
    t_hat_diam: float = 0.3
    eps_diam: tuple[float, ...] = (0.1, 0.05, 0.025)
    gamma_radii: tuple[float, ...] = (0.5,)
    alphas: tuple[float, ...] = (1e-3,)
    solver: str = "cg"
    control_t_hat_diam: float = 0.0

    def validate(self, path: str, errors: list[str]) -> None:
        if not self.t_hat_diam > 0:
            errors.append(f"{path}.t_hat_diam: must be positive")
        _check_schedule(f"{path}.eps_diam", self.eps_diam, errors)
        if self.eps_diam and max(self.eps_diam) >= self.t_hat_diam:
            errors.append(f"{path}.eps_diam: every eps must be below t_hat_diam")
        _check_schedule(f"{path}.gamma_radii", self.gamma_radii, errors)
        _check_schedule(f"{path}.alphas", self.alphas, errors, unit=True)
        if self.solver not in ("neumann", "cg"):
            errors.append(f"{path}.solver: expected 'neumann' or 'cg'")
        if self.control_t_hat_diam < 0:
            errors.append(f"{path}.control_t_hat_diam: must be non-negative")


@dataclass(frozen=True)
class BlagoConfig:
    samples: int = 10
    refinement: int = 2

    def validate(self, path: str, errors: list[str]) -> None:
        if self.samples < 1:
            errors.append(f"{path}.samples: must be positive")
        if self.refinement < 2:
            errors.append(f"{path}.refinement: must be at least 2")


@dataclass(frozen=True)
class SweepConfig:
    axis: str = "alpha"

    def validate(self, path: str, errors: list[str]) -> None:
        if self.axis not in ("alpha", "eps"):
            errors.append(f"{path}.axis: expected 'alpha' or 'eps'")


@dataclass(frozen=True)
class ExperimentConfig:
    """Top-level experiment description; see ``configs/`` for annotated examples."""

    medium: MediumConfig = MediumConfig()
    horizon_diam: float = 2.5
    cfl: float = 0.95
    oracle: str = "cached"
    memory_budget_mib: int = 1024
    seed: int = 0
    output_dir: str = "out"
    source: SourceConfig = SourceConfig()
    iteration: IterationSettings = IterationSettings()
    cutoff: CutoffConfig = CutoffConfig()
    focus: FocusConfig = FocusConfig()
    blago: BlagoConfig = BlagoConfig()
    sweep: SweepConfig = SweepConfig()

    def validate(self, path: str, errors: list[str]) -> None:
        if not self.horizon_diam > 2:
            errors.append(f"{path}horizon_diam: T must exceed twice the diameter")
        if not 0 < self.cfl <= 1:
            errors.append(f"{path}cfl: must lie in (0, 1]")
        if self.oracle not in ("cached", "on_the_fly"):
            errors.append(f"{path}oracle: expected 'cached' or 'on_the_fly'")
        if self.memory_budget_mib < 1:
            errors.append(f"{path}memory_budget_mib: must be positive")
        if self.focus.t_hat_diam + max(self.focus.eps_diam, default=0.0) >= self.horizon_diam:
            errors.append("focus: t_hat_diam + max eps_diam must stay below horizon_diam")
        if self.cutoff.duration_diam > self.horizon_diam:
            errors.append("cutoff.duration_diam: must not exceed horizon_diam")

    def config_hash(self) -> str:
        canonical = json.dumps(dataclasses.asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def _check_schedule(path: str, values, errors: list[str], unit: bool = False) -> None:
    if not values:
        errors.append(f"{path}: must not be empty")
        return
    if any(not v > 0 for v in values):
        errors.append(f"{path}: values must be positive")
    if unit and any(not v < 1 for v in values):
        errors.append(f"{path}: values must be below 1")
    if any(b >= a for a, b in zip(values, values[1:])):
        errors.append(f"{path}: must be strictly decreasing")


def _coerce(tp, value, path: str, errors: list[str]):
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            errors.append(f"{path}: expected a table")
            return tp()
        return _build(tp, value, path, errors)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            errors.append(f"{path}: expected an array")
            return ()
        (inner, _) = typing.get_args(tp)
        return tuple(_coerce(inner, v, f"{path}[{k}]", errors) for k, v in enumerate(value))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            errors.append(f"{path}: expected a number")
            return 0.0
        return float(value)
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            errors.append(f"{path}: expected an integer")
            return 0
        return value
    if tp is str:
        if not isinstance(value, str):
            errors.append(f"{path}: expected a string")
            return ""
        return value
    raise TypeError(f"unsupported config field type {tp!r}")


def _build(cls, data: dict, path: str, errors: list[str]):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in sorted(set(data) - names):
        errors.append(f"{path + '.' if path else ''}{key}: unknown key")
    kwargs = {}
    for name in names & set(data):
        kwargs[name] = _coerce(hints[name], data[name], f"{path + '.' if path else ''}{name}", errors)
    return cls(**kwargs)


def _validate_tree(obj, path: str, errors: list[str]) -> None:
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            _validate_tree(value, f"{path}{f.name}.", errors)
    obj.validate(path.rstrip(".") if path else "", errors)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    errors: list[str] = []
    config = _build(ExperimentConfig, data, "", errors)
    # Unknown keys leave the typed values intact, so validation can still run.
    if all(e.endswith(": unknown key") for e in errors):
        _validate_tree(config, "", errors)
    if errors:
        raise ConfigError(errors)
    return config


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(data)
