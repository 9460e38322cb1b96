"""Dielectric response on the imaginary frequency axis and the Matsubara grid."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Final

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy import constants

from helixtorque.fileio import load_mapping


class PhysicalConstants:
    """CODATA values in SI units; not configurable."""

    c: Final[float] = constants.c
    hbar: Final[float] = constants.hbar
    k_B: Final[float] = constants.Boltzmann


DEFAULT_TEMPERATURE_K = 298.15


class OscillatorTerm(BaseModel):
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    strength: float = Field(ge=0.0)
    resonance: float = Field(gt=0.0, alias="resonance_rad_s")


class DielectricModel(BaseModel):
    """Uniaxial response eps(i zeta) = debye + sum_k C_k / (1 + zeta^2 / w_k^2) per axis."""

    model_config = ConfigDict(frozen=True)

    label: str = "unnamed"
    debye_static_x: float = Field(default=1.0, ge=1.0)
    debye_static_y: float = Field(default=1.0, ge=1.0)
    oscillators_x: tuple[OscillatorTerm, ...] = ()
    oscillators_y: tuple[OscillatorTerm, ...] = ()

    @classmethod
    def constant(cls, eps_x: float, eps_y: float, label: str = "constant") -> DielectricModel:
        return cls(label=label, debye_static_x=eps_x, debye_static_y=eps_y)

    @property
    def is_isotropic(self) -> bool:
        return (
            self.debye_static_x == self.debye_static_y
            and self.oscillators_x == self.oscillators_y
        )

    def to_document(self) -> dict:
        return {
            "label": self.label,
            "debye_static_x": self.debye_static_x,
            "debye_static_y": self.debye_static_y,
            "oscillators_x": [_oscillator_document(o) for o in self.oscillators_x],
            "oscillators_y": [_oscillator_document(o) for o in self.oscillators_y],
        }


def _oscillator_document(term: OscillatorTerm) -> dict[str, float]:
    return {"strength": term.strength, "resonance_rad_s": term.resonance}


class ThermalGrid(BaseModel):
    model_config = ConfigDict(frozen=True)

    temperature: float = Field(default=DEFAULT_TEMPERATURE_K, gt=0.0)
    max_terms: int = Field(default=5000, ge=1)
    rel_tol: float = Field(default=1e-8, gt=0.0, lt=1.0)
    allow_truncation: bool = False

    @field_validator("temperature")
    @classmethod
    def _finite_temperature(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("temperature must be finite")
        return value


def matsubara_frequency(n: int, grid: ThermalGrid) -> float:
    if n < 0:
        raise ValueError(f"Matsubara index must be non-negative, got {n}")
    if n == 0:
        return 0.0
    unit = 2.0 * math.pi * PhysicalConstants.k_B * grid.temperature / PhysicalConstants.hbar
    return n * unit


def _axis_permittivity(debye: float, terms: tuple[OscillatorTerm, ...], zeta: float) -> float:
    if not terms:
        return float(debye)
    strength = np.array([t.strength for t in terms])
    resonance = np.array([t.resonance for t in terms])
    return float(debye + np.sum(strength / (1.0 + (zeta / resonance) ** 2)))


def eval_permittivity(model: DielectricModel, zeta: float) -> tuple[float, float]:
    if zeta < 0:
        raise ValueError(f"zeta must be non-negative, got {zeta}")
    return (
        _axis_permittivity(model.debye_static_x, model.oscillators_x, zeta),
        _axis_permittivity(model.debye_static_y, model.oscillators_y, zeta),
    )


def load_dielectric_model(path: Path) -> DielectricModel:
    return DielectricModel.model_validate(load_mapping(Path(path)))


def save_dielectric_model(model: DielectricModel, path: Path) -> None:
    Path(path).write_text(
        json.dumps(model.to_document(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def example_model_path() -> Path:
    return Path(__file__).with_name("data") / "example_5cb.json"


def load_example_model() -> DielectricModel:
    """Illustrative 5CB-like parameter set; not literature values."""
    return load_dielectric_model(example_model_path())
