from __future__ import annotations

from pathlib import Path
from typing import Any, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from helixtorque.cholesteric import CholestericSlab, Handedness
from helixtorque.errors import ConfigError
from helixtorque.fileio import load_mapping
from helixtorque.lifshitz import InteractionConfig, Pairing, QuadratureSpec, SweepCase
from helixtorque.media import (
    DEFAULT_TEMPERATURE_K,
    DielectricModel,
    ThermalGrid,
    load_dielectric_model,
    load_example_model,
)
from helixtorque.oracle import DEFAULT_RESOLUTIONS

MICRON = 1e-6
EXAMPLE_DIELECTRIC = "example"


class SlabConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_tot_m: float = Field(gt=0.0)
    pitch_m: float = Field(gt=0.0)
    handedness: Handedness = Handedness.RIGHT
    theta_front_rad: float = 0.0
    # packaged "example", a key of RunConfig.dielectrics, a model file path or an inline model
    dielectric: Union[DielectricModel, str] = EXAMPLE_DIELECTRIC

    def to_slab(self) -> CholestericSlab:
        if not isinstance(self.dielectric, DielectricModel):
            raise ConfigError(f"dielectric {self.dielectric!r} has not been resolved")
        return CholestericSlab(
            d_tot=self.d_tot_m,
            pitch=self.pitch_m,
            handedness=self.handedness,
            theta_front=self.theta_front_rad,
            model=self.dielectric,
        )


class ThermalSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_terms: int = Field(default=5000, ge=1)
    rel_tol: float = Field(default=1e-8, gt=0.0, lt=1.0)
    allow_truncation: bool = False


class SweepSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_tot_m: tuple[float, ...] = ()
    pairings: tuple[Pairing, ...] = ("homochiral", "heterochiral")


class OracleSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    resolutions: tuple[int, ...] = DEFAULT_RESOLUTIONS
    tolerance: float = Field(default=1e-3, gt=0.0)
    probe_separation_um: float = Field(default=2.0, gt=0.0)

    @field_validator("resolutions")
    @classmethod
    def _at_least_two(cls, value: tuple[int, ...]) -> tuple[int, ...]:
        if len(value) < 2 or any(n < 1 for n in value):
            raise ValueError("need at least two positive layers-per-pitch resolutions")
        return tuple(sorted(value))


class OutputConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    path: Optional[str] = None
    format: Literal["csv", "json"] = "csv"


class LoggingConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    log_dir: str = "logs"
    filename: str = "htorque.jsonl"
    max_file_bytes: int = Field(default=50 * 1024 * 1024, gt=0)


class RunConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    slabs: tuple[SlabConfig, SlabConfig]
    dielectrics: dict[str, DielectricModel] = Field(default_factory=dict)
    pairing: Optional[Pairing] = None
    gap_eps: float = Field(default=1.0, ge=1.0)
    temperature_k: float = Field(default=DEFAULT_TEMPERATURE_K, gt=0.0)
    separations_um: tuple[float, ...] = (1.0,)
    phi_points: int = 32
    fourier_orders: int = Field(default=4, ge=1)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    thermal: ThermalSettings = Field(default_factory=ThermalSettings)
    sweep: SweepSettings = Field(default_factory=SweepSettings)
    oracle: OracleSettings = Field(default_factory=OracleSettings)
    output: OutputConfig = Field(default_factory=OutputConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @field_validator("separations_um")
    @classmethod
    def _ascending_positive(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise ValueError("at least one separation is required")
        if any(s <= 0 for s in value):
            raise ValueError("separations must be strictly positive")
        if any(b <= a for a, b in zip(value[:-1], value[1:])):
            raise ValueError("separations must be sorted strictly ascending")
        return value

    @field_validator("phi_points")
    @classmethod
    def _even_grid(cls, value: int) -> int:
        if value < 8 or value % 2:
            raise ValueError(f"phi_points must be an even integer >= 8, got {value}")
        return value

    @model_validator(mode="after")
    def _fourier_fits_grid(self) -> RunConfig:
        if 2 * self.fourier_orders >= self.phi_points:
            raise ValueError(
                f"fourier_orders={self.fourier_orders} needs phi_points > {2 * self.fourier_orders}"
            )
        return self

    def with_overrides(self, **updates: Any) -> RunConfig:
        """Copy with top-level fields replaced, re-running validation."""
        return RunConfig.model_validate({**self.model_dump(), **updates})

    def resolved(self, base_dir: Path) -> RunConfig:
        """Replace every dielectric reference by the model it names."""
        slabs = tuple(
            slab.model_copy(update={"dielectric": self._resolve_dielectric(slab.dielectric, base_dir)})
            for slab in self.slabs
        )
        return self.model_copy(update={"slabs": slabs})

    def _resolve_dielectric(self, ref: DielectricModel | str, base_dir: Path) -> DielectricModel:
        if isinstance(ref, DielectricModel):
            return ref
        if ref in self.dielectrics:
            return self.dielectrics[ref]
        if ref == EXAMPLE_DIELECTRIC:
            return load_example_model()
        path = Path(ref).expanduser()
        if not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigError(f"dielectric model {ref!r} not found (looked for {path})")
        return load_dielectric_model(path)

    @property
    def separations_m(self) -> list[float]:
        return [s * MICRON for s in self.separations_um]

    def thermal_grid(self) -> ThermalGrid:
        return ThermalGrid(temperature=self.temperature_k, **self.thermal.model_dump())

    def to_interaction(self, separation_m: Optional[float] = None) -> InteractionConfig:
        slab1, slab2 = (s.to_slab() for s in self.slabs)
        config = InteractionConfig(
            slab1=slab1,
            slab2=slab2,
            gap_eps=self.gap_eps,
            separation=separation_m if separation_m is not None else self.separations_m[0],
            thermal=self.thermal_grid(),
            quadrature=QuadratureSpec.model_validate(
                {**self.quadrature.model_dump(), "phi_points": self.phi_points}
            ),
        )
        return config.with_pairing(self.pairing) if self.pairing else config

    def sweep_cases(self) -> list[SweepCase]:
        thicknesses = self.sweep.d_tot_m or (self.slabs[0].d_tot_m,)
        return [
            SweepCase(
                separation=sep * MICRON,
                d_tot=d,
                pairing=pairing,
                label=f"a={sep:g}um d={d * 1e6:g}um {pairing}",
            )
            for sep in self.separations_um
            for d in thicknesses
            for pairing in self.sweep.pairings
        ]

    def to_document(self) -> dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True)


def load_config(path: Path) -> RunConfig:
    path = Path(path)
    data = load_mapping(path)
    return RunConfig.model_validate(data).resolved(path.parent.resolve())
