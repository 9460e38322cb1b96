"""Reference reflection data for validating the staircase pipeline.

A cholesteric is rebuilt literally as a stack of thin uniform layers, each
rotated by delta against its neighbour, and multiplied out layer by layer.
Isotropic media get closed-form Fresnel coefficients.  The p-polarized sign
convention follows the s/p basis used by the transfer-matrix pipeline, where
the static limit is r_pp = (eps_gap - eps_m) / (eps_gap + eps_m).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from helixtorque.berreman import (
    FloatArray,
    LayerOptics,
    ReflectionMatrix,
    TransferMatrix4,
    WaveIndices,
    fresnel_from_transfer,
    iso_basis,
    layer_transfer,
    mode_basis,
    stack_transfer,
    to_sp_basis,
)
from helixtorque.cholesteric import CholestericSlab, slab_reflection, uniaxial_reflection
from helixtorque.lifshitz import EventSink
from helixtorque.media import DielectricModel, PhysicalConstants, ThermalGrid, eval_permittivity, matsubara_frequency

DEFAULT_LAYERS_PER_PITCH = 1000
DEFAULT_RESOLUTIONS = (100, 300, 1000, 3000)
ZERO_TWIST_TOLERANCE = 1e-10
# increases in the staircase error below this fraction of the tolerance count as a plateau
PLATEAU_FRACTION = 1e-3


class DiscreteStackSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_layers: int = Field(ge=1)
    layer_thickness: float = Field(gt=0.0)
    delta: float
    theta_front: float = 0.0
    sense: int = 1
    model: DielectricModel

    @classmethod
    def shadowing(cls, slab: CholestericSlab, layers_per_pitch: int) -> DiscreteStackSpec:
        """Stack with pitch = pi * d / delta matching `slab`."""
        thickness = slab.pitch / layers_per_pitch
        return cls(
            n_layers=max(1, round(slab.d_tot / thickness)),
            layer_thickness=thickness,
            delta=math.pi / layers_per_pitch,
            theta_front=slab.theta_front,
            sense=slab.handedness.sign,
            model=slab.model,
        )

    @property
    def pitch(self) -> float:
        if self.delta == 0:
            return math.inf
        return math.pi * self.layer_thickness / abs(self.delta)


def discrete_stack_reflection(
    spec: DiscreteStackSpec, wave: WaveIndices, gap_eps: float = 1.0
) -> ReflectionMatrix:
    eps_x, eps_y = eval_permittivity(spec.model, float(wave.zeta))
    iso = iso_basis(gap_eps, wave)
    probe = LayerOptics(eps_x=eps_x, eps_y=eps_y, theta=spec.theta_front)
    if probe.is_degenerate:
        medium = iso_basis(eps_y, wave)
        total = layer_transfer(medium, spec.n_layers * spec.layer_thickness)
        return fresnel_from_transfer(to_sp_basis(total, iso))

    wave_shape = np.broadcast(np.asarray(wave.k_rho), np.asarray(wave.eta), np.asarray(wave.zeta)).shape
    extra = (1,) * len(wave_shape)
    angles = spec.theta_front + spec.sense * spec.delta * np.arange(spec.n_layers)
    layer = LayerOptics(eps_x=eps_x, eps_y=eps_y, theta=angles.reshape((-1,) + extra))
    layers = layer_transfer(mode_basis(layer, wave), spec.layer_thickness)

    total = stack_transfer(
        [TransferMatrix4(core=layers.core[j], log_scale=layers.log_scale[j]) for j in range(spec.n_layers)]
    )
    return fresnel_from_transfer(to_sp_basis(total, iso))


def _normal_wavenumber(eps: float, wave: WaveIndices) -> FloatArray:
    kappa = np.asarray(wave.zeta, dtype=float) / PhysicalConstants.c
    return np.sqrt(eps * kappa**2 + np.asarray(wave.k_rho, dtype=float) ** 2)


def isotropic_fresnel(eps_gap: float, eps_medium: float, wave: WaveIndices) -> ReflectionMatrix:
    if eps_gap < 1 or eps_medium < 1:
        raise ValueError("permittivities must be >= 1")
    k3 = _normal_wavenumber(eps_gap, wave)
    km = _normal_wavenumber(eps_medium, wave)
    zero = np.zeros_like(k3)
    return ReflectionMatrix(
        r_ss=(k3 - km) / (k3 + km),
        r_sp=zero,
        r_ps=zero,
        r_pp=(eps_gap * km - eps_medium * k3) / (eps_gap * km + eps_medium * k3),
    )


def isotropic_slab_reflection(
    eps_gap: float, eps_medium: float, thickness: float, wave: WaveIndices
) -> ReflectionMatrix:
    """Slab of eps_medium embedded in the gap medium (two interfaces, all echoes summed)."""
    interface = isotropic_fresnel(eps_gap, eps_medium, wave)
    decay = np.exp(-2.0 * _normal_wavenumber(eps_medium, wave) * thickness)

    def airy(r: FloatArray) -> FloatArray:
        return r * (1.0 - decay) / (1.0 - r**2 * decay)

    return ReflectionMatrix(
        r_ss=airy(interface.r_ss),
        r_sp=interface.r_sp,
        r_ps=interface.r_ps,
        r_pp=airy(interface.r_pp),
    )


@dataclass(frozen=True)
class Probe:
    zeta: float
    k_rho: float
    eta: float

    def wave(self) -> WaveIndices:
        return WaveIndices(k_rho=self.k_rho, eta=self.eta, zeta=self.zeta)


def default_probes(thermal: ThermalGrid, separation: float = 2e-6) -> list[Probe]:
    zeta1 = matsubara_frequency(1, thermal)
    k = 1.0 / separation
    return [
        Probe(zeta=zeta1, k_rho=k, eta=0.3),
        Probe(zeta=zeta1, k_rho=2.0 * k, eta=1.1),
        Probe(zeta=2.0 * zeta1, k_rho=0.5 * k, eta=2.0),
    ]


@dataclass(frozen=True)
class OracleReport:
    resolutions: tuple[int, ...]
    max_errors: tuple[float, ...]
    successive_differences: tuple[float, ...]
    slope: float
    zero_twist_error: float
    tolerance: float
    failures: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def to_document(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "max_errors": list(self.max_errors),
            "successive_differences": list(self.successive_differences),
            "slope": self.slope,
            "zero_twist_error": self.zero_twist_error,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "failures": list(self.failures),
        }


def _fitted_slope(resolutions: Sequence[int], errors: Sequence[float]) -> float:
    pairs = [(math.pi / n, e) for n, e in zip(resolutions, errors) if e > 0]
    if len(pairs) < 2:
        return math.nan
    log_delta = np.log([p[0] for p in pairs])
    log_err = np.log([p[1] for p in pairs])
    return float(np.polyfit(log_delta, log_err, 1)[0])


def gate_failures(
    resolutions: Sequence[int],
    errors: Sequence[float],
    zero_twist: float,
    tolerance: float,
    reference_resolution: int = DEFAULT_LAYERS_PER_PITCH,
) -> list[str]:
    """Reasons an oracle run fails; empty when it passes.

    The staircase-vs-stack error must not grow as the stack is refined and
    must be below `tolerance` at the reference resolution.
    """
    failures = []
    if zero_twist >= ZERO_TWIST_TOLERANCE:
        failures.append(f"zero-twist stack disagrees with a uniform slab: {zero_twist:.3e}")
    slack = PLATEAU_FRACTION * tolerance
    for (lo, a), (hi, b) in zip(zip(resolutions, errors), zip(resolutions[1:], errors[1:])):
        if b > a + slack:
            failures.append(
                f"staircase deviation grows from {a:.3e} at {lo} to {b:.3e} at {hi} layers/pitch"
            )
    if reference_resolution in resolutions:
        at_ref = errors[list(resolutions).index(reference_resolution)]
        if at_ref >= tolerance:
            failures.append(
                f"staircase deviation {at_ref:.3e} at {reference_resolution} layers/pitch exceeds {tolerance:.1e}"
            )
    return failures


def oracle_check(
    slab: CholestericSlab,
    probes: Sequence[Probe],
    *,
    resolutions: Sequence[int] = DEFAULT_RESOLUTIONS,
    gap_eps: float = 1.0,
    tolerance: float = 1e-3,
    reference_resolution: int = DEFAULT_LAYERS_PER_PITCH,
    events: Optional[EventSink] = None,
) -> OracleReport:
    resolutions = tuple(sorted(resolutions))
    staircase = [slab_reflection(slab, p.wave(), gap_eps) for p in probes]
    discrete: dict[int, list[ReflectionMatrix]] = {}
    errors = []
    for n in resolutions:
        discrete[n] = [
            discrete_stack_reflection(DiscreteStackSpec.shadowing(slab, n), p.wave(), gap_eps)
            for p in probes
        ]
        error = max(d.max_abs_difference(s) for d, s in zip(discrete[n], staircase))
        errors.append(error)
        if events is not None:
            events({"event": "oracle_probe", "layers_per_pitch": n, "max_error": error})

    successive = tuple(
        max(a.max_abs_difference(b) for a, b in zip(discrete[lo], discrete[hi]))
        for lo, hi in zip(resolutions[:-1], resolutions[1:])
    )

    zero_twist = 0.0
    flat = DiscreteStackSpec.shadowing(slab, reference_resolution).model_copy(update={"delta": 0.0})
    for p in probes:
        exact = discrete_stack_reflection(flat, p.wave(), gap_eps)
        model = uniaxial_reflection(
            slab.model,
            flat.n_layers * flat.layer_thickness,
            0.0,
            slab.handedness.sign,
            slab.theta_front,
            p.wave(),
            gap_eps,
        )
        zero_twist = max(zero_twist, exact.max_abs_difference(model))

    failures = gate_failures(resolutions, errors, zero_twist, tolerance, reference_resolution)
    return OracleReport(
        resolutions=resolutions,
        max_errors=tuple(errors),
        successive_differences=successive,
        slope=_fitted_slope(resolutions, errors),
        zero_twist_error=zero_twist,
        tolerance=tolerance,
        failures=failures,
    )
