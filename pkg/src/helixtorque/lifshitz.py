"""Casimir free energy, torque and orientational Fourier spectrum of two slabs."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Any, Callable, Literal, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, Field, field_validator

from helixtorque.berreman import FloatArray, ReflectionMatrix, WaveIndices
from helixtorque.cholesteric import CholestericSlab, uniaxial_reflection
from helixtorque.errors import (
    AliasingError,
    ConvergenceError,
    HelixTorqueError,
    NonPositiveDeterminantError,
    TorqueCheckError,
)
from helixtorque.media import PhysicalConstants, ThermalGrid, matsubara_frequency

EventSink = Callable[[dict[str, Any]], Any]
Pairing = Literal["homochiral", "heterochiral"]

CONSECUTIVE_SMALL_TERMS = 3
FD_STEP = 1e-2
# spectral vs 5-point torque at check_phi, relative to max|torque|
CHECK_TOLERANCE = 1e-2
# curves whose torque is below this fraction of max|E| are flat; the check is skipped
FLAT_TORQUE = 1e-9


class QuadratureSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_eta: int = 32
    n_krho: int = Field(default=40, gt=0)
    krho_cut: float = Field(default=60.0, gt=0.0)
    panel_edges: tuple[float, ...] = (0.0, 5.0, 20.0)
    phi_points: int = 32

    @field_validator("n_eta", "phi_points")
    @classmethod
    def _even_and_large(cls, value: int) -> int:
        if value < 8 or value % 2:
            raise ValueError(f"must be an even integer >= 8, got {value}")
        return value


class InteractionConfig(BaseModel):
    """Two slabs across an isotropic gap.

    Slab 1 sits at z < 0 and slab 2 at z > separation; the misalignment angle
    phi is added to slab 2's front-face angle.
    """

    model_config = ConfigDict(frozen=True)

    slab1: CholestericSlab
    slab2: CholestericSlab
    gap_eps: float = Field(default=1.0, ge=1.0)
    separation: float = Field(gt=0.0)
    thermal: ThermalGrid = Field(default_factory=ThermalGrid)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)

    def with_pairing(self, pairing: Pairing) -> InteractionConfig:
        handedness = self.slab1.handedness
        if pairing == "heterochiral":
            handedness = handedness.flipped()
        return self.model_copy(
            update={"slab2": self.slab2.model_copy(update={"handedness": handedness})}
        )


@dataclass(frozen=True)
class EnergyResult:
    phi: FloatArray
    energy: FloatArray
    terms: FloatArray
    converged: bool

    @property
    def terms_used(self) -> int:
        return int(self.terms.shape[0])

    @property
    def tail_ratio(self) -> float:
        """Largest |last Matsubara term| / |E| over the phi samples."""
        scale = float(np.max(np.abs(self.energy)))
        last = float(np.max(np.abs(self.terms[-1])))
        return last / scale if scale > 0 else last


@dataclass(frozen=True)
class TorqueCurve:
    phi_grid: FloatArray
    energy: FloatArray
    torque: FloatArray
    separation: float
    check_phi: float = math.pi / 3
    check_spectral: float = math.nan
    check_central: float = math.nan
    terms_used: int = 0
    converged: bool = True

    @property
    def check_residual(self) -> float:
        """|spectral - central difference| at check_phi relative to max|torque|."""
        peak = float(np.max(np.abs(self.torque)))
        if peak == 0.0:
            return abs(self.check_spectral - self.check_central)
        return abs(self.check_spectral - self.check_central) / peak

    def torque_at(self, phi: float) -> float:
        n = len(self.torque)
        coeffs = np.fft.rfft(self.torque) / n
        k = np.arange(len(coeffs))
        if n % 2 == 0:
            coeffs[-1] = 0.0
        series = coeffs[1:] * np.exp(2j * k[1:] * phi)
        return float(coeffs[0].real + 2.0 * np.sum(series.real))


@dataclass(frozen=True)
class FourierSpectrum:
    orders: FloatArray
    a: FloatArray
    b: FloatArray
    separation: float

    def ratios(self) -> tuple[FloatArray, FloatArray]:
        """a_m / b_1 and b_m / b_1 (dimensionless)."""
        b1 = self.b[0]
        return self.a / b1, self.b / b1


@dataclass(frozen=True)
class SweepCase:
    separation: float
    d_tot: float
    pairing: Pairing
    label: str = ""


@dataclass(frozen=True)
class SweepResult:
    case: SweepCase
    curve: Optional[TorqueCurve] = None
    spectrum: Optional[FourierSpectrum] = None
    error: Optional[str] = None


def log_det_D(
    r1: ReflectionMatrix, r2: ReflectionMatrix, k3: Any, a: float
) -> FloatArray:
    """ln det(I - r1 r2 exp(-2 k3 a)) in closed 2x2 form."""
    if a <= 0 or np.any(np.asarray(k3) <= 0):
        raise ValueError("k3 and the separation must be positive")
    round_trip = (r1.as_matrix() @ r2.as_matrix()) * np.exp(-2.0 * np.asarray(k3) * a)[
        ..., None, None
    ]
    trace = round_trip[..., 0, 0] + round_trip[..., 1, 1]
    det = (
        round_trip[..., 0, 0] * round_trip[..., 1, 1]
        - round_trip[..., 0, 1] * round_trip[..., 1, 0]
    )
    argument = 1.0 - trace + det
    if np.any(argument <= 0):
        raise NonPositiveDeterminantError(
            f"det(I - r1 r2 e^-2k3a) = {float(np.min(argument))!r} <= 0"
        )
    return np.log1p(det - trace)


@lru_cache(maxsize=64)
def _legendre(n: int) -> tuple[FloatArray, FloatArray]:
    return leggauss(n)


def krho_nodes(
    quad: QuadratureSpec, separation: float, zeta: float, gap_eps: float
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Nodes u = 2 k3 a, weights and k_rho for the radial integral.

    Returns empty arrays once the whole integrand lies beyond the cutoff.
    """
    kappa = zeta / PhysicalConstants.c
    u_min = 2.0 * separation * math.sqrt(gap_eps) * kappa
    if u_min >= quad.krho_cut:
        empty = np.empty(0)
        return empty, empty, empty
    edges = [u_min] + [e for e in quad.panel_edges if u_min < e < quad.krho_cut] + [quad.krho_cut]
    x, w = _legendre(quad.n_krho)
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        nodes.append(lo + half * (x + 1.0))
        weights.append(half * w)
    u = np.concatenate(nodes)
    k3 = u / (2.0 * separation)
    k_rho = np.sqrt(np.maximum(k3**2 - gap_eps * kappa**2, 0.0))
    return u, np.concatenate(weights), k_rho


def radial_cut_bound(quad: QuadratureSpec) -> float:
    """Share of the u e^{-u} radial weight beyond u = krho_cut."""
    return (1.0 + quad.krho_cut) * math.exp(-quad.krho_cut)


def eta_nodes(quad: QuadratureSpec) -> FloatArray:
    return 2.0 * math.pi * np.arange(quad.n_eta) / quad.n_eta


def matsubara_term(config: InteractionConfig, n: int, phis: FloatArray) -> FloatArray:
    """Weighted n-th Matsubara contribution to E/A at every phi (J/m^2)."""
    zeta = matsubara_frequency(n, config.thermal)
    a = config.separation
    u, w, k_rho = krho_nodes(config.quadrature, a, zeta, config.gap_eps)
    if u.size == 0:
        return np.zeros(len(phis))
    eta = eta_nodes(config.quadrature)
    wave = WaveIndices(k_rho=k_rho[:, None], eta=eta[None, :], zeta=zeta)
    k3 = (u / (2.0 * a))[:, None]

    s1, s2 = config.slab1, config.slab2
    # both slabs go through the same pipeline, so identical slabs give an even E(phi)
    r1 = uniaxial_reflection(
        s1.model, s1.d_tot, s1.turn, s1.handedness.sign, s1.theta_front, wave, config.gap_eps
    )
    fronts = s2.theta_front + np.asarray(phis, dtype=float)[:, None, None]
    r2 = uniaxial_reflection(
        s2.model, s2.d_tot, s2.turn, s2.handedness.sign, fronts, wave, config.gap_eps
    )
    ln_d = log_det_D(r1, r2, k3, a)
    ln_d = np.broadcast_to(ln_d, (len(phis),) + np.broadcast_shapes(k3.shape, eta[None, :].shape))

    eta_sum = ln_d.sum(axis=-1) * (2.0 * math.pi / config.quadrature.n_eta)
    radial = eta_sum @ (w * u / (4.0 * a * a))
    prefactor = PhysicalConstants.k_B * config.thermal.temperature / (4.0 * math.pi**2)
    weight = 0.5 if n == 0 else 1.0
    return weight * prefactor * radial


def evaluate_energy(
    config: InteractionConfig,
    phis: Sequence[float],
    *,
    threads: int = 1,
    events: Optional[EventSink] = None,
) -> EnergyResult:
    phis = np.asarray(phis, dtype=float)
    grid = config.thermal
    terms: list[FloatArray] = []
    partial = np.zeros(len(phis))
    small_run = 0
    converged = False
    threads = max(1, int(threads))

    def run(n: int) -> FloatArray:
        return matsubara_term(config, n, phis)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        n = 0
        while n < grid.max_terms and not converged:
            batch = range(n, min(n + threads, grid.max_terms))
            for index, term in zip(batch, pool.map(run, batch)):
                terms.append(term)
                partial = partial + term
                if events is not None:
                    events({"event": "matsubara_term", "n": index, "max_abs_term": float(np.max(np.abs(term)))})
                if index >= 1:
                    small = np.max(np.abs(term)) <= grid.rel_tol * np.max(np.abs(partial))
                    small_run = small_run + 1 if small else 0
                    if small_run >= CONSECUTIVE_SMALL_TERMS:
                        converged = True
                        break
            n = batch.stop

    if not converged:
        diagnostics = {
            "terms_used": len(terms),
            "last_term": terms[-1].tolist(),
            "partial_sum": partial.tolist(),
        }
        if not grid.allow_truncation:
            raise ConvergenceError(
                f"Matsubara sum not converged after {grid.max_terms} terms",
                diagnostics=diagnostics,
            )
        if events is not None:
            events({"event": "matsubara_truncated", **diagnostics})

    result = EnergyResult(phi=phis, energy=partial, terms=np.stack(terms), converged=converged)
    if events is not None:
        events(
            {
                "event": "energy_done",
                "terms_used": result.terms_used,
                "converged": converged,
                "separation_m": config.separation,
            }
        )
    return result


def energy_per_area(config: InteractionConfig, phi: float, *, threads: int = 1) -> float:
    return float(evaluate_energy(config, [phi], threads=threads).energy[0])


def phi_grid(points: int) -> FloatArray:
    return math.pi * np.arange(points) / points


def spectral_torque(energy: FloatArray) -> FloatArray:
    """-dE/dphi for samples of a pi-periodic energy on a uniform grid."""
    n = len(energy)
    coeffs = np.fft.rfft(energy)
    k = np.arange(len(coeffs))
    derivative = coeffs * (2j * k)
    if n % 2 == 0:
        derivative[-1] = 0.0
    return -np.fft.irfft(derivative, n=n)


def central_difference(energies: Sequence[float], h: float) -> float:
    """5-point torque from E at (phi-2h, phi-h, phi+h, phi+2h)."""
    em2, em1, ep1, ep2 = energies
    return -(em2 - 8.0 * em1 + 8.0 * ep1 - ep2) / (12.0 * h)


def central_difference_torque(
    config: InteractionConfig, phi: float, *, h: float = FD_STEP, threads: int = 1
) -> float:
    offsets = phi + h * np.array([-2.0, -1.0, 1.0, 2.0])
    return central_difference(evaluate_energy(config, offsets, threads=threads).energy, h)


def torque_curve(
    config: InteractionConfig,
    *,
    threads: int = 1,
    events: Optional[EventSink] = None,
    check_phi: float = math.pi / 3,
    check_tolerance: Optional[float] = CHECK_TOLERANCE,
) -> TorqueCurve:
    """Energy and spectral torque over [0, pi), cross-checked by a 5-point difference.

    Raises TorqueCheckError when the two torques at check_phi differ by more
    than check_tolerance of max|torque|; None turns the check off.
    """
    points = config.quadrature.phi_points
    grid = phi_grid(points)
    offsets = check_phi + FD_STEP * np.array([-2.0, -1.0, 1.0, 2.0])
    result = evaluate_energy(
        config, np.concatenate([grid, offsets]), threads=threads, events=events
    )
    energy = result.energy[:points]
    curve = TorqueCurve(
        phi_grid=grid,
        energy=energy,
        torque=spectral_torque(energy),
        separation=config.separation,
        check_phi=check_phi,
        check_central=central_difference(result.energy[points:], FD_STEP),
        terms_used=result.terms_used,
        converged=result.converged,
    )
    curve = replace(curve, check_spectral=curve.torque_at(check_phi))
    if events is not None:
        events(
            {
                "event": "torque_done",
                "separation_m": config.separation,
                "check_residual": curve.check_residual,
            }
        )
    flat = float(np.max(np.abs(curve.torque))) <= FLAT_TORQUE * float(np.max(np.abs(energy)))
    if check_tolerance is not None and not flat and curve.check_residual > check_tolerance:
        raise TorqueCheckError(
            f"spectral torque at phi = {check_phi:.6g} differs from the finite difference "
            f"by {curve.check_residual:.3e} of max|torque| (limit {check_tolerance:.1e}); "
            "raise phi_points"
        )
    return curve


def fourier_components(curve: TorqueCurve, M: int) -> FourierSpectrum:
    n = len(curve.torque)
    if M < 1 or 2 * M >= n:
        raise AliasingError(f"Fourier order {M} needs more than {2 * M} phi samples, have {n}")
    orders = np.arange(1, M + 1)
    angles = 2.0 * orders[:, None] * curve.phi_grid[None, :]
    a = (2.0 / n) * (np.cos(angles) @ curve.torque)
    b = (2.0 / n) * (np.sin(angles) @ curve.torque)
    return FourierSpectrum(orders=orders, a=a, b=b, separation=curve.separation)


def case_config(base: InteractionConfig, case: SweepCase) -> InteractionConfig:
    slab1 = base.slab1.model_copy(update={"d_tot": case.d_tot})
    slab2 = base.slab2.model_copy(update={"d_tot": case.d_tot})
    # model_copy skips validation; rebuild to re-check pitch < d_tot
    config = InteractionConfig.model_validate(
        {
            **base.model_dump(),
            "slab1": slab1.model_dump(),
            "slab2": slab2.model_dump(),
            "separation": case.separation,
        }
    )
    return config.with_pairing(case.pairing)


def sweep(
    base: InteractionConfig,
    cases: Sequence[SweepCase],
    *,
    orders: int,
    threads: int = 1,
    events: Optional[EventSink] = None,
) -> list[SweepResult]:
    def run(case: SweepCase) -> SweepResult:
        try:
            curve = torque_curve(case_config(base, case), events=events)
            return SweepResult(case=case, curve=curve, spectrum=fourier_components(curve, orders))
        except (HelixTorqueError, ValueError) as exc:
            if events is not None:
                events({"event": "sweep_case_failed", "label": case.label, "error": str(exc)})
            return SweepResult(case=case, error=f"{type(exc).__name__}: {exc}")

    if not cases:
        return []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        return list(pool.map(run, cases))
