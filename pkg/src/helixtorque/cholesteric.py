"""Spiral-staircase model of a finite cholesteric slab.

The extraordinary eigenvalue is averaged over the helix turned inside the slab,
the average is inverted back to an orientation, and the slab is then treated
as one uniform uniaxial layer whose optic axis sits at that averaged
orientation relative to the front face.  The slab reflection is built from
decaying exponentials only; past X_SWITCH the echo from the back face is
dropped and the slab is a half space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import quad

from helixtorque.berreman import (
    INCIDENT_COLUMNS,
    REFLECTED_COLUMNS,
    ArrayLike,
    FloatArray,
    LayerOptics,
    ModeBasis,
    ReflectionMatrix,
    WaveIndices,
    fresnel_from_columns,
    half_space_transfer,
    iso_basis,
    mode_basis,
    mode_eigenvalues,
)
from helixtorque.errors import DegeneracyError, InversionDomainError
from helixtorque.media import DielectricModel, eval_permittivity

X_SWITCH = 300.0
ARCCOS_SLACK = 1e-9
QUAD_REL_TOL = 1e-12
# k_rho below this fraction of kappa makes q_e independent of the angle.
SMALL_K_RHO = 1e-12

Branch = Literal["auto", "finite", "semi_infinite"]


class Handedness(str, Enum):
    LEFT = "left"
    RIGHT = "right"

    @property
    def sign(self) -> int:
        return 1 if self is Handedness.RIGHT else -1

    def flipped(self) -> Handedness:
        return Handedness.LEFT if self is Handedness.RIGHT else Handedness.RIGHT


class Direction(str, Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


class CholestericSlab(BaseModel):
    model_config = ConfigDict(frozen=True)

    d_tot: float = Field(gt=0.0)
    pitch: float = Field(gt=0.0)
    handedness: Handedness = Handedness.RIGHT
    theta_front: float = 0.0
    model: DielectricModel

    @model_validator(mode="after")
    def _pitch_fits(self) -> CholestericSlab:
        if not self.pitch < self.d_tot:
            raise ValueError(
                f"pitch ({self.pitch} m) must be smaller than d_tot ({self.d_tot} m)"
            )
        return self

    @property
    def turn(self) -> float:
        """Optic-axis rotation accumulated across the slab (rad)."""
        return self.d_tot * math.pi / self.pitch

    def flipped(self) -> CholestericSlab:
        return self.model_copy(update={"handedness": self.handedness.flipped()})

    def rotated(self, angle: float) -> CholestericSlab:
        return self.model_copy(update={"theta_front": self.theta_front + angle})


@dataclass(frozen=True)
class AveragedMode:
    q_int: FloatArray
    theta_avg: FloatArray
    q_e_avg: FloatArray
    q_o: FloatArray
    # extraordinary eigenvalue of the averaged layer at its placed optic axis
    q_e_axis: FloatArray


@dataclass(frozen=True)
class SlabTransfer:
    # (..., 4, 2) incident columns of the s/p-basis transfer matrix, up to a right factor
    columns: FloatArray
    semi_infinite: np.ndarray


def _sign_of(handedness: Handedness | int) -> int:
    if isinstance(handedness, Handedness):
        return handedness.sign
    return 1 if handedness >= 0 else -1


def helix_q_e(theta: ArrayLike, kappa: ArrayLike, k_rho: ArrayLike, eps_x: float, eps_y: float):
    return np.sqrt(
        eps_x * np.asarray(kappa) ** 2
        + (eps_x / eps_y) * np.asarray(k_rho) ** 2 * np.cos(theta) ** 2
        + np.asarray(k_rho) ** 2 * np.sin(theta) ** 2
    )


@lru_cache(maxsize=65536)
def _mean_q_e(kappa: float, k_rho: float, eps_x: float, eps_y: float, turn: float) -> float:
    if turn == 0.0:
        return float(helix_q_e(0.0, kappa, k_rho, eps_x, eps_y))

    def integrand(t: float) -> float:
        return float(helix_q_e(t, kappa, k_rho, eps_x, eps_y))

    # integrand has period pi
    full, rest = divmod(turn, math.pi)
    total = 0.0
    if full:
        period, _ = quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=QUAD_REL_TOL, limit=200)
        total += full * period
    if rest > 0.0:
        part, _ = quad(integrand, 0.0, rest, epsabs=0.0, epsrel=QUAD_REL_TOL, limit=200)
        total += part
    return total / turn


def mean_q_e(wave: WaveIndices, eps: tuple[float, float], turn: float) -> FloatArray:
    kappa, k_rho = np.broadcast_arrays(wave.kappa(), np.asarray(wave.k_rho, dtype=float))
    eps_x, eps_y = float(eps[0]), float(eps[1])
    flat = [
        _mean_q_e(float(kap), float(kr), eps_x, eps_y, float(turn))
        for kap, kr in zip(kappa.ravel(), k_rho.ravel())
    ]
    return np.asarray(flat, dtype=float).reshape(kappa.shape)


def average_eigenvalue(
    slab: CholestericSlab, wave: WaveIndices, eps: tuple[float, float]
) -> FloatArray:
    return mean_q_e(wave, eps, slab.turn)


def average_theta(
    q_int: ArrayLike,
    wave: WaveIndices,
    eps: tuple[float, float],
    handedness: Handedness | int,
    direction: Direction = Direction.FORWARD,
) -> FloatArray:
    eps_x, eps_y = eps
    if abs(eps_x - eps_y) == 0.0:
        raise DegeneracyError("averaged orientation is undefined for an isotropic medium")
    kappa = wave.kappa()
    k_rho = np.asarray(wave.k_rho, dtype=float)
    kappa, k_rho, q_int = np.broadcast_arrays(kappa, k_rho, np.asarray(q_int, dtype=float))

    flat = k_rho <= SMALL_K_RHO * kappa
    safe_k = np.where(flat, 1.0, k_rho)
    cos_sq = (safe_k**2 + eps_x * kappa**2 - q_int**2) / (safe_k**2 * (1.0 - eps_x / eps_y))
    cos_sq = np.where(flat, 1.0, cos_sq)
    bad = (cos_sq < -ARCCOS_SLACK) | (cos_sq > 1.0 + ARCCOS_SLACK)
    if np.any(bad):
        worst = float(np.max(np.abs(np.where(bad, cos_sq, 0.0))))
        raise InversionDomainError(
            f"arccos argument squared {worst!r} lies outside [0, 1]; q_int is inconsistent"
        )
    inner = 1.0 if Direction(direction) is Direction.FORWARD else -1.0
    argument = np.clip(inner * np.sqrt(np.clip(cos_sq, 0.0, 1.0)), -1.0, 1.0)
    theta = _sign_of(handedness) * np.arccos(argument)
    return np.where(flat, 0.0, theta)


def averaged_mode(
    model: DielectricModel,
    turn: float,
    sense: int,
    theta_front: float,
    wave: WaveIndices,
    eps: tuple[float, float] | None = None,
) -> AveragedMode:
    eps = eps if eps is not None else eval_permittivity(model, float(wave.zeta))
    eps_x, eps_y = eps
    q_int = mean_q_e(wave, eps, turn)
    if turn == 0.0:
        theta_avg = np.zeros_like(q_int)
    else:
        theta_avg = average_theta(q_int, wave, eps, sense)
    axis = LayerOptics(eps_x=eps_x, eps_y=eps_y, theta=theta_front + theta_avg)
    q_e_axis, q_o = mode_eigenvalues(axis, wave)
    return AveragedMode(
        q_int=q_int,
        theta_avg=theta_avg,
        q_e_avg=helix_q_e(theta_avg, wave.kappa(), wave.k_rho, eps_x, eps_y),
        q_o=q_o,
        q_e_axis=q_e_axis,
    )


def averaged_propagator(mode: AveragedMode, d_tot: float) -> FloatArray:
    """Exponent arguments of the averaged propagator; exponentiation is left to the caller."""
    if d_tot <= 0:
        raise ValueError(f"d_tot must be positive, got {d_tot}")
    q_e, q_o = np.broadcast_arrays(mode.q_e_axis, mode.q_o)
    return np.stack([q_e * d_tot, -q_e * d_tot, q_o * d_tot, -q_o * d_tot], -1)


def slab_transfer_regularized(
    exponents: FloatArray,
    basis: ModeBasis,
    iso: ModeBasis,
    branch: Branch = "auto",
) -> SlabTransfer:
    """Incident columns of M = S0^-1 S1 P S1^-1 S0, scaled so no exponential grows.

    With C = S0^-1 S1 and B = S1^-1 S0, the back face fixes the decaying
    amplitudes as R_back = B_-+ B_++^-1, and the incident columns of M, right
    multiplied by B_++^-1 e^{-P+}, are C_+ + C_- e^{-P+} R_back e^{-P+}.  Only
    e^{-q d} appears, so the semi-infinite branch is the same expression with
    the echo term dropped.
    """
    largest = np.max(exponents, axis=-1)
    if branch == "auto":
        semi = largest > X_SWITCH
    else:
        semi = np.full(largest.shape, branch == "semi_infinite")
    C = half_space_transfer(basis, iso).core
    grown = C[..., INCIDENT_COLUMNS]
    if np.all(semi):
        return SlabTransfer(columns=grown, semi_infinite=semi)
    B = basis.S_inv @ iso.S
    B_in = B[..., INCIDENT_COLUMNS, :][..., INCIDENT_COLUMNS]
    B_back = B[..., REFLECTED_COLUMNS, :][..., INCIDENT_COLUMNS]
    r_back = np.swapaxes(np.linalg.solve(np.swapaxes(B_in, -1, -2), np.swapaxes(B_back, -1, -2)), -1, -2)
    decay = np.where(semi[..., None], 0.0, np.exp(-exponents[..., INCIDENT_COLUMNS]))
    echo = r_back * decay[..., :, None] * decay[..., None, :]
    columns = grown + C[..., REFLECTED_COLUMNS] @ echo
    return SlabTransfer(columns=columns, semi_infinite=semi)


def uniaxial_reflection(
    model: DielectricModel,
    d_tot: float,
    turn: float,
    sense: int,
    theta_front: float,
    wave: WaveIndices,
    eps_gap: float,
    branch: Branch = "auto",
) -> ReflectionMatrix:
    """Reflection seen from the gap of a slab whose axis turns by `turn` with sense `sense`."""
    if np.ndim(wave.zeta) != 0:
        raise ValueError("slab reflection is evaluated at one imaginary frequency at a time")
    eps_x, eps_y = eval_permittivity(model, float(wave.zeta))
    iso = iso_basis(eps_gap, wave)
    layer = LayerOptics(eps_x=eps_x, eps_y=eps_y, theta=theta_front)
    if layer.is_degenerate:
        basis = iso_basis(eps_y, wave)
        k_m = basis.eigvals[0]
        exponents = np.stack([k_m * d_tot, -k_m * d_tot, k_m * d_tot, -k_m * d_tot], -1)
    else:
        mode = averaged_mode(model, turn, sense, theta_front, wave, (eps_x, eps_y))
        axis = LayerOptics(eps_x=eps_x, eps_y=eps_y, theta=theta_front + mode.theta_avg)
        basis = mode_basis(axis, wave)
        exponents = averaged_propagator(mode, d_tot)
    exponents = np.broadcast_to(exponents, basis.S.shape[:-2] + (4,))
    slab = slab_transfer_regularized(exponents, basis, iso, branch)
    return fresnel_from_columns(slab.columns)


def slab_reflection(
    slab: CholestericSlab,
    wave: WaveIndices,
    eps_gap: float = 1.0,
    *,
    sense: int | None = None,
    branch: Branch = "auto",
) -> ReflectionMatrix:
    """Full staircase pipeline for a slab facing the gap.

    `sense` is the rotation sense of the helix going into the slab from the
    gap; it defaults to the slab's handedness (slab beyond the gap along +z).
    """
    return uniaxial_reflection(
        slab.model,
        slab.d_tot,
        slab.turn,
        slab.handedness.sign if sense is None else sense,
        slab.theta_front,
        wave,
        eps_gap,
        branch,
    )
