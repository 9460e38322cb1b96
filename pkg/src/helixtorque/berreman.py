"""4x4 transfer matrices of uniaxial layers at imaginary frequency.

Everything is real: at omega = i*zeta the Maxwell system matrix has purely
imaginary entries, so A = -iQ is real and every propagator exponential has a
real argument.  Field vectors are (E_x, E_y, H_x, H_y) in the frame whose x
axis is the in-plane wavevector, so layer orientation enters only through
psi = theta - eta.

A transfer matrix maps the fields at the back face of a layer onto the front
face (Psi(0) = T Psi(d)); products are therefore taken in physical order.
Mode columns are ordered (e+, e-, o+, o-); a "+" mode decays into the layer.

All functions broadcast over numpy arrays: scalars in, scalars out, and
arrays of any shape give stacks of matrices with two trailing axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import numpy.typing as npt

from helixtorque.errors import (
    DegeneracyError,
    DegenerateInputError,
    SingularDenominatorError,
)
from helixtorque.media import PhysicalConstants

FloatArray = npt.NDArray[np.float64]
ArrayLike = float | FloatArray

# the n = 0 term (zeta = 0) is evaluated at kappa = STATIC_LIMIT_RATIO * k_rho;
# every zeta > 0 uses zeta / c exactly
STATIC_LIMIT_RATIO = 1e-4
DEGENERACY_THRESHOLD = 1e-9
# growing (+) and decaying (-) mode columns in (e+, e-, o+, o-) order
INCIDENT_COLUMNS = [0, 2]
REFLECTED_COLUMNS = [1, 3]


@dataclass(frozen=True)
class WaveIndices:
    k_rho: ArrayLike
    eta: ArrayLike
    zeta: ArrayLike

    def __post_init__(self) -> None:
        k_rho = np.asarray(self.k_rho, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        if np.any(k_rho < 0) or np.any(zeta < 0):
            raise ValueError("k_rho and zeta must be non-negative")
        if not (np.all(np.isfinite(k_rho)) and np.all(np.isfinite(zeta))):
            raise ValueError("k_rho and zeta must be finite")
        object.__setattr__(self, "eta", np.mod(self.eta, 2.0 * math.pi))

    def kappa(self) -> FloatArray:
        """zeta/c in 1/m, or the static-limit stand-in where zeta = 0."""
        k_rho = np.asarray(self.k_rho, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        if np.any((zeta == 0) & (k_rho == 0)):
            raise DegenerateInputError("zeta = k_rho = 0 is a degenerate static mode")
        return np.where(zeta == 0.0, STATIC_LIMIT_RATIO * k_rho, zeta / PhysicalConstants.c)


@dataclass(frozen=True)
class LayerOptics:
    eps_x: float
    eps_y: float
    theta: ArrayLike

    def __post_init__(self) -> None:
        if self.eps_x < 1 or self.eps_y < 1:
            raise ValueError(f"permittivities must be >= 1, got {self.eps_x}, {self.eps_y}")

    @property
    def is_degenerate(self) -> bool:
        return abs(self.eps_x - self.eps_y) < DEGENERACY_THRESHOLD * self.eps_y


@dataclass(frozen=True)
class SystemMatrix:
    entries: FloatArray


@dataclass(frozen=True)
class ModeBasis:
    eigvals: tuple[FloatArray, FloatArray]
    S: FloatArray
    S_inv: FloatArray


@dataclass(frozen=True)
class TransferMatrix4:
    """Physical matrix = core * exp(log_scale)."""

    core: FloatArray
    log_scale: FloatArray

    def renormalized(self) -> TransferMatrix4:
        peak = np.max(np.abs(self.core), axis=(-2, -1))
        peak = np.where(peak > 0, peak, 1.0)
        return TransferMatrix4(
            core=self.core / peak[..., None, None],
            log_scale=self.log_scale + np.log(peak),
        )

    def then(self, other: TransferMatrix4) -> TransferMatrix4:
        """Compose with the next layer in physical order."""
        return TransferMatrix4(
            core=self.core @ other.core,
            log_scale=self.log_scale + other.log_scale,
        ).renormalized()

    def to_physical(self) -> FloatArray:
        return self.core * np.exp(self.log_scale)[..., None, None]

    @classmethod
    def identity(cls, shape: tuple[int, ...] = ()) -> TransferMatrix4:
        core = np.broadcast_to(np.eye(4), shape + (4, 4)).copy()
        return cls(core=core, log_scale=np.zeros(shape))


@dataclass(frozen=True)
class ReflectionMatrix:
    r_ss: ArrayLike
    r_sp: ArrayLike
    r_ps: ArrayLike
    r_pp: ArrayLike

    def as_matrix(self) -> FloatArray:
        """2x2 layout [[ss, sp], [ps, pp]] on the two trailing axes."""
        ss, sp, ps, pp = np.broadcast_arrays(self.r_ss, self.r_sp, self.r_ps, self.r_pp)
        return np.stack([np.stack([ss, sp], -1), np.stack([ps, pp], -1)], -2)

    def mirrored(self) -> ReflectionMatrix:
        """Conjugation by diag(-1, 1): the same layer mirrored across the plane of incidence."""
        return ReflectionMatrix(
            r_ss=self.r_ss, r_sp=-np.asarray(self.r_sp), r_ps=-np.asarray(self.r_ps), r_pp=self.r_pp
        )

    def max_abs_difference(self, other: ReflectionMatrix) -> float:
        return float(np.max(np.abs(self.as_matrix() - other.as_matrix())))


def _dielectric_components(layer: LayerOptics, wave: WaveIndices):
    psi = np.asarray(layer.theta, dtype=float) - np.asarray(wave.eta, dtype=float)
    cos, sin = np.cos(psi), np.sin(psi)
    eps_xx = layer.eps_x * cos**2 + layer.eps_y * sin**2
    eps_yy = layer.eps_x * sin**2 + layer.eps_y * cos**2
    eps_xy = (layer.eps_x - layer.eps_y) * sin * cos
    return eps_xx, eps_yy, eps_xy, cos, sin


def _blocks(layer: LayerOptics, wave: WaveIndices):
    """Upper-right (E <- H) and lower-left (H <- E) 2x2 blocks of A."""
    kappa = wave.kappa()
    k_rho = np.asarray(wave.k_rho, dtype=float)
    eps_xx, eps_yy, eps_xy, _, _ = _dielectric_components(layer, wave)
    kappa, k_rho, eps_xx, eps_yy, eps_xy = np.broadcast_arrays(
        kappa, k_rho, eps_xx, eps_yy, eps_xy
    )
    zero = np.zeros_like(kappa)
    alpha = kappa + k_rho**2 / (kappa * layer.eps_y)
    upper = np.stack(
        [np.stack([zero, -alpha], -1), np.stack([kappa, zero], -1)], -2
    )
    lower = np.stack(
        [
            np.stack([kappa * eps_xy, kappa * eps_yy + k_rho**2 / kappa], -1),
            np.stack([-kappa * eps_xx, -kappa * eps_xy], -1),
        ],
        -2,
    )
    return upper, lower


def build_system_matrix(layer: LayerOptics, wave: WaveIndices) -> SystemMatrix:
    upper, lower = _blocks(layer, wave)
    entries = np.zeros(upper.shape[:-2] + (4, 4))
    entries[..., 0:2, 2:4] = upper
    entries[..., 2:4, 0:2] = lower
    return SystemMatrix(entries=entries)


def mode_eigenvalues(layer: LayerOptics, wave: WaveIndices) -> tuple[FloatArray, FloatArray]:
    kappa = wave.kappa()
    k_rho = np.asarray(wave.k_rho, dtype=float)
    psi = np.asarray(layer.theta, dtype=float) - np.asarray(wave.eta, dtype=float)
    q_o = np.sqrt(layer.eps_y * kappa**2 + k_rho**2)
    q_e = np.sqrt(
        layer.eps_x * kappa**2
        + (layer.eps_x / layer.eps_y) * k_rho**2 * np.cos(psi) ** 2
        + k_rho**2 * np.sin(psi) ** 2
    )
    q_e, q_o = np.broadcast_arrays(q_e, q_o)
    return q_e, q_o


def _eigvec_2x2(P: FloatArray, lam: FloatArray) -> FloatArray:
    """Eigenvector of each 2x2 block of P for eigenvalue lam, best-conditioned form."""
    p11, p12 = P[..., 0, 0], P[..., 0, 1]
    p21, p22 = P[..., 1, 0], P[..., 1, 1]
    first = np.stack([p12, lam - p11], -1)
    second = np.stack([lam - p22, p21], -1)
    use_first = np.linalg.norm(first, axis=-1) >= np.linalg.norm(second, axis=-1)
    return np.where(use_first[..., None], first, second)


def _mode_columns(upper: FloatArray, lower: FloatArray, x: FloatArray, q: FloatArray):
    h = np.einsum("...ij,...j->...i", lower, x) / q[..., None]
    plus = np.concatenate([x, h], -1)
    minus = np.concatenate([x, -h], -1)
    norm = np.linalg.norm(plus, axis=-1, keepdims=True)
    return plus / norm, minus / norm


def mode_basis(layer: LayerOptics, wave: WaveIndices) -> ModeBasis:
    if layer.is_degenerate:
        raise DegeneracyError(
            f"eps_x={layer.eps_x} and eps_y={layer.eps_y} are degenerate; "
            "use the isotropic branch (iso_basis / oracle.isotropic_fresnel)"
        )
    upper, lower = _blocks(layer, wave)
    q_e, q_o = mode_eigenvalues(layer, wave)
    q_e = np.broadcast_to(q_e, upper.shape[:-2])
    q_o = np.broadcast_to(q_o, upper.shape[:-2])
    P = upper @ lower
    e_plus, e_minus = _mode_columns(upper, lower, _eigvec_2x2(P, q_e**2), q_e)
    o_plus, o_minus = _mode_columns(upper, lower, _eigvec_2x2(P, q_o**2), q_o)
    S = np.stack([e_plus, e_minus, o_plus, o_minus], -1)
    return ModeBasis(eigvals=(q_e, q_o), S=S, S_inv=np.linalg.inv(S))


def iso_basis(eps_gap: float, wave: WaveIndices) -> ModeBasis:
    """s/p eigenbasis of an isotropic medium, columns (s+, s-, p+, p-), unscaled."""
    if eps_gap < 1:
        raise ValueError(f"eps_gap must be >= 1, got {eps_gap}")
    kappa = wave.kappa()
    k_rho = np.asarray(wave.k_rho, dtype=float)
    kappa, k_rho = np.broadcast_arrays(kappa, k_rho)
    k3 = np.sqrt(eps_gap * kappa**2 + k_rho**2)
    zero, one = np.zeros_like(k3), np.ones_like(k3)
    s_h = k3 / kappa
    p_e = k3 / (eps_gap * kappa)
    S = np.stack(
        [
            np.stack([zero, zero, p_e, p_e], -1),
            np.stack([one, one, zero, zero], -1),
            np.stack([s_h, -s_h, zero, zero], -1),
            np.stack([zero, zero, -one, one], -1),
        ],
        -2,
    )
    return ModeBasis(eigvals=(k3, k3), S=S, S_inv=np.linalg.inv(S))


def gap_wavenumber(eps_gap: float, wave: WaveIndices) -> FloatArray:
    kappa = wave.kappa()
    return np.sqrt(eps_gap * kappa**2 + np.asarray(wave.k_rho, dtype=float) ** 2)


def propagate(
    basis: ModeBasis, exponents: Sequence[ArrayLike]
) -> TransferMatrix4:
    """S diag(exp(exponents)) S^-1 with the largest exponent moved into log_scale."""
    args = np.stack(np.broadcast_arrays(*exponents), -1)
    args = np.broadcast_to(args, basis.S.shape[:-2] + (4,))
    top = np.max(args, axis=-1)
    diag = np.exp(args - top[..., None])
    core = (basis.S * diag[..., None, :]) @ basis.S_inv
    return TransferMatrix4(core=core, log_scale=top).renormalized()


def layer_transfer(basis: ModeBasis, thickness: float) -> TransferMatrix4:
    if thickness <= 0:
        raise ValueError(f"thickness must be positive, got {thickness}")
    q_e, q_o = basis.eigvals
    return propagate(
        basis, (q_e * thickness, -q_e * thickness, q_o * thickness, -q_o * thickness)
    )


def stack_transfer(layers: Sequence[TransferMatrix4]) -> TransferMatrix4:
    if not layers:
        raise ValueError("stack_transfer needs at least one layer")
    total = layers[0]
    for layer in layers[1:]:
        total = total.then(layer)
    return total


def to_sp_basis(stack: TransferMatrix4, iso: ModeBasis) -> TransferMatrix4:
    return TransferMatrix4(core=iso.S_inv @ stack.core @ iso.S, log_scale=stack.log_scale)


def half_space_transfer(basis: ModeBasis, iso: ModeBasis) -> TransferMatrix4:
    """S_0^-1 S_1: a medium of effectively infinite thickness."""
    core = iso.S_inv @ basis.S
    return TransferMatrix4(core=core, log_scale=np.zeros(core.shape[:-2]))


def fresnel_from_columns(columns: FloatArray) -> ReflectionMatrix:
    """Fresnel ratios from the two incident columns (s, p) of an s/p-basis transfer matrix.

    Rows 0 and 2 carry the incident amplitudes, rows 1 and 3 the reflected ones.
    Any invertible recombination of the two columns gives the same result.
    """
    c = columns
    den = c[..., 0, 0] * c[..., 2, 1] - c[..., 0, 1] * c[..., 2, 0]
    scale = np.max(np.abs(c), axis=(-2, -1)) ** 2
    if np.any(np.abs(den) < 1e-300 * scale) or np.any(den == 0):
        raise SingularDenominatorError("Fresnel denominator M11*M33 - M13*M31 vanishes")
    return ReflectionMatrix(
        r_ss=(c[..., 1, 0] * c[..., 2, 1] - c[..., 1, 1] * c[..., 2, 0]) / den,
        r_sp=(c[..., 2, 1] * c[..., 3, 0] - c[..., 2, 0] * c[..., 3, 1]) / den,
        r_ps=(c[..., 0, 0] * c[..., 1, 1] - c[..., 0, 1] * c[..., 1, 0]) / den,
        r_pp=(c[..., 0, 0] * c[..., 3, 1] - c[..., 0, 1] * c[..., 3, 0]) / den,
    )


def fresnel_from_transfer(M: TransferMatrix4) -> ReflectionMatrix:
    return fresnel_from_columns(M.core[..., INCIDENT_COLUMNS])
