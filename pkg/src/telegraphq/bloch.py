"""Coherent two-state dynamics in the Bloch picture.

The system Hamiltonian (hbar = 1) is

    H = (eps0/2) sigma_z + ((delta0 + xi)/2) sigma_x,

where xi = +-Delta is the frozen value of the dichotomous drive during one
residence segment.  The Bloch vector P = (<sx>, <sy>, <sz>) then precesses
rigidly, dP/dt = F P, with the skew-symmetric generator

    F = [[0,  eps0, 0],
         [-eps0, 0,  d],
         [0,   -d,   0]],        d = delta0 +- Delta.

The sign convention is pinned by the noise-free limit: for eps0 = 0 and
P(0) = (0, sin(phi), cos(phi)),

    P_y(t) = sin(d t + phi),   P_z(t) = cos(d t + phi).

F has eigenvalues {0, +i*Omega, -i*Omega} with Omega = hypot(eps0, d), so

    exp(F t) = sum_k R_k exp(i lambda_k t),

where R_0 = n n^T projects on the rotation axis n = -(d, 0, eps0)/Omega and
R_1 = conj(R_2) = ((I - n n^T) -+ i [n]_x)/2.  These projectors are exact
(complete, mutually orthogonal, idempotent); the exponential they assemble is
a proper rotation for every t.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "TssParams",
    "BlochVector",
    "SpectralPropagator",
    "total_couplings",
    "generator",
    "spectral_decomposition",
    "static_propagator",
]


@dataclass(frozen=True)
class TssParams:
    """Static two-state system parameters: bias eps0 and mean tunneling delta0."""

    epsilon0: float
    delta0: float

    def __post_init__(self):
        for name in ("epsilon0", "delta0"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class BlochVector:
    px: float
    py: float
    pz: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.px, self.py, self.pz)):
            raise ValueError("Bloch components must be finite")
        if self.norm > 1.0 + 1e-12:
            raise ValueError(f"Bloch vector norm {self.norm} exceeds 1")

    @property
    def norm(self) -> float:
        return math.sqrt(self.px**2 + self.py**2 + self.pz**2)

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py, self.pz], dtype=float)

    @classmethod
    def from_array(cls, a) -> "BlochVector":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0]), float(a[1]), float(a[2]))


@dataclass(frozen=True)
class SpectralPropagator:
    """Spectral data of one frozen-noise generator: exp(F t) = sum_k R_k e^{i lam_k t}.

    lambdas : (3,) real, ordered (0, +Omega, -Omega)
    projectors : (3, 3, 3) complex, R_k = projectors[k]
    """

    lambdas: np.ndarray
    projectors: np.ndarray

    def propagator(self, t):
        """exp(F t) for scalar or array t; returns real (..., 3, 3)."""
        t = np.asarray(t, dtype=float)
        phases = np.exp(1j * np.multiply.outer(t, self.lambdas))  # (..., 3)
        out = np.einsum("...k,kij->...ij", phases, self.projectors)
        # the conjugate pair makes the sum real up to roundoff
        return np.ascontiguousarray(out.real)


def total_couplings(tss: TssParams, amplitude: float) -> tuple[float, float]:
    """Total tunneling couplings (delta0 + Delta, delta0 - Delta) in the two noise states."""
    if amplitude < 0:
        raise ValueError("noise amplitude must be >= 0")
    return tss.delta0 + amplitude, tss.delta0 - amplitude


def generator(tss: TssParams, delta_tot: float) -> np.ndarray:
    """Bloch generator F for one frozen total coupling delta_tot."""
    e = tss.epsilon0
    return np.array([[0.0, e, 0.0], [-e, 0.0, delta_tot], [0.0, -delta_tot, 0.0]])


def spectral_decomposition(tss: TssParams, delta_tot: float) -> SpectralPropagator:
    """Eigenvalues and projectors of the frozen-noise generator.

    Parameters
    ----------
    tss : TssParams
    delta_tot : float
        Total coupling delta0 +- Delta during the segment.

    Returns
    -------
    SpectralPropagator
        lambdas = (0, Omega, -Omega); projectors R_0 = n n^T on the rotation
        axis, R_1 = conj(R_2) the circulating pair.  For Omega = 0 the
        decomposition degenerates to (identity, 0, 0).
    """
    e, d = tss.epsilon0, float(delta_tot)
    omega = math.hypot(e, d)
    if omega == 0.0:
        projectors = np.zeros((3, 3, 3), dtype=complex)
        projectors[0] = np.eye(3)
        return SpectralPropagator(np.zeros(3), projectors)
    n = np.array([-d, 0.0, -e]) / omega
    nn = np.outer(n, n)
    ncross = np.array(
        [[0.0, -n[2], n[1]], [n[2], 0.0, -n[0]], [-n[1], n[0], 0.0]]
    )
    r1 = 0.5 * ((np.eye(3) - nn) - 1j * ncross)
    projectors = np.stack([nn.astype(complex), r1, r1.conj()])
    return SpectralPropagator(np.array([0.0, omega, -omega]), projectors)


def static_propagator(tss: TssParams, delta_tot: float, t) -> np.ndarray:
    """exp(F t): rigid rotation of the Bloch sphere for scalar or array t."""
    return spectral_decomposition(tss, delta_tot).propagator(t)
