"""Dichotomous renewal (continuous-time random walk) noise.

The drive xi(t) hops between +Delta and -Delta; successive residence times
are i.i.d. draws from a residence-time density psi(t).  The process is taken
symmetric and stationary: both states carry probability 1/2 and the first
segment is drawn from the forward-recurrence density Phi(t)/<tau> with
Phi(t) = 1 - int_0^t psi.

Three kernel families are supported through their Laplace transforms psi(s):

  Exponential      psi(s) = 1/(1 + s tau)                (Markovian telegraph)
  Biexponential    psi(s) = th a1/(s+a1) + (1-th) a2/(s+a2)
  ManifestNM       psi(s) = 1/(1 + s tau g(s)),
                   g(s) = tanh((s td)^(a/2)) / (s td)^(a/2)

ManifestNM has a branch point at s = 0 (principal branch of the fractional
power); it is defined for Re(s) >= 0 only and its autocorrelation time
diverges for a < 1.

The stationary autocorrelation <xi(t) xi(0)>/Delta^2 has transform

    k(s) = 1/s - (2/<tau>) (1 - psi(s))^2 / (s^2 (1 - psi(s)^2)),

which reduces to 1/(s + 2/tau) for the exponential kernel.  The noise
non-Markovianity quantifier reported by :func:`noise_stats` is the ratio

    cv = 2 tau_corr / <tau>,   tau_corr = int_0^infty k(t) dt,

the excess of the correlation time over its Markovian value <tau>/2 (equal to
Var(tau)/<tau>^2 + ... = 1 exactly for the exponential kernel).  When k(t)
changes sign, tau_corr falls back to int |k| computed from the reconstructed
k(t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

__all__ = [
    "Exponential",
    "Biexponential",
    "ManifestNM",
    "RtdModel",
    "NoiseModel",
    "NoiseStats",
    "LaplaceDomainError",
    "rtd_laplace",
    "autocorr_laplace",
    "noise_stats",
    "sample_residence",
    "sample_first_stationary",
]


class LaplaceDomainError(ValueError):
    """Transform requested outside the kernel's half-plane of analyticity."""


def _tanh(z):
    if isinstance(z, (np.ndarray, complex, float, np.complexfloating, np.floating)):
        return np.tanh(z)
    import mpmath

    return mpmath.tanh(z)


@dataclass(frozen=True)
class Exponential:
    """Exponential residence times with mean tau."""

    tau: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")

    def laplace(self, s):
        return 1.0 / (1.0 + s * self.tau)

    def _w(self, s):
        # (1 - psi)/s without the subtraction; keeps k(s->0) cancellation-free
        return self.tau / (1.0 + s * self.tau)

    @property
    def mean_residence(self) -> float:
        return self.tau

    @property
    def second_moment(self) -> float:
        return 2.0 * self.tau**2


@dataclass(frozen=True)
class Biexponential:
    """Mixture of two exponential residence channels: weight theta on rate alpha1."""

    theta: float
    alpha1: float
    alpha2: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not (self.alpha1 > 0 and self.alpha2 > 0):
            raise ValueError("rates alpha1, alpha2 must be positive")

    def laplace(self, s):
        th, a1, a2 = self.theta, self.alpha1, self.alpha2
        return th * a1 / (s + a1) + (1.0 - th) * a2 / (s + a2)

    def _w(self, s):
        th, a1, a2 = self.theta, self.alpha1, self.alpha2
        return th / (s + a1) + (1.0 - th) / (s + a2)

    @property
    def mean_residence(self) -> float:
        return self.theta / self.alpha1 + (1.0 - self.theta) / self.alpha2

    @property
    def second_moment(self) -> float:
        return 2.0 * (self.theta / self.alpha1**2 + (1.0 - self.theta) / self.alpha2**2)


@dataclass(frozen=True)
class ManifestNM:
    """Heavy-tailed kernel psi(s) = 1/(1 + s tau g(s)) with manifestly divergent memory.

    g(s) = tanh(u)/u, u = (s td)^(alpha/2), principal branch; alpha in (0, 1].
    Mean residence time is tau for every alpha > 0; the correlation time
    diverges for alpha < 1.  td = 0 degenerates exactly to Exponential(tau).
    """

    tau: float
    td: float
    alpha: float

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        if self.td < 0:
            raise ValueError("td must be >= 0")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")

    def _g(self, s):
        """Memory factor tanh(u)/u, u = (s td)^(alpha/2); Re(s) >= 0 only."""
        if isinstance(s, np.ndarray):
            if np.any(np.real(s) < -1e-15):
                raise LaplaceDomainError("ManifestNM kernel requires Re(s) >= 0")
            u = (s * self.td) ** (self.alpha / 2.0)
            small = np.abs(u) < 1e-4
            u_safe = np.where(small, 1.0, u)
            return np.where(small, 1.0 - u * u / 3.0, np.tanh(u_safe) / u_safe)
        # scalar path, generic over complex / mpmath types
        if complex(s).real < -1e-15:
            raise LaplaceDomainError("ManifestNM kernel requires Re(s) >= 0")
        u = (s * self.td) ** (self.alpha / 2.0)
        if abs(u) < 1e-4:
            return 1.0 - u * u / 3.0
        return _tanh(u) / u

    def laplace(self, s):
        if self.td == 0.0:
            return 1.0 / (1.0 + s * self.tau)
        if not isinstance(s, np.ndarray) and s == 0:
            return 1.0
        return 1.0 / (1.0 + s * self.tau * self._g(s))

    def _w(self, s):
        tg = self.tau if self.td == 0.0 else self.tau * self._g(s)
        return tg / (1.0 + s * tg)

    @property
    def mean_residence(self) -> float:
        return self.tau


RtdModel = Union[Exponential, Biexponential, ManifestNM]


@dataclass(frozen=True)
class NoiseModel:
    """Symmetric dichotomous noise: amplitude Delta and residence-time kernel."""

    amplitude: float
    rtd: RtdModel

    def __post_init__(self):
        if not (self.amplitude >= 0 and math.isfinite(self.amplitude)):
            raise ValueError("amplitude must be >= 0 and finite")


@dataclass(frozen=True)
class NoiseStats:
    """Stationary noise characteristics.

    corr_time is math.inf when the correlation time diverges (ManifestNM with
    alpha < 1); cv is None in that case.  corr_cutoff records the truncation
    time whenever tau_corr had to be computed from int |k(t)| dt.
    """

    mean_residence: float
    corr_time: float
    cv: float | None
    kubo: float
    corr_cutoff: float | None = None

    @property
    def divergent(self) -> bool:
        return math.isinf(self.corr_time)


def rtd_laplace(rtd: RtdModel, s):
    """psi(s) for scalar or array s (ManifestNM: Re(s) >= 0 only)."""
    return rtd.laplace(s)


def autocorr_laplace(noise: NoiseModel, s):
    """Transform k(s) of the normalized autocorrelation of the symmetric process.

    Algebraically 1/s - (2/<tau>)(1-psi)/(s^2(1+psi)), but assembled from
    w = (1-psi)/s in each kernel's subtraction-free form so the s->0 limit
    (the correlation time) stays accurate near the 0/0 point.
    """
    rtd = noise.rtd
    psi = rtd.laplace(s)
    w = rtd._w(s)
    m = rtd.mean_residence
    return (m * (1.0 + psi) - 2.0 * w) / (m * s * (1.0 + psi))


def _corr_time_limit(noise: NoiseModel) -> float:
    """tau_corr = lim_{s->0} k(s) by Richardson extrapolation in s."""
    h = 1e-6 / noise.rtd.mean_residence
    k1 = complex(autocorr_laplace(noise, h)).real
    k2 = complex(autocorr_laplace(noise, h / 2)).real
    return 2.0 * k2 - k1


def _autocorr_min(noise: NoiseModel, t_probe: np.ndarray) -> float:
    """Smallest value of the reconstructed k(t) on the probe grid."""
    from .laplace import IltConfig, ilt

    res = ilt(lambda s: autocorr_laplace(noise, s), t_probe, IltConfig(method="euler"), escalate=False)
    return float(np.min(res.values))


def _abs_corr_integral(noise: NoiseModel, rel_tol: float = 1e-4):
    """int_0^T |k(t)| dt with T set by the 1e-6 * k(0) envelope; returns (value, T)."""
    from .laplace import IltConfig, ilt

    cfg = IltConfig(method="euler")
    m = noise.rtd.mean_residence
    fn = lambda s: autocorr_laplace(noise, s)

    T = 20.0 * m
    while True:
        probe = np.linspace(0.75 * T, T, 24)
        tail = np.max(np.abs(ilt(fn, probe, cfg, escalate=False).values))
        if tail < 1e-6 or T > 1e4 * m:
            break
        T *= 2.0
    n = 512
    prev = None
    while True:
        ts = np.linspace(0.0, T, n + 1)
        vals = np.abs(ilt(fn, ts[1:], cfg, escalate=False).values)
        vals = np.concatenate([[1.0], vals])  # k(0) = 1 by normalization
        h = T / n
        total = (h / 3.0) * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-1:2].sum())
        if prev is not None and abs(total - prev) <= rel_tol * abs(total):
            return total, T
        if n >= 2**16:
            return total, T
        prev, n = total, 2 * n


def noise_stats(noise: NoiseModel, *, force_abs_integration: bool = False) -> NoiseStats:
    """Mean residence time, correlation time, cv ratio and Kubo number.

    The correlation time is int k(t) dt, evaluated in closed form where the
    kernel allows it and by the s->0 limit of k(s) otherwise; if a positivity
    probe of the reconstructed k(t) fails (or force_abs_integration is set),
    it is replaced by the adaptive integral of |k(t)| and the truncation time
    is reported in corr_cutoff.
    """
    rtd = noise.rtd
    m = rtd.mean_residence
    kubo = noise.amplitude * m

    if isinstance(rtd, ManifestNM) and rtd.td > 0.0:
        if rtd.alpha < 1.0:
            return NoiseStats(m, math.inf, None, kubo)
        corr = _corr_time_limit(noise)
        needs_probe = True
    elif isinstance(rtd, Biexponential):
        corr = rtd.second_moment / (2.0 * m) - m / 2.0
        needs_probe = True
    else:  # Exponential (or ManifestNM with td = 0): k(t) = e^{-2t/tau} > 0
        corr = m / 2.0
        needs_probe = False

    cutoff = None
    if force_abs_integration or (
        needs_probe and _autocorr_min(noise, m * np.geomspace(1e-3, 50.0, 96)) < -1e-6
    ):
        corr, cutoff = _abs_corr_integral(noise)
    return NoiseStats(m, corr, 2.0 * corr / m, kubo, corr_cutoff=cutoff)


def sample_residence(rtd: RtdModel, rng: np.random.Generator, size=None):
    """Draw residence times from psi(t) (Exponential and Biexponential only)."""
    if isinstance(rtd, Exponential):
        return rng.exponential(rtd.tau, size)
    if isinstance(rtd, Biexponential):
        scale = np.where(rng.random(size) < rtd.theta, 1.0 / rtd.alpha1, 1.0 / rtd.alpha2)
        return rng.exponential(scale)
    raise NotImplementedError(
        "ManifestNM is defined through its transform only and has no exact sampler"
    )


def sample_first_stationary(rtd: RtdModel, rng: np.random.Generator, size=None):
    """Draw the forward-recurrence (first stationary segment) time Phi(t)/<tau>."""
    if isinstance(rtd, Exponential):
        return rng.exponential(rtd.tau, size)
    if isinstance(rtd, Biexponential):
        w1 = (rtd.theta / rtd.alpha1) / rtd.mean_residence
        scale = np.where(rng.random(size) < w1, 1.0 / rtd.alpha1, 1.0 / rtd.alpha2)
        return rng.exponential(scale)
    raise NotImplementedError(
        "ManifestNM is defined through its transform only and has no exact sampler"
    )
