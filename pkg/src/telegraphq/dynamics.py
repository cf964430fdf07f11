"""Time-domain Bloch-vector evolution.

Three routes to P(t), agreeing pairwise on their overlaps:

* closed forms for the two analytically solvable corners (Markovian
  two-state noise at zero bias; the frozen-disorder limit of the
  manifestly non-Markovian family),
* the general route: numerical inversion of the averaged propagator's
  Laplace transform, and
* a stationary renewal Monte Carlo ensemble (the brute-force oracle).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bloch import BlochVector, TssParams
from .laplace import IltConfig, ilt
from .mc_kernels import mc_average
from .noise import NoiseModel
from .propagators import propagator_fn
from .series import TimeSeries

__all__ = [
    "McConfig",
    "evolve_markovian_closed",
    "evolve_alpha0_closed",
    "evolve_laplace",
    "evolve_monte_carlo",
]


@dataclass(frozen=True)
class McConfig:
    """Ensemble size, stream seed and output grid for the Monte Carlo route."""

    n_traj: int = 10_000
    seed: int = 0
    t_max: float = 50.0
    dt_out: float = 0.1
    backend: str = "auto"

    def __post_init__(self):
        if self.n_traj < 100:
            raise ValueError("n_traj must be at least 100")
        if not (self.t_max > 0 and self.dt_out > 0 and self.dt_out <= self.t_max):
            raise ValueError("need 0 < dt_out <= t_max")

    def grid(self) -> np.ndarray:
        n = int(round(self.t_max / self.dt_out))
        return np.arange(n + 1) * self.dt_out


def _markov_decay(ts, tau, delta):
    # e^{-t/tau}[cosh(om t) + sinh(om t)/(om tau)], om^2 = 1/tau^2 - delta^2,
    # continued to imaginary om in the underdamped regime.  Overdamped branch
    # is assembled from its two (strictly decaying) exponentials so cosh never
    # overflows at large t.
    t = np.asarray(ts, dtype=float)
    om2 = 1.0 / (tau * tau) - delta * delta
    if om2 == 0.0:
        return np.exp(-t / tau) * (1.0 + t / tau)
    if om2 > 0.0:
        om = np.sqrt(om2)
        ap = 0.5 * (1.0 + 1.0 / (om * tau))
        am = 0.5 * (1.0 - 1.0 / (om * tau))
        return ap * np.exp((om - 1.0 / tau) * t) + am * np.exp(-(om + 1.0 / tau) * t)
    om = np.sqrt(-om2)
    return np.exp(-t / tau) * (np.cos(om * t) + np.sin(om * t) / (om * tau))


def evolve_markovian_closed(delta0, delta, tau, phi, ts) -> TimeSeries:
    """(P_y, P_z) for exponential residences at zero bias, in closed form.

    P_y = S(t) sin(delta0*t + phi), P_z = S(t) cos(delta0*t + phi) with the
    overdamped/underdamped decay body S(t).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    t = np.asarray(ts, dtype=float)
    S = _markov_decay(t, tau, delta)
    ph = delta0 * t + phi
    values = np.stack([S * np.sin(ph), S * np.cos(ph)], axis=-1)
    return TimeSeries(t, values, meta={"components": ("Py", "Pz"), "method": "closed"})


_R_TANH1 = float(np.tanh(1.0))


def evolve_alpha0_closed(delta, tau, ts) -> TimeSeries:
    """P_z in the frozen-disorder limit: a persistent oscillation of relative
    weight 1 - tanh(1) riding on a Markovian-shaped decay with effective
    residence time tau*tanh(1).  Valid for delta0 = 0, eps0 = 0."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    t = np.asarray(ts, dtype=float)
    pz = (1.0 - _R_TANH1) * np.cos(delta * t) + _R_TANH1 * _markov_decay(
        t, tau * _R_TANH1, delta
    )
    return TimeSeries(t, pz, meta={"components": ("Pz",), "method": "closed"})


def evolve_laplace(
    tss: TssParams,
    noise: NoiseModel,
    p0: BlochVector,
    ts,
    cfg: IltConfig | None = None,
) -> TimeSeries:
    """P(t) by numerical inversion of the averaged propagator applied to p0.

    Error estimates come through from the inversion; non-convergent points
    surface as IltConvergenceError carrying the partial series.
    """
    if not isinstance(p0, BlochVector):
        p0 = BlochVector.from_array(np.asarray(p0, dtype=float))
    pv = p0.as_array()
    fn = propagator_fn(tss, noise)

    def fvec(s):
        return fn(s) @ pv

    out = ilt(fvec, ts, cfg, branch_limited=fn.branch_limited, osc_bound=fn.osc_bound)
    out.meta["components"] = ("Px", "Py", "Pz")
    return out


def evolve_monte_carlo(
    tss: TssParams,
    noise: NoiseModel,
    p0: BlochVector,
    cfg: McConfig,
) -> TimeSeries:
    """Stationary-ensemble mean Bloch trajectory with per-point standard errors.

    Initial noise state is ±amplitude with probability 1/2 and the first
    residence is drawn from the forward-recurrence density, so the sampled
    process is the stationary one the averaged propagator describes.
    """
    if not isinstance(p0, BlochVector):
        p0 = BlochVector.from_array(np.asarray(p0, dtype=float))
    ts = cfg.grid()
    mean, stderr, used = mc_average(
        tss, noise, p0.as_array(), ts, cfg.n_traj, cfg.seed, backend=cfg.backend
    )
    return TimeSeries(
        ts,
        mean,
        err=stderr,
        meta={
            "components": ("Px", "Py", "Pz"),
            "method": "monte-carlo",
            "backend": used,
            "n_traj": cfg.n_traj,
        },
    )
