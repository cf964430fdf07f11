"""Closed forms, the ILT evolution path, and the Monte Carlo oracle.

The oracle chain: closed forms pin the ILT route on solvable corners, the
Monte Carlo ensemble pins it where nothing is solvable, and the two MC
backends must sample identical trajectories.
"""
import numpy as np
import pytest

from telegraphq.bloch import BlochVector, TssParams, static_propagator
from telegraphq.dynamics import (
    McConfig,
    evolve_alpha0_closed,
    evolve_laplace,
    evolve_markovian_closed,
    evolve_monte_carlo,
)
from telegraphq.mc_kernels import numba_available
from telegraphq.noise import Biexponential, Exponential, ManifestNM, NoiseModel

Z0 = BlochVector.from_array(np.array([0.0, 0.0, 1.0]))


# ---------------------------------------------------------------------------
# closed forms


@pytest.mark.parametrize("phi", [0.0, 0.4, -1.1, np.pi / 2])
def test_markovian_closed_initial_values(phi):
    out = evolve_markovian_closed(0.7, 0.3, 2.0, phi, np.array([0.0, 1.0]))
    np.testing.assert_allclose(out.values[0], [np.sin(phi), np.cos(phi)], atol=1e-15)


def test_markovian_closed_delta_zero_is_undamped():
    ts = np.linspace(0.0, 40.0, 300)
    out = evolve_markovian_closed(1.3, 0.0, 2.0, 0.2, ts)
    np.testing.assert_allclose(
        out.values, np.stack([np.sin(1.3 * ts + 0.2), np.cos(1.3 * ts + 0.2)], -1), atol=1e-12
    )


@pytest.mark.parametrize("k", [1.5, 2.0, 5.0])
def test_markovian_closed_underdamped_extrema(k):
    # |S| at t_n = n*pi/om_tilde equals exp(-n*pi/(om_tilde*tau))
    tau = 2.0
    delta = k / tau
    om_t = np.sqrt(delta**2 - 1.0 / tau**2)
    tn = np.arange(1, 6) * np.pi / om_t
    out = evolve_markovian_closed(0.0, delta, tau, 0.0, tn)
    np.testing.assert_allclose(
        np.abs(out.values[:, 1]), np.exp(-np.arange(1, 6) * np.pi / (om_t * tau)), rtol=1e-12
    )


def test_alpha0_closed_initial_and_late_amplitude():
    tau, delta = 2.0, 1.0
    t0 = evolve_alpha0_closed(delta, tau, np.array([0.0]))
    assert abs(t0.values[0] - 1.0) < 1e-14

    # decaying part is dead by t=200*tau; what survives oscillates at
    # frequency delta with amplitude 2/(1+e^2)
    ts = np.linspace(400.0, 400.0 + 6 * np.pi / delta, 4001)
    out = evolve_alpha0_closed(delta, tau, ts)
    amp = np.max(np.abs(out.values))
    assert abs(amp - 2.0 / (1.0 + np.e**2)) < 1e-6
    # crossing spacing = half period
    sgn = np.sign(out.values)
    crossings = ts[:-1][sgn[1:] != sgn[:-1]]
    np.testing.assert_allclose(np.diff(crossings), np.pi / delta, atol=1e-2)


@pytest.mark.parametrize("tau,delta", [(0.5, 2.0), (5.0, 0.3)])
def test_alpha0_late_amplitude_insensitive_to_parameters(tau, delta):
    ts = np.linspace(500.0 * max(tau, 1.0), 500.0 * max(tau, 1.0) + 8 * np.pi / delta, 4001)
    out = evolve_alpha0_closed(delta, tau, ts)
    assert abs(np.max(np.abs(out.values)) - 2.0 / (1.0 + np.e**2)) < 1e-6


# ---------------------------------------------------------------------------
# ILT route vs closed forms


@pytest.mark.parametrize(
    "tau,delta,delta0", [(2.0, 1.0, 0.0), (0.5, 1.0, 0.0), (2.0, 1.0, 1.0), (1.0, 1.0, 0.5)]
)
def test_laplace_matches_markovian_closed(tau, delta, delta0):
    ts = np.linspace(0.0, 30.0, 121)
    lap = evolve_laplace(TssParams(0.0, delta0), NoiseModel(delta, Exponential(tau)), Z0, ts)
    closed = evolve_markovian_closed(delta0, delta, tau, 0.0, ts)
    assert np.abs(lap.values[:, 1:] - closed.values).max() < 1e-6


def test_laplace_matches_alpha0_closed():
    tau, delta = 2.0, 1.0
    ts = np.linspace(0.0, 50.0, 201)
    noise = NoiseModel(delta, ManifestNM(tau, 1.0, 1e-8))
    lap = evolve_laplace(TssParams(0.0, 0.0), noise, Z0, ts)
    closed = evolve_alpha0_closed(delta, tau, ts)
    assert np.abs(lap.values[:, 2] - closed.values).max() < 1e-5


def test_laplace_initial_value_is_p0():
    p0 = BlochVector.from_array(np.array([0.3, 0.1, 0.9]))
    out = evolve_laplace(
        TssParams(0.5, 1.0), NoiseModel(0.8, Biexponential(0.3, 0.2, 1.5)), p0,
        np.array([0.0, 1.0, 2.0]),
    )
    np.testing.assert_allclose(out.values[0], p0.as_array(), atol=1e-6)


def test_laplace_px_conserved_at_zero_bias():
    p0 = BlochVector.from_array(np.array([0.3, 0.1, 0.9]))
    ts = np.linspace(0.0, 20.0, 81)
    out = evolve_laplace(TssParams(0.0, 0.7), NoiseModel(0.5, Biexponential(0.4, 0.1, 1.0)), p0, ts)
    assert np.abs(out.values[:, 0] - 0.3).max() < 1e-8


# ---------------------------------------------------------------------------
# Monte Carlo oracle


def test_mc_matches_markovian_closed_3sigma():
    cfg = McConfig(n_traj=20_000, seed=42, t_max=50.0, dt_out=0.5)
    mc = evolve_monte_carlo(TssParams(0.0, 0.0), NoiseModel(1.0, Exponential(2.0)), Z0, cfg)
    closed = evolve_markovian_closed(0.0, 1.0, 2.0, 0.0, mc.ts)
    dev = np.abs(mc.values[:, 2] - closed.values[:, 1])
    assert np.all(dev <= 3.0 * np.maximum(mc.err[:, 2], 1e-4))


def test_mc_matches_laplace_biexp_biased():
    # no closed form exists here: ILT route vs the trajectory ensemble
    tss = TssParams(1.0, 1.0)
    noise = NoiseModel(0.25, Biexponential(0.5, 1.0 / 20.0, 1.0))
    cfg = McConfig(n_traj=20_000, seed=7, t_max=25.0, dt_out=0.5)
    mc = evolve_monte_carlo(tss, noise, Z0, cfg)
    lap = evolve_laplace(tss, noise, Z0, mc.ts)
    sigma = np.sqrt(mc.err**2 + lap.err**2) + 1e-4
    assert np.all(np.abs(mc.values - lap.values) <= 3.0 * sigma)


def test_mc_delta_zero_is_exact_rotation_with_zero_variance():
    tss = TssParams(1.0, 1.0)
    cfg = McConfig(n_traj=200, seed=3, t_max=5.0, dt_out=0.25)
    mc = evolve_monte_carlo(tss, NoiseModel(0.0, Exponential(1.0)), Z0, cfg)
    # amplitude 0: both noise states drive with the full coupling delta0
    ref = np.stack([static_propagator(tss, 1.0, t) @ Z0.as_array() for t in mc.ts])
    np.testing.assert_allclose(mc.values, ref, atol=1e-12)
    # variance is zero up to the sum/sumsq cancellation floor ~ sqrt(eps)/sqrt(n)
    assert mc.err.max() < 1e-7


def test_mc_symmetric_noise_has_zero_mean_py():
    # mirror symmetry xi -> -xi maps Py -> -Py; stationary sampling must
    # average it away at every grid time
    cfg = McConfig(n_traj=40_000, seed=11, t_max=20.0, dt_out=0.5)
    mc = evolve_monte_carlo(TssParams(0.0, 0.0), NoiseModel(0.8, Exponential(1.5)), Z0, cfg)
    assert np.all(np.abs(mc.values[:, 1]) <= 4.0 * np.maximum(mc.err[:, 1], 1e-4))


def test_mc_px_conserved_at_zero_bias():
    p0 = BlochVector.from_array(np.array([0.3, 0.1, 0.9]))
    cfg = McConfig(n_traj=500, seed=5, t_max=10.0, dt_out=0.5)
    mc = evolve_monte_carlo(TssParams(0.0, 1.0), NoiseModel(0.6, Exponential(1.0)), p0, cfg)
    assert np.abs(mc.values[:, 0] - 0.3).max() < 1e-12


@pytest.mark.skipif(not numba_available(), reason="numba backend unavailable")
@pytest.mark.parametrize(
    "noise",
    [NoiseModel(1.0, Exponential(2.0)), NoiseModel(0.25, Biexponential(0.5, 1.0 / 20.0, 1.0))],
    ids=["exp", "biexp"],
)
def test_mc_backends_share_trajectory_streams(noise):
    tss = TssParams(0.7, 1.0)
    base = dict(n_traj=3_000, seed=123, t_max=10.0, dt_out=0.25)
    a = evolve_monte_carlo(tss, noise, Z0, McConfig(backend="numba", **base))
    b = evolve_monte_carlo(tss, noise, Z0, McConfig(backend="numpy", **base))
    assert a.meta["backend"] == "numba" and b.meta["backend"] == "numpy"
    # identical draws: only summation order and libm ulps differ
    assert np.abs(a.values - b.values).max() < 1e-12


def test_mc_manifest_rtd_rejected():
    cfg = McConfig(n_traj=100, seed=0, t_max=1.0, dt_out=0.5)
    with pytest.raises(NotImplementedError):
        evolve_monte_carlo(TssParams(0.0, 0.0), NoiseModel(1.0, ManifestNM(1.0, 1.0, 0.5)), Z0, cfg)


def test_mcconfig_validation():
    with pytest.raises(ValueError):
        McConfig(n_traj=99)
    with pytest.raises(ValueError):
        McConfig(dt_out=0.0)
    with pytest.raises(ValueError):
        McConfig(t_max=1.0, dt_out=2.0)


# ---------------------------------------------------------------------------
# cross-path invariants


def test_norm_never_exceeds_initial():
    ts = np.linspace(0.0, 30.0, 121)
    runs = [
        evolve_laplace(TssParams(0.0, 1.0), NoiseModel(1.0, Exponential(2.0)), Z0, ts),
        evolve_laplace(TssParams(1.0, 0.5), NoiseModel(0.5, Biexponential(0.3, 0.1, 1.0)), Z0, ts),
        evolve_monte_carlo(
            TssParams(1.0, 1.0),
            NoiseModel(0.25, Biexponential(0.5, 1.0 / 20.0, 1.0)),
            Z0,
            McConfig(n_traj=2_000, seed=1, t_max=30.0, dt_out=0.5),
        ),
    ]
    for out in runs:
        norms = np.linalg.norm(out.values, axis=-1)
        slack = out.err.sum(axis=-1) if out.err is not None else 0.0
        assert np.all(norms <= 1.0 + 1e-9 + slack)
