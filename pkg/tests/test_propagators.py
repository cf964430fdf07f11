"""Frozen regression: the renewal assembly against its independent anchors.

The general-bias resummation was fixed (sign/operator placement) by requiring
agreement with (a) the scalarized unbiased formulas, (b) the static resolvent
at zero amplitude, (c) closed-form Markovian decay after inversion.  These
tests freeze that resolution.
"""
import numpy as np
import pytest

from telegraphq.bloch import TssParams, spectral_decomposition
from telegraphq.laplace import IltConfig, ilt
from telegraphq.noise import Biexponential, Exponential, ManifestNM, NoiseModel
from telegraphq.propagators import (
    averaged_propagator_general,
    averaged_propagator_unbiased,
    propagator_fn,
)

PROBES = np.array([0.31, 1.0 + 0.7j, 2.0 - 1.3j, 5.0, 0.05 + 2.0j, 0.4 - 0.33j])
PROBES_RHP = np.array([0.31, 1.0 + 0.7j, 2.0 + 1.3j, 5.0, 0.05 + 2.0j, 0.4 + 0.33j])


@pytest.mark.parametrize("delta0", [0.0, 1.0])
@pytest.mark.parametrize(
    "rtd",
    [Exponential(1.3), Biexponential(0.3, 0.05, 1.0), Biexponential(0.9, 2.0, 0.7)],
)
def test_general_reduces_to_unbiased(delta0, rtd):
    noise = NoiseModel(0.45, rtd)
    tss = TssParams(0.0, delta0)
    g = averaged_propagator_general(tss, noise, PROBES)
    u = averaged_propagator_unbiased(noise, delta0, PROBES)
    assert np.max(np.abs(g - u)) < 1e-10


def test_general_reduces_to_unbiased_manifest():
    noise = NoiseModel(0.5, ManifestNM(1.0, 4.0, 0.5))
    g = averaged_propagator_general(TssParams(0.0, 1.0), noise, PROBES_RHP)
    u = averaged_propagator_unbiased(noise, 1.0, PROBES_RHP)
    assert np.max(np.abs(g - u)) < 1e-10


@pytest.mark.parametrize("eps0,delta0", [(0.0, 1.0), (1.3, 0.7), (2.0, 0.0)])
def test_zero_amplitude_gives_static_resolvent(eps0, delta0):
    noise = NoiseModel(1e-300, Exponential(1.7))  # amplitude must be >0; limit
    tss = TssParams(eps0, delta0)
    g = averaged_propagator_general(tss, noise, PROBES)
    sp = spectral_decomposition(tss, delta0)
    lam = np.asarray(sp.lambdas)
    proj = np.asarray(sp.projectors)
    ref = np.einsum("nk,kij->nij", 1.0 / (PROBES[:, None] - 1j * lam[None, :]), proj)
    assert np.max(np.abs(g - ref)) < 1e-11


@pytest.mark.parametrize("eps0", [0.0, 1.0])
def test_initial_value_theorem(eps0):
    noise = NoiseModel(0.25, Biexponential(0.5, 0.05, 1.0))
    fn = propagator_fn(TssParams(eps0, 1.0), noise)
    s = np.array([1e8 + 0.0j])
    out = np.asarray(fn(s))[0]
    assert np.max(np.abs(out * 1e8 - np.eye(3))) < 1e-6


def test_unbiased_block_structure():
    noise = NoiseModel(0.45, Exponential(1.3))
    out = averaged_propagator_unbiased(noise, 0.8, PROBES)
    assert np.allclose(out[:, 0, 0], 1.0 / PROBES)
    assert np.allclose(out[:, 0, 1], 0.0) and np.allclose(out[:, 1, 0], 0.0)
    assert np.allclose(out[:, 2, 2], out[:, 1, 1])
    assert np.allclose(out[:, 2, 1], -out[:, 1, 2])


def test_markovian_inversion_matches_closed_decay():
    # exponential kernel, zero bias: ILT of the yy/yz entries must equal
    # e^{-t/tau}(cosh Om t + sinh(Om t)/(Om tau)) times cos/sin(delta0 t)
    tau, amp, delta0 = 2.0, 1.0, 0.8
    noise = NoiseModel(amp, Exponential(tau))
    fn = propagator_fn(TssParams(0.0, delta0), noise)
    ts = np.linspace(0.1, 25.0, 120)
    r = ilt(fn, ts, IltConfig(), osc_bound=fn.osc_bound)
    om = np.emath.sqrt(1.0 / tau**2 - amp**2)
    body = np.cosh(om * ts) + np.sinh(om * ts) / (om * tau)
    decay = (np.exp(-ts / tau) * body).real
    assert np.max(np.abs(r.values[:, 2, 2] - decay * np.cos(delta0 * ts))) < 1e-6
    assert np.max(np.abs(r.values[:, 1, 2] - decay * np.sin(delta0 * ts))) < 1e-6


def test_mp_scalar_paths_match_vectorized():
    import mpmath as mp

    noise = NoiseModel(0.25, Biexponential(0.5, 0.05, 1.0))
    s = 0.8 + 1.1j
    u_vec = averaged_propagator_unbiased(noise, 1.0, np.array([s]))[0]
    u_mp = averaged_propagator_unbiased(noise, 1.0, mp.mpc(s))
    err_u = max(abs(complex(u_mp[i, j]) - u_vec[i, j]) for i in range(3) for j in range(3))
    assert err_u < 1e-13

    tss = TssParams(1.0, 1.0)
    g_vec = averaged_propagator_general(tss, noise, np.array([s]))[0]
    g_mp = averaged_propagator_general(tss, noise, mp.mpc(s))
    err_g = max(abs(complex(g_mp[i, j]) - g_vec[i, j]) for i in range(3) for j in range(3))
    assert err_g < 1e-12


def test_pole_proximity_is_removable():
    noise = NoiseModel(0.45, Exponential(1.3))
    dp = 1.0 + 0.45  # upper coupling for delta0=1
    on_pole = averaged_propagator_unbiased(noise, 1.0, np.array([1j * dp]))
    nearby = averaged_propagator_unbiased(noise, 1.0, np.array([1e-6 + 1j * dp]))
    assert np.all(np.isfinite(on_pole.view(float)))
    assert np.max(np.abs(on_pole - nearby)) < 1e-4


def test_propagator_fn_metadata():
    noise = NoiseModel(0.5, ManifestNM(1.0, 4.0, 0.5))
    fn = propagator_fn(TssParams(1.0, 1.0), noise)
    assert fn.branch_limited
    assert fn.osc_bound == pytest.approx(np.hypot(1.0, 1.5))
    fn2 = propagator_fn(TssParams(0.0, 1.0), NoiseModel(0.5, Exponential(1.0)))
    assert not fn2.branch_limited
    assert fn2.laplace_shape == (3, 3)
