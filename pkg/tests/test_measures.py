"""Distinguishability measures and the positive-variation functional."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telegraphq.bloch import TssParams
from telegraphq.dynamics import evolve_alpha0_closed, evolve_laplace
from telegraphq.measures import (
    Bounded,
    DivergentLinear,
    MeasureKind,
    NonMarkovResult,
    direct_jsd,
    jsd_from_td,
    maximize_over_pairs,
    nm_closed_markovian,
    non_markovianity,
    trace_distance_antipodal,
)
from telegraphq.noise import Exponential, ManifestNM, NoiseModel
from telegraphq.series import TimeSeries

Z = np.array([0.0, 0.0, 1.0])


# ---------------------------------------------------------------------------
# scalars


def test_trace_distance_is_norm_and_validates_direction():
    ts = np.array([0.0, 1.0])
    vals = np.array([[0.0, 0.0, 1.0], [0.0, 0.3, 0.4]])
    d = trace_distance_antipodal(Z, TimeSeries(ts, vals))
    np.testing.assert_allclose(d.values, [1.0, 0.5])
    with pytest.raises(ValueError):
        trace_distance_antipodal(np.array([0.0, 0.0, 2.0]), TimeSeries(ts, vals))


def test_trace_distance_angle_independent_at_zero_bias():
    # S acts as |S| times a rotation inside the y-z block, so any unit
    # direction in that plane gives the same curve
    ts = np.linspace(0.0, 10.0, 41)
    noise = NoiseModel(1.0, Exponential(2.0))
    tss = TssParams(0.0, 1.0)
    curves = []
    for n in ([0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.6, 0.8]):
        out = evolve_laplace(tss, noise, np.array(n), ts)
        curves.append(trace_distance_antipodal(n, out).values)
    assert np.abs(curves[0] - curves[1]).max() < 1e-8
    assert np.abs(curves[0] - curves[2]).max() < 1e-8


def test_jsd_from_td_endpoints_and_monotone():
    assert jsd_from_td(0.0) == 0.0
    assert jsd_from_td(1.0) == 1.0
    d = np.linspace(0.0, 0.999, 500)
    j = jsd_from_td(d)
    assert np.all(np.diff(j) > 0)
    with pytest.raises(ValueError):
        jsd_from_td(1.5)


@given(st.floats(min_value=1e-6, max_value=0.999999))
@settings(max_examples=60, deadline=None)
def test_jsd_identity_against_entropy_oracle(d):
    v = d * np.array([0.36, -0.48, 0.8])
    assert abs(jsd_from_td(d) - math.sqrt(direct_jsd(v, -v))) < 1e-10


def test_direct_jsd_trivial_pairs():
    v = np.array([0.2, -0.1, 0.5])
    assert direct_jsd(v, v) == 0.0
    assert abs(direct_jsd(Z, -Z) - 1.0) < 1e-12


def test_direct_jsd_matches_markovian_closed_series():
    # closed J(t) = [log(1-S^2) + 2 S artanh S]/log4 on the decay body
    from telegraphq.dynamics import _markov_decay

    t = np.linspace(0.05, 12.0, 60)
    S = np.abs(_markov_decay(t, 2.0, 1.0))
    closed = (np.log1p(-S * S) + 2.0 * S * np.arctanh(S)) / math.log(4.0)
    direct = np.array([direct_jsd(s * Z, -s * Z) for s in S])
    assert np.abs(direct - closed).max() < 1e-12
    assert np.abs(jsd_from_td(np.abs(S)) - np.sqrt(closed)).max() < 1e-12


def test_nm_closed_markovian_values():
    assert nm_closed_markovian(0.25, 2.0) == 0.0  # K = 0.5
    assert nm_closed_markovian(0.5, 2.0) == 0.0  # K = 1 boundary
    assert abs(nm_closed_markovian(1.0, 2.0) - 0.194791) < 1e-6
    # N = 0.1 inversion: pi/sqrt(K^2-1) = ln 11
    k = math.sqrt(1.0 + (math.pi / math.log(11.0)) ** 2)
    assert abs(nm_closed_markovian(k / 2.0, 2.0) - 0.1) < 1e-12
    assert abs(k - 1.64813) < 5e-5


# ---------------------------------------------------------------------------
# positive-variation functional


def test_monotone_decay_gives_zero():
    ts = np.linspace(0.0, 20.0, 400)
    res = non_markovianity(TimeSeries(ts, np.exp(-ts)))
    assert res.value == 0.0
    assert res.windows == []
    assert isinstance(res.bounded, Bounded)


@pytest.mark.parametrize("k", [1.5, 2.0, 4.0])
def test_underdamped_profile_sums_geometric_series(k):
    tau = 2.0
    om = math.sqrt((k / tau) ** 2 - 1.0 / tau**2)

    def d(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-t / tau) * np.abs(np.cos(om * t) + np.sin(om * t) / (om * tau))

    t_max = 40.0 * tau
    res = non_markovianity(d, t_max, samples=6001, refine_time_tol=1e-9 * t_max)
    q = math.exp(-math.pi / (om * tau))
    exact = q / (1.0 - q)
    # residual floor: cusp minima refine to |slope| * xatol, maxima to O(xatol^2)
    assert abs(res.value - exact) / exact < 1e-6
    assert res.value == pytest.approx(sum(w[2] for w in res.windows))


def test_divergent_linear_flag_and_rate():
    closed = lambda t: np.abs(evolve_alpha0_closed(1.0, 2.0, np.atleast_1d(t)).values)
    r1 = non_markovianity(closed, 60.0, samples=4001)
    r2 = non_markovianity(closed, 120.0, samples=8001)
    assert isinstance(r1.bounded, DivergentLinear)
    assert r1.bounded.rate > 0
    assert abs(r2.value / r1.value - 2.0) < 0.1


def test_noise_floor_ripple_is_not_backflow():
    # monotone decay into a +-1e-10 ripple sea must stay at zero
    rng = np.random.default_rng(42)
    ts = np.linspace(0.0, 30.0, 3000)
    ds = np.exp(-ts) + 1e-10 * rng.standard_normal(ts.size)
    res = non_markovianity(TimeSeries(ts, np.clip(ds, 0.0, None)))
    assert res.value == 0.0
    assert res.err < 1e-6


def test_callable_needs_horizon_and_series_rejects_conflict():
    with pytest.raises(ValueError):
        non_markovianity(lambda t: np.exp(-np.asarray(t)))
    ts = np.linspace(0.0, 5.0, 50)
    with pytest.raises(ValueError):
        non_markovianity(TimeSeries(ts, np.exp(-ts)), t_max=9.0)


# ---------------------------------------------------------------------------
# maximization


def test_markovian_maximize_matches_closed():
    res = maximize_over_pairs(TssParams(0.0, 0.0), NoiseModel(1.0, Exponential(2.0)))
    ref = nm_closed_markovian(1.0, 2.0)
    assert abs(res.value - ref) / ref < 0.01
    np.testing.assert_allclose(res.direction, Z)
    assert isinstance(res.bounded, Bounded)


def test_markovian_maximize_independent_of_delta0():
    a = maximize_over_pairs(TssParams(0.0, 0.0), NoiseModel(1.0, Exponential(2.0)))
    b = maximize_over_pairs(TssParams(0.0, 1.0), NoiseModel(1.0, Exponential(2.0)))
    assert abs(a.value - b.value) < 1e-6


def test_zero_amplitude_is_markovian_everywhere():
    res = maximize_over_pairs(TssParams(1.0, 1.0), NoiseModel(0.0, Exponential(1.0)))
    assert res.value == 0.0 and isinstance(res.bounded, Bounded)


def test_bias_lowers_value():
    noise = NoiseModel(1.0, Exponential(2.0))
    biased = maximize_over_pairs(TssParams(1.0, 1.0), noise, n_sphere=24)
    unbiased = maximize_over_pairs(TssParams(0.0, 1.0), noise)
    assert np.linalg.norm(biased.direction) == pytest.approx(1.0, abs=1e-9)
    assert biased.value < unbiased.value


def test_jsd_measure_shares_zero_set_and_reports_alt():
    noise_zero = NoiseModel(0.25, Exponential(2.0))  # K = 0.5
    noise_pos = NoiseModel(1.0, Exponential(2.0))  # K = 2
    tss = TssParams(0.0, 0.0)
    for noise in (noise_zero, noise_pos):
        t_res = maximize_over_pairs(tss, noise)
        e_res = maximize_over_pairs(tss, noise, MeasureKind.JENSEN_SHANNON)
        assert (t_res.value < 1e-4) == (e_res.value < 1e-4)
        if e_res.value > 0:
            assert e_res.value_alt is not None and 0 < e_res.value_alt < e_res.value


def test_manifest_divergent_on_both_measures():
    noise = NoiseModel(1.0, ManifestNM(2.0, 1.0, 1e-8))
    tss = TssParams(0.0, 0.0)
    for kind in (MeasureKind.TRACE_DISTANCE, MeasureKind.JENSEN_SHANNON):
        res = maximize_over_pairs(tss, noise, kind, horizon=80.0)
        assert isinstance(res.bounded, DivergentLinear)
