"""Residence-time models and noise statistics.

Frozen values:
  - biexponential cv = 2*(1+399*theta)/(1+19*theta)^2 - 1 for rates
    (1/20, 1), maximal 10.025 at theta = 1/21  [series second moment]
  - exponential corr_time = tau/2, cv = 1
"""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from telegraphq.noise import (
    Biexponential,
    Exponential,
    LaplaceDomainError,
    ManifestNM,
    NoiseModel,
    autocorr_laplace,
    noise_stats,
    rtd_laplace,
    sample_first_stationary,
    sample_residence,
)


def test_rtd_examples():
    assert rtd_laplace(Exponential(1.0), 1.0) == pytest.approx(0.5)
    b = Biexponential(1.0, 0.3, 7.0)  # theta=1 collapses onto rate alpha1
    for s in (0.1, 1.0, 4.0):
        assert rtd_laplace(b, s) == pytest.approx(0.3 / (s + 0.3))
    m = ManifestNM(2.0, 0.0, 0.7)
    assert rtd_laplace(m, 1.5) == pytest.approx(rtd_laplace(Exponential(2.0), 1.5))


def test_rtd_validation():
    with pytest.raises(ValueError):
        Exponential(-1.0)
    with pytest.raises(ValueError):
        Biexponential(1.2, 1.0, 1.0)
    with pytest.raises(ValueError):
        ManifestNM(1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        ManifestNM(1.0, -1.0, 0.5)


def test_manifest_branch_cut_guard():
    m = ManifestNM(1.0, 5.0, 0.5)
    with pytest.raises(LaplaceDomainError):
        rtd_laplace(m, np.array([-0.1 + 1.0j]))


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from(
        [
            Exponential(0.5),
            Exponential(3.0),
            Biexponential(0.3, 0.05, 1.0),
            ManifestNM(1.0, 4.0, 0.5),
            ManifestNM(2.0, 10.0, 1.0),
        ]
    ),
    st.floats(1e-3, 1e3),
    st.floats(-50.0, 50.0),
)
def test_rtd_bounded_on_right_half_plane(rtd, sig, om):
    val = rtd_laplace(rtd, complex(sig, om))
    assert abs(val) <= 1.0 + 1e-12


def test_rtd_decreasing_on_real_axis():
    s = np.geomspace(1e-3, 1e3, 40)
    for rtd in (Exponential(1.7), Biexponential(0.4, 0.05, 1.0)):
        vals = np.array([rtd_laplace(rtd, x) for x in s]).real
        assert np.all(vals > 0) and np.all(vals < 1)
        assert np.all(np.diff(vals) < 0)


def test_manifest_small_td_converges_to_exponential():
    s = np.geomspace(1e-2, 1e2, 25) * (1 + 0.3j)
    sup_prev = np.inf
    for td in (1e-2, 1e-4, 1e-6):
        m = ManifestNM(1.0, td, 0.5)
        diff = np.abs(rtd_laplace(m, s) - rtd_laplace(Exponential(1.0), s))
        sup = diff.max()
        assert sup < sup_prev
        sup_prev = sup
    assert sup_prev < 1e-3


def test_autocorr_exponential_closed_form():
    nm = NoiseModel(1.0, Exponential(2.0))
    for s in (0.1, 1.0 + 1.0j, 5.0):
        assert autocorr_laplace(nm, s) == pytest.approx(1.0 / (s + 1.0))


def test_autocorr_normalization_ivt():
    s = 1e8
    for rtd in (Exponential(1.0), Biexponential(0.2, 0.05, 1.0), ManifestNM(1.0, 3.0, 0.5)):
        nm = NoiseModel(0.7, rtd)
        assert s * autocorr_laplace(nm, s) == pytest.approx(1.0, rel=1e-6)


def test_autocorr_biexp_degenerate():
    nm = NoiseModel(1.0, Biexponential(0.0, 0.05, 3.0))
    for s in (0.2, 2.0):
        assert autocorr_laplace(nm, s) == pytest.approx(1.0 / (s + 6.0))


def test_stats_exponential():
    st_ = noise_stats(NoiseModel(0.5, Exponential(2.0)))
    assert st_.mean_residence == pytest.approx(2.0)
    assert st_.corr_time == pytest.approx(1.0)
    assert st_.cv == pytest.approx(1.0)
    assert st_.kubo == pytest.approx(1.0)
    assert not st_.divergent


def _cv_biexp(theta):
    return 2 * (1 + 399 * theta) / (1 + 19 * theta) ** 2 - 1


@pytest.mark.parametrize("theta", [0.0, 1 / 40, 1 / 21, 0.2, 0.5, 1.0])
def test_stats_biexp_matches_series(theta):
    st_ = noise_stats(NoiseModel(0.25, Biexponential(theta, 0.05, 1.0)))
    assert st_.mean_residence == pytest.approx(theta / 0.05 + (1 - theta))
    assert st_.cv == pytest.approx(_cv_biexp(theta), rel=1e-9)


def test_stats_biexp_cv_peak_covers_unit_decade():
    assert _cv_biexp(1 / 21) == pytest.approx(10.025)
    assert _cv_biexp(0.0) == 1.0 and _cv_biexp(1.0) == 1.0


def test_stats_manifest_divergent_below_one():
    st_ = noise_stats(NoiseModel(0.5, ManifestNM(1.0, 10.0, 0.5)))
    assert st_.divergent
    assert st_.corr_time == np.inf
    assert st_.cv is None
    assert st_.mean_residence == pytest.approx(1.0)


def test_stats_manifest_alpha_one_limit():
    # k(s) -> td/3 + tau/2 as s->0 when alpha=1
    st_ = noise_stats(NoiseModel(0.5, ManifestNM(2.0, 3.0, 1.0)))
    assert st_.corr_time == pytest.approx(3.0 / 3 + 1.0, rel=1e-5)


def test_stats_abs_integration_agrees_with_limit():
    fast = noise_stats(NoiseModel(1.0, Exponential(1.5)))
    slow = noise_stats(NoiseModel(1.0, Exponential(1.5)), force_abs_integration=True)
    assert slow.corr_time == pytest.approx(fast.corr_time, rel=2e-3)
    assert slow.corr_cutoff is not None


def test_autocorr_time_domain_starts_at_one():
    # reconstructed k(t->0) must hit the k(0)=1 normalization
    from telegraphq.laplace import IltConfig, ilt

    for rtd in (Exponential(1.0), Biexponential(0.3, 0.05, 1.0), ManifestNM(1.0, 5.0, 0.5)):
        nm = NoiseModel(1.0, rtd)
        r = ilt(lambda s: autocorr_laplace(nm, s), np.array([1e-4]), IltConfig(), branch_limited=True)
        assert r.values[0] == pytest.approx(1.0, abs=1e-3)


def test_sampling_means():
    rng = np.random.default_rng(7)
    n = 200_000
    x = sample_residence(Exponential(2.0), rng, n)
    assert x.mean() == pytest.approx(2.0, abs=4 * 2.0 / np.sqrt(n))
    b = Biexponential(0.3, 0.05, 1.0)
    y = sample_residence(b, rng, n)
    mean = 0.3 / 0.05 + 0.7
    # residence variance for the mixture: E[t^2] - mean^2
    var = 2 * (0.3 / 0.05**2 + 0.7) - mean**2
    assert y.mean() == pytest.approx(mean, abs=4 * np.sqrt(var / n))


def test_sampling_first_stationary_biexp_weights():
    b = Biexponential(0.3, 0.05, 1.0)
    rng = np.random.default_rng(11)
    n = 200_000
    z = sample_first_stationary(b, rng, n)
    # forward recurrence keeps the exponential components but reweights
    # them by occupation share: mean = sum w_i / alpha_i
    m = 0.3 / 0.05 + 0.7
    w1 = (0.3 / 0.05) / m
    mean = w1 / 0.05 + (1 - w1) / 1.0
    var = 2 * (w1 / 0.05**2 + (1 - w1)) - mean**2
    assert z.mean() == pytest.approx(mean, abs=4 * np.sqrt(var / n))


def test_sampling_exponential_memoryless():
    rng1, rng2 = np.random.default_rng(3), np.random.default_rng(3)
    a = sample_residence(Exponential(1.3), rng1, 1000)
    b = sample_first_stationary(Exponential(1.3), rng2, 1000)
    assert np.allclose(a, b)


def test_sampling_manifest_unsupported():
    with pytest.raises(NotImplementedError):
        sample_residence(ManifestNM(1.0, 1.0, 0.5), np.random.default_rng(0), 10)
