import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from trendfilter.errors import EmptySeriesError, PrecisionError
from trendfilter.inference import (
    FisherInfo,
    SpectralDensity,
    autocov_y,
    crb_horizon,
    fisher_info,
    integrate_even,
    mle_fit,
    spectral_density,
    spectral_partials,
    spectral_peak,
    t_test_horizon,
)
from trendfilter.likelihood import loglik_kalman
from trendfilter.model import MarketParams, TrendParams, simulate, simulate_paths

BEST = MarketParams.from_values(1.0, 0.9, 0.3)
CASES = [
    BEST,
    MarketParams.from_values(5.0, 0.1, 0.3),
    MarketParams.from_values(0.1, 0.05, 0.3, 1e-4),
    MarketParams.from_values(10.0, 3.0, 0.3, 1 / 12),
    MarketParams.from_values(0.5, 0.2, 0.01),
]
omegas = st.floats(min_value=-math.pi, max_value=math.pi, allow_nan=False)


@given(omegas)
def test_spectral_density_even_and_positive(w):
    for p in CASES:
        f = spectral_density(p, w)
        assert f > 0
        assert f == spectral_density(p, -w)


def test_spectral_density_at_zero():
    for p in CASES:
        expected = p.q / (1 - p.phi) ** 2 + p.r
        assert spectral_density(p, 0.0) == pytest.approx(expected, rel=1e-9)


def test_spectral_density_textbook_form():
    # rational form (q + r(1 + phi^2) - 2 phi r cos w) / (1 + phi^2 - 2 phi cos w), fine away from w = 0
    p = MarketParams.from_values(3.0, 0.8, 0.3, 1 / 12)
    w = np.linspace(0.5, math.pi, 7)
    phi, q, r = p.phi, p.q, p.r
    book = (q + r * (1 + phi**2) - 2 * phi * r * np.cos(w)) / (1 + phi**2 - 2 * phi * np.cos(w))
    np.testing.assert_allclose(spectral_density(p, w), book, rtol=1e-12)
    assert SpectralDensity(p)(0.7) == spectral_density(p, 0.7)


def test_autocov_ratios():
    for p in CASES:
        for k in range(1, 6):
            assert autocov_y(p, k + 1) / autocov_y(p, k) == pytest.approx(p.phi, rel=1e-14)
        assert autocov_y(p, 0) - autocov_y(p, 1) / p.phi == pytest.approx(p.r, rel=1e-12)
    with pytest.raises(ValueError):
        autocov_y(BEST, -1)


def test_fourier_inversion_reproduces_autocovariance():
    for p in CASES:
        peak = spectral_peak(p)
        for k in range(6):
            val = integrate_even(lambda w: spectral_density(p, w) * np.cos(k * w), peak=peak) / (2 * math.pi)
            gamma = autocov_y(p, k)
            scale = autocov_y(p, 0)
            assert abs(val - gamma) <= 1e-10 * scale


def test_parseval_uniform_nodes_for_smooth_case():
    # without the substitution, for a case whose peak is wide enough for plain Simpson
    p = MarketParams.from_values(10.0, 3.0, 0.3, 1 / 12)
    val = integrate_even(lambda w: spectral_density(p, w)) / (2 * math.pi)
    assert val == pytest.approx(autocov_y(p, 0), rel=1e-10)


def test_integrate_even_known_values():
    assert integrate_even(lambda w: np.cos(w) ** 2) == pytest.approx(math.pi, rel=1e-12)
    # Poisson kernel integrates to 2 pi for any phi in (0, 1)
    for phi in (0.5, 0.99, 0.99999):
        kern = lambda w: (1 - phi**2) / ((1 - phi) ** 2 + 4 * phi * np.sin(w / 2) ** 2)
        val = integrate_even(kern, peak=(1 - phi) / (1 + phi))
        assert val == pytest.approx(2 * math.pi, rel=1e-12)
    stacked = integrate_even(lambda w: np.stack([np.ones_like(w), np.cos(w) ** 2]))
    np.testing.assert_allclose(stacked, [2 * math.pi, math.pi], rtol=1e-12)


def test_integrate_even_raises_when_budget_too_small():
    phi = 0.99999
    kern = lambda w: (1 - phi**2) / ((1 - phi) ** 2 + 4 * phi * np.sin(w / 2) ** 2)
    with pytest.raises(PrecisionError):
        integrate_even(kern, max_intervals=4096)
    with pytest.raises(ValueError):
        integrate_even(kern, peak=0.0)


def test_fisher_symmetric_psd_grid():
    for lam in np.linspace(0.5, 5.0, 10):
        for sig in np.linspace(0.1, 0.9, 10):
            i1 = fisher_info(MarketParams.from_values(lam, sig, 0.3)).i1
            assert abs(i1[0, 1] - i1[1, 0]) < 1e-12
            assert np.min(np.linalg.eigvalsh(i1)) >= -1e-12


def test_fd_partials_match_analytic():
    rng = np.random.default_rng(0)
    w = np.linspace(0, math.pi, 201)
    for p in CASES:
        fd = spectral_partials(p, w, "fd")
        an = spectral_partials(p, w, "analytic")
        for a, b in zip(fd, an):
            np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-9 * np.max(np.abs(b)))
    with pytest.raises(ValueError):
        spectral_partials(BEST, w, "bogus")


def test_fisher_fd_vs_analytic_and_step_halving():
    for p in CASES:
        fd = fisher_info(p).i1
        an = fisher_info(p, method="analytic").i1
        half = fisher_info(p, rel_step=5e-7).i1
        scale = np.max(np.abs(an))
        assert np.max(np.abs(fd - an)) < 1e-6 * scale
        assert np.max(np.abs(fd - half) / np.abs(fd)) < 1e-4


def test_fisher_reference_values():
    i1 = fisher_info(BEST).i1
    np.testing.assert_allclose(i1, [[0.00144389, -0.00238743], [-0.00238743, 0.00627449]], rtol=1e-5)


def test_fisher_info_helpers():
    info = fisher_info(BEST)
    np.testing.assert_allclose(info.total(252), 252 * info.i1)
    np.testing.assert_allclose(info.crb(252) @ info.total(252), np.eye(2), atol=1e-12)


def test_crb_horizon_examples():
    info = fisher_info(BEST)
    t05 = crb_horizon(BEST, 0.5, "lambda", info=info)
    t01 = crb_horizon(BEST, 0.1, "lambda", info=info)
    assert 27 <= t05 <= 32
    assert 675 <= t01 <= 800
    assert t01 / t05 == pytest.approx(25.0, rel=1e-10)
    consts = [crb_horizon(BEST, x, info=info) * x * x for x in (0.5, 0.25, 0.1)]
    np.testing.assert_allclose(consts, consts[0], rtol=1e-12)
    assert crb_horizon(BEST, 0.5) == pytest.approx(t05, rel=1e-12)


def test_crb_horizon_argument_checks():
    with pytest.raises(ValueError):
        crb_horizon(BEST, 0.0)
    with pytest.raises(ValueError):
        crb_horizon(BEST, 0.5, "sigma_s")
    info = fisher_info(BEST)
    assert crb_horizon(BEST, 0.5, 1, info=info) == crb_horizon(BEST, 0.5, "sigma_mu", info=info)


def test_crb_horizon_monotone_over_grid():
    lams = np.linspace(0.5, 5.0, 10)
    sigs = np.linspace(0.1, 0.9, 9)
    t_lam = np.empty((10, 9))
    t_sig = np.empty((10, 9))
    for i, lam in enumerate(lams):
        for j, sig in enumerate(sigs):
            p = MarketParams.from_values(lam, sig, 0.3)
            info = fisher_info(p)
            t_lam[i, j] = crb_horizon(p, 0.5, "lambda", info=info)
            t_sig[i, j] = crb_horizon(p, 0.05, "sigma_mu", info=info)
    # horizon for lambda: harder with larger lambda, easier with larger sigma_mu
    assert np.all(np.diff(t_lam, axis=0) > 0)
    assert np.all(np.diff(t_lam, axis=1) < 0)
    # horizon for sigma_mu: increasing in lambda everywhere, decreasing in sigma_mu for lambda >= 1
    assert np.all(np.diff(t_sig, axis=0) > 0)
    assert np.all(np.diff(t_sig[lams >= 1.0], axis=1) < 0)


def test_fit_improves_on_truth_and_init():
    p = BEST
    for seed in range(3):
        y = simulate(p, 1260, seed).y
        init = TrendParams(2.0, 0.5)
        fit = mle_fit(y, p.sigma_s, p.delta, init)
        assert fit.loglik >= loglik_kalman(y, p) - 1e-9
        assert fit.loglik >= fit.loglik_init
        assert fit.loglik == pytest.approx(loglik_kalman(y, p.with_trend(fit.params.lambda_mu, fit.params.sigma_mu)))


def test_fit_recovers_high_snr_volatility():
    p = MarketParams.from_values(1.0, 0.9, 0.01)
    y = simulate(p, 5000, 1).y
    fit = mle_fit(y, p.sigma_s, p.delta, TrendParams(2.0, 0.5))
    assert fit.converged and not fit.at_boundary
    assert fit.params.sigma_mu == pytest.approx(0.9, rel=0.1)


def test_fit_flags_degenerate_data():
    # pure noise far below the observation noise level: the trend volatility runs to zero
    y = np.zeros(500)
    fit = mle_fit(y, 0.3, 1 / 252, TrendParams(1.0, 0.5), max_iter=2000)
    assert fit.at_boundary


def test_fit_reports_nonconvergence():
    y = simulate(BEST, 300, 2).y
    fit = mle_fit(y, 0.3, 1 / 252, TrendParams(1.0, 0.9), max_iter=3)
    assert not fit.converged
    assert fit.n_iter <= 3


def test_fit_input_checks():
    with pytest.raises(EmptySeriesError):
        mle_fit(np.array([]), 0.3, 1 / 252, TrendParams(1, 1))
    with pytest.raises(ValueError):
        mle_fit(np.zeros(9), 0.3, 1 / 252, TrendParams(1, 1))


def test_score_has_zero_mean():
    p = BEST
    _, y = simulate_paths(p, 252, 2024, range(2000))
    h = 1e-5
    grads = []
    for idx in range(2):
        up = [p.lambda_mu, p.sigma_mu]
        dn = [p.lambda_mu, p.sigma_mu]
        up[idx] *= 1 + h
        dn[idx] *= 1 - h
        step = 2 * h * [p.lambda_mu, p.sigma_mu][idx]
        grads.append((loglik_kalman(y, p.with_trend(*up)) - loglik_kalman(y, p.with_trend(*dn))) / step)
    for g in grads:
        assert abs(g.mean()) < 3 * g.std(ddof=1) / math.sqrt(g.size)


def test_t_test_horizon_examples():
    assert t_test_horizon(0.3, 0.01, 1.0) == pytest.approx(900.0, rel=1e-12)
    assert t_test_horizon(0.3, 0.01, 1.96) == pytest.approx(3457.44, rel=1e-12)
    assert t_test_horizon(0.2, 0.2, 1.0) == 1.0
    assert t_test_horizon(0.3, 0.0, 1.0) == math.inf
