"""
Laws of the continuous-time steady-state filter run with the wrong parameters.

Data follow the model with true trend parameters theta* = (lambda*, sigma*);
the agent filters with beliefs theta = (lambda, sigma)::

    d mu_hat = -lambda beta mu_hat dt + lambda (beta - 1) dS/S,   mu_hat_0 = 0

Everything below is written with the shorthands

    a = lambda beta        (decay rate of the filter)
    b = lambda*            (decay rate of the true trend)
    c = lambda (beta - 1)  (filter gain)

so that mu_hat_t = c int_0^t e^{-a(t-s)} (mu*_s ds + sigma_s dW_s).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import erfc, exp, expm1, sqrt

import numpy as np
from scipy.signal import lfilter

from .kalman import beta_factor
from .model import GaussianLaw, MarketParams, TrendParams, simulate_paths

__all__ = [
    "MisspecConfig",
    "McEstimate",
    "DetectionEstimate",
    "filter_variance_t",
    "filter_trend_cov_t",
    "residual_variance_t",
    "filter_variance_asym",
    "filter_trend_cov_asym",
    "residual_variance_asym",
    "residual_variance_wellspec",
    "residual_std_ratio_wellspec",
    "conditional_trend_law",
    "positive_trend_prob",
    "detection_threshold",
    "normal_cdf",
    "simulate_filter_pairs",
    "terminal_mc",
    "residual_mc_check",
    "filter_variance_mc_check",
    "detection_mc_check",
]

log_ = logging.getLogger(__name__)

# |a - b| below this (relative to b) counts as the removable singularity a = b
SINGULAR_REL_GAP = 1e-9
SINGULAR_REL_SHIFT = 1e-6
# paths simulated together in Monte Carlo checks
MC_BLOCK = 500


@dataclass(frozen=True)
class MisspecConfig:
    """True trend parameters, the agent's beliefs and the (shared, known) spot volatility."""

    theta_star: TrendParams
    theta: TrendParams
    sigma_s: float

    def __post_init__(self):
        if not (self.sigma_s > 0.0 and np.isfinite(self.sigma_s)):
            raise ValueError(f"sigma_s must be positive, got {self.sigma_s}")

    @classmethod
    def well_specified(cls, theta_star: TrendParams, sigma_s: float) -> "MisspecConfig":
        return cls(theta_star, theta_star, sigma_s)

    @classmethod
    def from_values(cls, lambda_star, sigma_star, lambda_mu, sigma_mu, sigma_s) -> "MisspecConfig":
        return cls(TrendParams(lambda_star, sigma_star), TrendParams(lambda_mu, sigma_mu), sigma_s)

    @property
    def beta(self) -> float:
        return beta_factor(self.theta, self.sigma_s)

    @property
    def beta_star(self) -> float:
        return beta_factor(self.theta_star, self.sigma_s)

    @property
    def trend_variance(self) -> float:
        """Stationary variance of the true trend, sigma*^2 / (2 lambda*)."""
        return self.theta_star.stationary_variance

    def rates(self) -> tuple[float, float, float]:
        """(a, b, c) = (lambda beta, lambda*, lambda (beta - 1))."""
        beta = self.beta
        lam = self.theta.lambda_mu
        return lam * beta, self.theta_star.lambda_mu, lam * (beta - 1.0)

    def with_theta(self, lambda_mu: float, sigma_mu: float) -> "MisspecConfig":
        return MisspecConfig(self.theta_star, TrendParams(lambda_mu, sigma_mu), self.sigma_s)


@dataclass(frozen=True)
class McEstimate:
    """Monte Carlo variance estimate with its standard error."""

    variance: float
    se: float
    n_paths: int
    short_horizon: bool

    @property
    def std(self) -> float:
        return sqrt(self.variance)

    @property
    def std_se(self) -> float:
        # delta method: d sqrt(v) = dv / (2 sqrt(v))
        return self.se / (2.0 * self.std)


@dataclass(frozen=True)
class DetectionEstimate:
    """Share of positive trends among samples whose estimate fell in a band around x."""

    prob: float
    se: float
    n_in_band: int


def _nonsingular(cfg: MisspecConfig) -> MisspecConfig:
    # the finite-t expressions divide by a - b; nudge lambda off the removable singularity
    a, b, _ = cfg.rates()
    if abs(a - b) < SINGULAR_REL_GAP * b:
        lam = cfg.theta.lambda_mu * (1.0 + SINGULAR_REL_SHIFT)
        return cfg.with_theta(lam, cfg.theta.sigma_mu)
    return cfg


def _check_time(t: float):
    if t < 0:
        raise ValueError("t must be nonnegative")


def filter_variance_t(cfg: MisspecConfig, t: float) -> float:
    """
    Var[mu_hat_t] at finite time t, from mu_hat_0 = mu*_0 = 0.

    The trend part is::

        c^2 sigma*^2 / (b (a - b)) * [ (1 - e^{-(a+b)t}) / (a + b)
                                       - (e^{-at} - e^{-bt})^2 / (2 (a - b))
                                       - (1 - e^{-2at}) / (2a) ]

    and the noise part is ``lambda (beta - 1)^2 sigma_s^2 / (2 beta) (1 - e^{-2at})``.
    The middle term carries the factor 2 in its denominator; without it the
    expression disagrees with direct quadrature of the defining double
    integral at every finite t (the t -> infinity limit is unaffected).
    """
    _check_time(t)
    cfg = _nonsingular(cfg)
    a, b, c = cfg.rates()
    sig2 = cfg.theta_star.sigma_mu**2
    beta = cfg.beta
    decay_ab = -expm1(-(a + b) * t)
    decay_aa = -expm1(-2.0 * a * t)
    cross = exp(-a * t) - exp(-b * t)
    bracket = decay_ab / (a + b) - cross * cross / (2.0 * (a - b)) - decay_aa / (2.0 * a)
    trend_part = c * c * sig2 / (b * (a - b)) * bracket
    noise_part = cfg.theta.lambda_mu * (beta - 1.0) ** 2 * cfg.sigma_s**2 / (2.0 * beta) * decay_aa
    return trend_part + noise_part


def filter_trend_cov_t(cfg: MisspecConfig, t: float) -> float:
    """
    Cov[mu_hat_t, mu*_t]::

        c sigma*^2 / (2b) * [ (1 - e^{-(a+b)t}) / (a + b) - (e^{-2bt} - e^{-(a+b)t}) / (a - b) ]
    """
    _check_time(t)
    cfg = _nonsingular(cfg)
    a, b, c = cfg.rates()
    sig2 = cfg.theta_star.sigma_mu**2
    decay_ab = -expm1(-(a + b) * t)
    return c * sig2 / (2.0 * b) * (decay_ab / (a + b) - (exp(-2.0 * b * t) - exp(-(a + b) * t)) / (a - b))


def residual_variance_t(cfg: MisspecConfig, t: float) -> float:
    """Var[mu_hat_t - mu*_t] = Var[mu_hat_t] + Var[mu*_t] - 2 Cov[mu_hat_t, mu*_t]."""
    _check_time(t)
    lam_star = cfg.theta_star.lambda_mu
    var_star = cfg.trend_variance * -expm1(-2.0 * lam_star * t)
    return filter_variance_t(cfg, t) + var_star - 2.0 * filter_trend_cov_t(cfg, t)


def filter_variance_asym(cfg: MisspecConfig) -> float:
    """
    Stationary variance of the filter::

        c^2 sigma*^2 / (2ab (a + b)) + lambda (beta - 1)^2 sigma_s^2 / (2 beta)
    """
    a, b, c = cfg.rates()
    beta = cfg.beta
    sig2 = cfg.theta_star.sigma_mu**2
    return c * c * sig2 / (2.0 * a * b * (a + b)) + cfg.theta.lambda_mu * (beta - 1.0) ** 2 * cfg.sigma_s**2 / (
        2.0 * beta
    )


def filter_trend_cov_asym(cfg: MisspecConfig) -> float:
    """Stationary covariance of filter and trend, c sigma*^2 / (2b (a + b))."""
    a, b, c = cfg.rates()
    return c * cfg.theta_star.sigma_mu**2 / (2.0 * b * (a + b))


def residual_variance_asym(cfg: MisspecConfig) -> float:
    """
    Stationary variance of the residual mu_hat - mu*::

        sigma_s^2 / (2 beta) * [ lambda (beta - 1)^2
                                 + lambda* (beta*^2 - 1) (lambda* beta + lambda) / (lambda beta + lambda*) ]
    """
    lam, lam_star = cfg.theta.lambda_mu, cfg.theta_star.lambda_mu
    beta, beta_star = cfg.beta, cfg.beta_star
    s2 = cfg.sigma_s**2
    mis = lam_star * (beta_star**2 - 1.0) * (lam_star * beta + lam) / (lam * beta + lam_star)
    return s2 / (2.0 * beta) * (lam * (beta - 1.0) ** 2 + mis)


def residual_variance_wellspec(theta_star: TrendParams, sigma_s: float) -> float:
    """Stationary residual variance of the correctly specified filter, lambda* sigma_s^2 (beta* - 1)."""
    return theta_star.lambda_mu * sigma_s**2 * (beta_factor(theta_star, sigma_s) - 1.0)


def residual_std_ratio_wellspec(theta_star: TrendParams, sigma_s: float) -> float:
    """
    Residual variance over trend variance for the correctly specified filter,
    ``2 / (1 + beta*)``. This is a ratio of variances; its square root is the
    ratio of standard deviations.
    """
    return 2.0 / (1.0 + beta_factor(theta_star, sigma_s))


def conditional_trend_law(cfg: MisspecConfig, x: float) -> GaussianLaw:
    """
    Stationary law of mu* given mu_hat = x::

        mean     = lambda* beta (beta*^2 - 1) / ((beta - 1) (lambda beta + lambda* beta*^2)) x
        variance = V* (1 - lambda* lambda beta (beta*^2 - 1)
                          / ((lambda* + lambda beta) (lambda beta + lambda* beta*^2)))

    with V* = sigma*^2 / (2 lambda*).
    """
    lam, lam_star = cfg.theta.lambda_mu, cfg.theta_star.lambda_mu
    beta, beta_star = cfg.beta, cfg.beta_star
    b2m1 = beta_star**2 - 1.0
    mix = lam * beta + lam_star * beta_star**2
    slope = lam_star * beta * b2m1 / ((beta - 1.0) * mix)
    shrink = lam_star * lam * beta * b2m1 / ((lam_star + lam * beta) * mix)
    return GaussianLaw(slope * x, cfg.trend_variance * (1.0 - shrink))


def normal_cdf(z: float) -> float:
    """Standard normal CDF through the complementary error function (no cancellation in either tail)."""
    return 0.5 * erfc(-z / sqrt(2.0))


def positive_trend_prob(cfg: MisspecConfig, x: float) -> float:
    """P(mu* > 0 | mu_hat = x) in the stationary regime: 1 - Phi(-mean / std)."""
    law = conditional_trend_law(cfg, x)
    return 1.0 - normal_cdf(-law.mean / law.std)


def detection_threshold(cfg: MisspecConfig) -> float:
    """Stationary standard deviation of the filter, the reference estimate level for detection."""
    return sqrt(filter_variance_asym(cfg))


def simulate_filter_pairs(
    cfg: MisspecConfig,
    delta: float,
    horizon: float,
    n_paths: int,
    seed: int,
    snapshots=None,
    stationary_start: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Simulate true trends under theta* and run the Euler-stepped filter under theta.

    Parameters
    ----------
    horizon : float
        Length of each path in years; rounded to a whole number of steps.
    snapshots : sequence of float, optional
        Times (years) at which to record (mu*, mu_hat); default is the horizon only.

    Returns
    -------
    mu_star, mu_hat : ndarray, shape (n_paths, len(snapshots))
        Path ``i`` uses the same random streams as ``simulate(..., path_index=i)``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    n = int(round(horizon / delta))
    if n < 1:
        raise ValueError("horizon shorter than one step")
    times = [horizon] if snapshots is None else list(snapshots)
    steps = np.array([int(round(t / delta)) for t in times]) - 1
    if np.any(steps < 0) or np.any(steps >= n):
        raise ValueError("snapshot times must lie in (0, horizon]")
    params = MarketParams(cfg.theta_star, cfg.sigma_s, delta)
    a, _, c = cfg.rates()
    decay = 1.0 - a * delta
    gain = c * delta
    mu_star = np.empty((n_paths, len(steps)))
    mu_hat = np.empty((n_paths, len(steps)))
    for start in range(0, n_paths, MC_BLOCK):
        idx = range(start, min(start + MC_BLOCK, n_paths))
        mu, y = simulate_paths(params, n, seed, idx, stationary_start)
        # Euler step mu_hat' = (1 - a dt) mu_hat + c y dt, see kalman.continuous_filter_step
        est = lfilter([gain], [1.0, -decay], y, axis=1)
        mu_star[start : start + len(idx)] = mu[:, steps]
        mu_hat[start : start + len(idx)] = est[:, steps]
    return mu_star, mu_hat


def _variance_with_se(x: np.ndarray) -> tuple[float, float]:
    # sample variance about the known zero mean, SE from the sample fourth moment
    n = x.size
    x2 = x * x
    var = float(np.mean(x2))
    se = float(np.std(x2, ddof=1) / sqrt(n))
    return var, se


def _short_horizon(cfg: MisspecConfig, horizon: float) -> bool:
    a, b, _ = cfg.rates()
    return exp(-2.0 * min(a, b) * horizon) > 0.01


def terminal_mc(cfg: MisspecConfig, delta: float, horizon: float, n_paths: int, seed: int):
    """
    Terminal variances of the residual mu_hat - mu* and of mu_hat, from one set of paths.

    Returns a pair of :class:`McEstimate` (residual, filter). ``short_horizon``
    is set when transients have not died out, i.e. when
    exp(-2 min(a, b) horizon) > 0.01; the stationary formulas then do not apply.
    """
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    short = _short_horizon(cfg, horizon)
    if short:
        log_.warning("horizon %.3g years is short for rates %s; transients remain", horizon, cfg.rates()[:2])
    mu_star, mu_hat = simulate_filter_pairs(cfg, delta, horizon, n_paths, seed)
    res = McEstimate(*_variance_with_se((mu_hat - mu_star)[:, -1]), n_paths, short)
    filt = McEstimate(*_variance_with_se(mu_hat[:, -1]), n_paths, short)
    return res, filt


def residual_mc_check(cfg: MisspecConfig, delta: float, horizon: float, n_paths: int, seed: int) -> McEstimate:
    """Terminal variance of mu_hat - mu* over simulated paths, with its standard error."""
    return terminal_mc(cfg, delta, horizon, n_paths, seed)[0]


def filter_variance_mc_check(cfg: MisspecConfig, delta: float, horizon: float, n_paths: int, seed: int) -> McEstimate:
    """Terminal variance of mu_hat alone; same paths as :func:`residual_mc_check` for equal arguments."""
    return terminal_mc(cfg, delta, horizon, n_paths, seed)[1]


def detection_mc_check(
    cfg: MisspecConfig,
    x: float,
    delta: float,
    n_paths: int,
    seed: int,
    snapshots=(10.0, 15.0, 20.0, 25.0, 30.0),
    band: float = 0.1,
) -> DetectionEstimate:
    """
    Monte Carlo estimate of P(mu* > 0 | mu_hat = x).

    Samples are taken at several well-separated times on each path (treated
    as independent draws from the stationary law) and kept when mu_hat lies
    within ``band * x`` of ``x``; the estimate is the share of kept samples
    with a positive true trend.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    snapshots = list(snapshots)
    mu_star, mu_hat = simulate_filter_pairs(cfg, delta, max(snapshots), n_paths, seed, snapshots)
    keep = np.abs(mu_hat - x) <= band * x
    hits = mu_star[keep] > 0.0
    n = int(hits.size)
    if n == 0:
        raise ValueError("no samples fell in the conditioning band")
    p = float(np.mean(hits))
    return DetectionEstimate(p, sqrt(p * (1.0 - p) / n), n)
