"""
Scalar Kalman filtering of the OU trend.

Discrete recursions (one step, a-priori then a-posteriori)::

    Gamma_pred = phi^2 Gamma + q
    K          = Gamma_pred / (Gamma_pred + r)
    mu_hat'    = phi mu_hat + K (y - phi mu_hat)
    Gamma'     = (1 - K) Gamma_pred

The one-step predictive law of the next return is N(phi mu_hat, Gamma_pred + r),
which is what the prediction-error likelihood consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, log, pi, sqrt

import numpy as np
from scipy.signal import lfilter

from .errors import EmptySeriesError
from .model import GaussianLaw, MarketParams, TrendParams

__all__ = [
    "KalmanState",
    "SteadyState",
    "FilterResult",
    "beta_factor",
    "kalman_step",
    "gain_schedule",
    "kalman_filter",
    "steady_state",
    "ewma_filter",
    "ewma_with_gain",
    "continuous_filter_step",
    "continuous_filter",
]

_LOG_2PI = log(2.0 * pi)


@dataclass(frozen=True)
class KalmanState:
    """A-posteriori estimate ``mu_hat`` and its error variance ``gamma``."""

    mu_hat: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be nonnegative, got {self.gamma}")

    @classmethod
    def stationary(cls, params: MarketParams) -> "KalmanState":
        """Prior for a stationary start: mu_hat = 0 with the trend's stationary variance."""
        return cls(0.0, params.trend.stationary_variance)


@dataclass(frozen=True)
class SteadyState:
    gamma_inf: float
    k_inf: float
    beta: float
    p_inf: float


@dataclass
class FilterResult:
    """
    Output of :func:`kalman_filter`.

    ``mu_hat`` and ``gamma`` hold the a-posteriori state after each observation;
    ``pred_mean``/``pred_var`` hold the one-step predictive law of each
    observation. For batched input the arrays have shape (M, N) and ``loglik``
    has shape (M,).
    """

    mu_hat: np.ndarray
    gamma: np.ndarray
    pred_mean: np.ndarray
    pred_var: np.ndarray
    loglik: float | np.ndarray

    def states(self) -> list[KalmanState]:
        return [KalmanState(float(m), float(g)) for m, g in zip(self.mu_hat, self.gamma)]


def beta_factor(trend: TrendParams, sigma_s: float) -> float:
    """sqrt(1 + sigma_mu^2 / (lambda_mu^2 sigma_s^2)), always > 1."""
    ratio = trend.sigma_mu / (trend.lambda_mu * sigma_s)
    return sqrt(1.0 + ratio * ratio)


def kalman_step(state: KalmanState, y: float, params: MarketParams) -> tuple[KalmanState, GaussianLaw]:
    """Advance the filter by one observation; also return that observation's predictive law."""
    phi, q, r = params.phi, params.q, params.r
    gamma_pred = phi * phi * state.gamma + q
    gain = gamma_pred / (gamma_pred + r)
    mean_pred = phi * state.mu_hat
    new_state = KalmanState(mean_pred + gain * (y - mean_pred), (1.0 - gain) * gamma_pred)
    return new_state, GaussianLaw(mean_pred, gamma_pred + r)


def gain_schedule(params: MarketParams, n: int, gamma0: float = 0.0):
    """
    Data-independent part of the filter.

    Returns arrays ``gamma`` (a-posteriori variance), ``gain`` and ``pred_var``
    (variance of the one-step prediction of y), each of length ``n``. Once the
    Riccati recursion reaches a bitwise fixed point the remaining entries are
    filled without iterating.
    """
    phi2, q, r = params.phi**2, params.q, params.r
    gamma = np.empty(n)
    gain = np.empty(n)
    pred_var = np.empty(n)
    g = float(gamma0)
    for k in range(n):
        gp = phi2 * g + q
        kk = gp / (gp + r)
        g_new = (1.0 - kk) * gp
        gamma[k], gain[k], pred_var[k] = g_new, kk, gp + r
        if g_new == g:
            gamma[k:], gain[k:], pred_var[k:] = g_new, kk, gp + r
            break
        g = g_new
    return gamma, gain, pred_var


def kalman_filter(y, params: MarketParams, init: KalmanState | None = None) -> FilterResult:
    """
    Run the filter over a return series and accumulate the prediction-error log-likelihood.

    Parameters
    ----------
    y : array_like, shape (N,) or (M, N)
        Observed returns (1/year). A 2-D input filters M independent series
        sharing the same parameters.
    params : MarketParams
    init : KalmanState, optional
        State before the first observation; defaults to mu_hat = 0, Gamma = 0
        (trend known to start at zero).
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] == 0 or y.size == 0:
        raise EmptySeriesError("cannot filter an empty series")
    if y.ndim not in (1, 2):
        raise ValueError("y must be 1-D or 2-D")
    init = init or KalmanState()
    n = y.shape[-1]
    phi = params.phi
    gamma, gain, pred_var = gain_schedule(params, n, init.gamma)
    logdet_part = float(np.sum(np.log(pred_var)))

    if y.ndim == 1:
        mu_hat = np.empty(n)
        pred_mean = np.empty(n)
        m = float(init.mu_hat)
        quad = 0.0
        for k, (yk, kk, sk) in enumerate(zip(y.tolist(), gain.tolist(), pred_var.tolist())):
            mp = phi * m
            e = yk - mp
            quad += e * e / sk
            m = mp + kk * e
            pred_mean[k] = mp
            mu_hat[k] = m
        loglik = -0.5 * (n * _LOG_2PI + logdet_part + quad)
        return FilterResult(mu_hat, gamma, pred_mean, pred_var, loglik)

    rows = y.shape[0]
    mu_hat = np.empty_like(y)
    pred_mean = np.empty_like(y)
    m = np.full(rows, float(init.mu_hat))
    quad = np.zeros(rows)
    for k in range(n):
        mp = phi * m
        e = y[:, k] - mp
        quad += e * e / pred_var[k]
        m = mp + gain[k] * e
        pred_mean[:, k] = mp
        mu_hat[:, k] = m
    loglik = -0.5 * (n * _LOG_2PI + logdet_part + quad)
    return FilterResult(
        mu_hat,
        np.broadcast_to(gamma, y.shape),
        pred_mean,
        np.broadcast_to(pred_var, y.shape),
        loglik,
    )


def steady_state(params: MarketParams) -> SteadyState:
    """
    Stationary regime of the discrete filter plus the continuous-time constants.

    Gamma_inf solves Gamma = (1 - K) (phi^2 Gamma + q). With
    ``f = (r + sigma^2/(2 lambda)) (1 - phi^2)`` and
    ``h = 2 sigma_s^2 sigma^2 / (lambda delta) (phi^2 - phi^4)`` it is
    ``(sqrt(f^2 + h) - f) / (2 phi^2)``; the numerator is evaluated as
    ``h / (sqrt(f^2 + h) + f)`` to avoid cancellation.
    """
    lam, sig = params.lambda_mu, params.sigma_mu
    s2, dt = params.sigma_s**2, params.delta
    phi2 = exp(-2.0 * lam * dt)
    one_minus_phi2 = -np.expm1(-2.0 * lam * dt)
    f = (s2 / dt + sig * sig / (2.0 * lam)) * one_minus_phi2
    h = 2.0 * s2 * sig * sig / (lam * dt) * phi2 * one_minus_phi2
    g = sqrt(f * f + h)
    gamma_inf = h / (g + f) / (2.0 * phi2)
    # a-posteriori variance equals r*K at the fixed point (and at every step)
    gamma_pred = phi2 * gamma_inf + params.q
    k_inf = gamma_pred / (gamma_pred + params.r)
    beta = beta_factor(params.trend, params.sigma_s)
    p_inf = s2 * lam * (beta - 1.0)
    return SteadyState(gamma_inf=gamma_inf, k_inf=k_inf, beta=beta, p_inf=p_inf)


def ewma_filter(y, params: MarketParams) -> np.ndarray:
    """
    Steady-state filter as a corrected exponential average.

    ``mu_hat_{n+1} = phi (1 - K_inf) mu_hat_n + K_inf y_{n+1}`` from mu_hat_0 = 0,
    i.e. ``K_inf * sum_i (phi (1 - K_inf))^i y_{n+1-i}``. Works along the last axis.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptySeriesError("cannot filter an empty series")
    k_inf = steady_state(params).k_inf
    return ewma_with_gain(y, params.phi, k_inf)


def ewma_with_gain(y, phi: float, gain: float) -> np.ndarray:
    """Exponential-average filter with an arbitrary constant gain."""
    return lfilter([gain], [1.0, -phi * (1.0 - gain)], np.asarray(y, dtype=float), axis=-1)


def continuous_filter_step(mu_hat, dy, dt: float, theta: TrendParams, sigma_s: float):
    """
    One Euler step of the continuous steady-state filter built from beliefs ``theta``::

        mu_hat' = mu_hat - lambda beta mu_hat dt + lambda (beta - 1) dy

    ``dy`` is the relative price increment dS/S over the step. Accepts arrays.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    b = beta_factor(theta, sigma_s)
    lam = theta.lambda_mu
    return mu_hat - lam * b * mu_hat * dt + lam * (b - 1.0) * dy


def continuous_filter(y, delta: float, theta: TrendParams, sigma_s: float, mu_hat0: float = 0.0) -> np.ndarray:
    """
    Apply :func:`continuous_filter_step` along the last axis of a return series.

    ``y`` holds returns per unit time, so the increment fed to each step is
    ``y * delta``. Element k of the output is the estimate after observation k.
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptySeriesError("cannot filter an empty series")
    b = beta_factor(theta, sigma_s)
    lam = theta.lambda_mu
    decay = 1.0 - lam * b * delta
    gain = lam * (b - 1.0) * delta
    if mu_hat0 == 0.0:
        return lfilter([gain], [1.0, -decay], y, axis=-1)
    zi_shape = y.shape[:-1] + (1,)
    zi = np.full(zi_shape, decay * mu_hat0)
    return lfilter([gain], [1.0, -decay], y, axis=-1, zi=zi)[0]
