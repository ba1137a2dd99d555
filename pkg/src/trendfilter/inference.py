"""
Spectral density, Whittle Fisher information, Cramer-Rao horizons and MLE.

The return series is a stationary ARMA(1,1) once the trend has forgotten its
start, with spectral density::

    f(w) = (q + r (1 + phi^2) - 2 phi r cos w) / (1 + phi^2 - 2 phi cos w)
         = r + q / (1 + phi^2 - 2 phi cos w)

normalised so that gamma(k) = 1/(2 pi) * int_{-pi}^{pi} f(w) cos(k w) dw.
The per-observation Fisher information of theta = (lambda_mu, sigma_mu) is
Whittle's integral 1/(4 pi) * int f^-2 df/dtheta_i df/dtheta_j dw.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from math import exp, inf, log, pi

import numpy as np
from scipy.optimize import minimize

from .errors import EmptySeriesError, PrecisionError
from .likelihood import loglik_kalman
from .model import MarketParams, TrendParams

__all__ = [
    "PARAM_NAMES",
    "FisherInfo",
    "SpectralDensity",
    "FitResult",
    "spectral_density",
    "spectral_partials",
    "autocov_y",
    "integrate_even",
    "spectral_peak",
    "fisher_info",
    "crb_horizon",
    "mle_fit",
    "t_test_horizon",
]

log_ = logging.getLogger(__name__)

PARAM_NAMES = ("lambda", "sigma_mu")
OBS_PER_YEAR = 252
FD_REL_STEP = 1e-6
LOG_PARAM_BOUND = 12.0


@dataclass(frozen=True)
class FisherInfo:
    """Per-observation Fisher information, parameter order (lambda_mu, sigma_mu)."""

    i1: np.ndarray

    def total(self, n_obs: int) -> np.ndarray:
        """Information carried by ``n_obs`` observations."""
        return n_obs * self.i1

    def crb(self, n_obs: int = 1) -> np.ndarray:
        """Cramer-Rao bound (inverse information) for ``n_obs`` observations."""
        return np.linalg.inv(self.total(n_obs))


@dataclass(frozen=True)
class SpectralDensity:
    params: MarketParams

    def __call__(self, omega):
        return spectral_density(self.params, omega)


@dataclass
class FitResult:
    params: TrendParams
    loglik: float
    converged: bool
    at_boundary: bool
    n_iter: int
    loglik_init: float


def _ar_denominator(params: MarketParams, omega):
    # 1 + phi^2 - 2 phi cos w, written as (1 - phi)^2 + 4 phi sin^2(w/2): near
    # w = 0 the plain form is ~(lambda delta)^2 and cancels most digits
    one_minus_phi = -np.expm1(-params.lambda_mu * params.delta)
    half = np.sin(0.5 * np.asarray(omega, dtype=float))
    return one_minus_phi * one_minus_phi + 4.0 * params.phi * half * half


def spectral_density(params: MarketParams, omega):
    """Spectral density of the return series at angular frequency ``omega`` (radians)."""
    return params.r + _trend_part(params, omega)


def _trend_part(params: MarketParams, omega):
    # f - r; r = sigma_s^2/delta does not depend on theta
    return params.q / _ar_denominator(params, omega)


def _fd_partials(params: MarketParams, omega, rel_step: float):
    # Differencing f itself would lose ~eps * r / h to roundoff because the
    # theta-free noise level r dominates f; the constant cancels exactly.
    lam, sig = params.lambda_mu, params.sigma_mu
    hl, hs = rel_step * lam, rel_step * sig
    d_lam = (
        _trend_part(params.with_trend(lam + hl, sig), omega)
        - _trend_part(params.with_trend(lam - hl, sig), omega)
    ) / (2.0 * hl)
    d_sig = (
        _trend_part(params.with_trend(lam, sig + hs), omega)
        - _trend_part(params.with_trend(lam, sig - hs), omega)
    ) / (2.0 * hs)
    return d_lam, d_sig


def _analytic_partials(params: MarketParams, omega):
    lam, sig, dt = params.lambda_mu, params.sigma_mu, params.delta
    phi, q = params.phi, params.q
    half = np.sin(0.5 * np.asarray(omega, dtype=float))
    den = _ar_denominator(params, omega)
    dq_dlam = -q / lam + sig * sig * dt * phi * phi / lam
    # d/dlam (1 + phi^2 - 2 phi cos w) = -2 delta phi (phi - cos w)
    phi_minus_cos = np.expm1(-lam * dt) + 2.0 * half * half
    dden_dlam = -2.0 * dt * phi * phi_minus_cos
    d_lam = dq_dlam / den - q * dden_dlam / den**2
    d_sig = (2.0 * q / sig) / den
    return d_lam, d_sig


def spectral_partials(params: MarketParams, omega, method: str = "fd", rel_step: float = FD_REL_STEP):
    """
    Partial derivatives of the spectral density w.r.t. (lambda_mu, sigma_mu).

    ``method="fd"`` uses central differences with a relative step;
    ``method="analytic"`` differentiates ``r + q / (1 + phi^2 - 2 phi cos w)``.
    """
    if method == "fd":
        return _fd_partials(params, omega, rel_step)
    if method == "analytic":
        return _analytic_partials(params, omega)
    raise ValueError(f"unknown method {method!r}")


def autocov_y(params: MarketParams, lag: int) -> float:
    """Stationary autocovariance of the returns at a nonnegative integer lag."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    v = params.trend.stationary_variance
    if lag == 0:
        return v + params.r
    return exp(-params.lambda_mu * params.delta * lag) * v


def _simpson(values: np.ndarray, h: float) -> np.ndarray:
    # composite Simpson along the last axis; len-1 must be even
    return h / 3.0 * (
        values[..., 0] + values[..., -1] + 4.0 * values[..., 1:-1:2].sum(-1) + 2.0 * values[..., 2:-1:2].sum(-1)
    )


PEAK_SPREAD = 32.0


def _peak_rules(peak: float):
    """
    Node maps u -> (w, dw/du) for a spike of half-width ~``peak`` at w = 0.

    Near the spike, ``tan(w/2) = peak * tan(u/2)`` flattens AR(1)-type
    factors 1 / ((1 - phi)^2 + 4 phi sin^2(w/2)). That map alone stretches the
    far end by 1/peak, so for narrow spikes it is used only up to
    ``w_c = 2 arctan(PEAK_SPREAD * peak)`` and the rest, [w_c, pi], is covered
    by ``w = w_c e^s``, under which the 1/w^2 tail and flat parts are smooth.
    Each rule is (u_max, map).
    """

    def tan_map(u):
        c, s = np.cos(0.5 * u), np.sin(0.5 * u)
        return 2.0 * np.arctan2(peak * s, c), peak / (c * c + peak * peak * s * s)

    if PEAK_SPREAD * peak >= 1.0:
        return [(pi, tan_map)]
    w_c = 2.0 * np.arctan(PEAK_SPREAD * peak)
    u_c = 2.0 * np.arctan(PEAK_SPREAD)

    def exp_map(v):
        w = w_c * np.exp(v)
        return w, w

    return [(u_c, tan_map), (log(pi / w_c), exp_map)]


def integrate_even(
    func,
    tol: float = 1e-10,
    start_intervals: int = 1024,
    max_intervals: int = 2**22,
    peak: float | None = None,
):
    """
    Integral over [-pi, pi] of an even function, as twice the integral over [0, pi].

    ``func`` maps an array of nodes to an array whose last axis runs over the
    nodes (several integrands may be stacked in leading axes). Composite
    Simpson with interval counts doubling from ``start_intervals``; each pair
    of Simpson values is Richardson-extrapolated and iteration stops once two
    successive extrapolated values differ by less than ``tol`` relative to the
    largest component.

    ``peak`` in (0, 1] switches to node maps that resolve a spike of
    half-width ~``peak`` at w = 0 (see :func:`spectral_peak`); for an AR(1)
    factor with coefficient phi use ``peak = (1 - phi) / (1 + phi)``.
    """
    if peak is not None and not 0.0 < peak <= 1.0:
        raise ValueError("peak must lie in (0, 1]")
    rules = [(pi, None)] if peak is None else _peak_rules(peak)

    def simpson_all(m):
        total = 0.0
        for u_max, node_map in rules:
            u = np.linspace(0.0, u_max, m + 1)
            if node_map is None:
                vals = np.asarray(func(u))
            else:
                w, jac = node_map(u)
                vals = np.asarray(func(w)) * jac
            total = total + _simpson(vals, u_max / m)
        return total

    m = start_intervals
    prev_s = None
    prev_r = None
    while m <= max_intervals:
        s = simpson_all(m)
        if prev_s is not None:
            rich = s + (s - prev_s) / 15.0
            if prev_r is not None:
                scale = max(np.max(np.abs(rich)), np.finfo(float).tiny)
                if np.max(np.abs(rich - prev_r)) <= tol * scale:
                    return 2.0 * rich
            prev_r = rich
        prev_s = s
        m *= 2
    raise PrecisionError(f"quadrature did not converge to {tol:g} within {max_intervals} intervals")


def spectral_peak(params: MarketParams) -> float:
    """Substitution parameter for :func:`integrate_even` matched to the AR(1) pole."""
    phi = params.phi
    return -np.expm1(-params.lambda_mu * params.delta) / (1.0 + phi)


def fisher_info(params: MarketParams, method: str = "fd", rel_step: float = FD_REL_STEP, tol: float = 1e-10) -> FisherInfo:
    """
    Whittle per-observation Fisher information I_1(theta) for theta = (lambda_mu, sigma_mu).

    Raises
    ------
    PrecisionError
        If the quadrature does not settle; the acceptance limit on successive
        refinements is 1e-8 relative when ``tol`` is tightened past reach.
    """

    def integrand(w):
        f = spectral_density(params, w)
        d_lam, d_sig = spectral_partials(params, w, method, rel_step)
        a, b = d_lam / f, d_sig / f
        return np.stack([a * a, a * b, b * b])

    try:
        vals = integrate_even(integrand, tol=tol, peak=spectral_peak(params))
    except PrecisionError:
        # accept a looser but still useful estimate before giving up
        vals = integrate_even(integrand, tol=1e-8, peak=spectral_peak(params))
        log_.warning("Fisher quadrature only reached 1e-8 relative accuracy for %s", params)
    vals = vals / (4.0 * pi)
    i1 = np.array([[vals[0], vals[1]], [vals[1], vals[2]]])
    return FisherInfo(i1)


def _param_index(param) -> int:
    if isinstance(param, str):
        key = param.lower().replace("-", "_")
        if key in ("lambda", "lambda_mu"):
            return 0
        if key in ("sigma", "sigma_mu"):
            return 1
        raise ValueError(f"unknown parameter {param!r}")
    if param in (0, 1):
        return int(param)
    raise ValueError(f"unknown parameter index {param!r}")


def crb_horizon(
    params: MarketParams,
    target_std: float,
    param="lambda",
    info: FisherInfo | None = None,
    obs_per_year: int = OBS_PER_YEAR,
) -> float:
    """
    Years of observations needed before the Cramer-Rao standard deviation of one
    parameter falls to ``target_std``: ``(I_1^{-1})_{ii} / (obs_per_year * x^2)``.
    """
    if not target_std > 0:
        raise ValueError("target_std must be positive")
    i = _param_index(param)
    info = info or fisher_info(params)
    return float(np.linalg.inv(info.i1)[i, i] / (obs_per_year * target_std**2))


def mle_fit(
    y,
    sigma_s: float,
    delta: float,
    init: TrendParams,
    max_iter: int = 500,
    xatol: float = 1e-8,
) -> FitResult:
    """
    Maximum-likelihood estimate of (lambda_mu, sigma_mu) with sigma_s known.

    Nelder-Mead on (log lambda_mu, log sigma_mu) maximising the Kalman
    log-likelihood; stops when the simplex spans less than ``xatol`` in
    log-space or after ``max_iter`` iterations. ``at_boundary`` is set when
    either log-parameter exceeds 12 in magnitude, which happens on degenerate
    data (e.g. a series with no trend signal at all).
    """
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise EmptySeriesError("series is empty")
    if y.size < 10:
        raise ValueError("need at least 10 observations to fit")

    def negloglik(x):
        if np.any(np.abs(x) > 3.0 * LOG_PARAM_BOUND) or not np.all(np.isfinite(x)):
            return inf
        p = MarketParams.from_values(exp(x[0]), exp(x[1]), sigma_s, delta)
        val = loglik_kalman(y, p)
        return -val if np.isfinite(val) else inf

    x0 = np.array([log(init.lambda_mu), log(init.sigma_mu)])
    simplex = np.array([x0, x0 + [0.5, 0.0], x0 + [0.0, 0.5]])
    f0 = -negloglik(x0)
    res = minimize(
        negloglik,
        x0,
        method="Nelder-Mead",
        options={
            "initial_simplex": simplex,
            "maxiter": max_iter,
            "maxfev": 10 * max_iter,
            "xatol": xatol,
            "fatol": inf,
        },
    )
    best = TrendParams(exp(res.x[0]), exp(res.x[1]))
    return FitResult(
        params=best,
        loglik=float(-res.fun),
        converged=bool(res.success),
        at_boundary=bool(np.any(np.abs(res.x) > LOG_PARAM_BOUND)),
        n_iter=int(res.nit),
        loglik_init=float(f0),
    )


def t_test_horizon(sigma_s: float, mu_hat: float, q_alpha: float) -> float:
    """
    Years needed for a constant-drift t-test to call ``mu_hat`` significant:
    q_alpha^2 sigma_s^2 / mu_hat^2. A zero estimate never becomes significant
    and returns ``inf``.
    """
    if mu_hat == 0:
        return inf
    return q_alpha**2 * sigma_s**2 / mu_hat**2
