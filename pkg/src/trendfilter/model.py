"""
Model parameters, the OU covariance kernel and exact simulation.

Continuous-time model::

    dS_t / S_t = mu_t dt + sigma_s dW^S_t
    d mu_t     = -lambda_mu mu_t dt + sigma_mu dW^mu_t,     mu_0 = 0

Sampled every ``delta`` years it becomes an AR(1)-plus-noise system::

    y_{k+1}  = mu_{k+1} + u_{k+1},   u ~ N(0, r),  r = sigma_s^2 / delta
    mu_{k+1} = phi mu_k + v_k,       v ~ N(0, q),  phi = exp(-lambda_mu delta)

with ``q = sigma_mu^2 / (2 lambda_mu) (1 - phi^2)``. The trend recursion is
the exact transition of the OU process, so simulation carries no
discretization bias.

Random streams
--------------
Every draw comes from a Philox (counter-based, 64-bit) generator keyed by
``(seed, path_index, stream)`` through :class:`numpy.random.SeedSequence`.
Path ``i`` of a Monte Carlo run is therefore the same whether paths are
generated one at a time, in blocks, or in parallel. Gaussians are produced
by inverse-CDF (``scipy.special.ndtri``) applied to the uniform stream; this
mapping is fixed and golden values in the tests depend on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, sqrt

import numpy as np
from scipy.signal import lfilter
from scipy.special import ndtri

from .errors import EmptySeriesError

__all__ = [
    "TrendParams",
    "MarketParams",
    "PathSample",
    "GaussianLaw",
    "ou_cov",
    "trend_stationary_std",
    "path_generator",
    "standard_normals",
    "simulate",
    "simulate_paths",
]

# stream ids inside one path
STREAM_TREND = 0
STREAM_NOISE = 1
STREAM_START = 2


@dataclass(frozen=True)
class TrendParams:
    """Parameters of the hidden OU trend: mean-reversion rate and volatility (both 1/year)."""

    lambda_mu: float
    sigma_mu: float

    def __post_init__(self):
        if not (self.lambda_mu > 0.0 and np.isfinite(self.lambda_mu)):
            raise ValueError(f"lambda_mu must be positive, got {self.lambda_mu}")
        if not (self.sigma_mu > 0.0 and np.isfinite(self.sigma_mu)):
            raise ValueError(f"sigma_mu must be positive, got {self.sigma_mu}")

    @property
    def stationary_variance(self) -> float:
        return self.sigma_mu**2 / (2.0 * self.lambda_mu)


@dataclass(frozen=True)
class MarketParams:
    """Full model configuration: trend parameters, spot volatility and observation step."""

    trend: TrendParams
    sigma_s: float
    delta: float = 1.0 / 252.0

    def __post_init__(self):
        if not (self.sigma_s > 0.0 and np.isfinite(self.sigma_s)):
            raise ValueError(f"sigma_s must be positive, got {self.sigma_s}")
        if not (self.delta > 0.0 and np.isfinite(self.delta)):
            raise ValueError(f"delta must be positive, got {self.delta}")

    @classmethod
    def from_values(cls, lambda_mu, sigma_mu, sigma_s, delta=1.0 / 252.0) -> "MarketParams":
        return cls(TrendParams(float(lambda_mu), float(sigma_mu)), float(sigma_s), float(delta))

    @property
    def lambda_mu(self) -> float:
        return self.trend.lambda_mu

    @property
    def sigma_mu(self) -> float:
        return self.trend.sigma_mu

    @property
    def phi(self) -> float:
        """AR(1) coefficient exp(-lambda_mu delta)."""
        return exp(-self.trend.lambda_mu * self.delta)

    @property
    def q(self) -> float:
        """Variance of the trend innovation v_k."""
        lam = self.trend.lambda_mu
        # -expm1 keeps precision when lambda*delta is tiny
        return self.trend.sigma_mu**2 / (2.0 * lam) * -np.expm1(-2.0 * lam * self.delta)

    @property
    def r(self) -> float:
        """Variance of the observation noise u_k."""
        return self.sigma_s**2 / self.delta

    def with_trend(self, lambda_mu: float, sigma_mu: float) -> "MarketParams":
        return MarketParams(TrendParams(lambda_mu, sigma_mu), self.sigma_s, self.delta)


@dataclass(frozen=True)
class GaussianLaw:
    """A scalar normal law N(mean, variance)."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError(f"variance must be nonnegative, got {self.variance}")

    @property
    def std(self) -> float:
        return sqrt(self.variance)

    def logpdf(self, x):
        return -0.5 * (np.log(2.0 * np.pi * self.variance) + (x - self.mean) ** 2 / self.variance)


@dataclass(frozen=True)
class PathSample:
    """One simulated path: hidden trend ``mu[k]`` and returns ``y[k]`` at t = (k+1) delta."""

    mu: np.ndarray
    y: np.ndarray
    n: int
    seed: int
    delta: float

    @property
    def t(self) -> np.ndarray:
        return self.delta * np.arange(1, self.n + 1)


def ou_cov(trend: TrendParams, s: float, t: float) -> float:
    """
    Covariance Cov(mu_s, mu_t) of the OU trend started at mu_0 = 0.

    ``sigma^2/(2 lambda) * exp(-lambda (s+t)) * (exp(2 lambda min(s,t)) - 1)``,
    evaluated as ``sigma^2/(2 lambda) * (exp(-lambda|s-t|) - exp(-lambda(s+t)))``
    which is the same quantity without overflow for large times.
    """
    if s < 0 or t < 0:
        raise ValueError("times must be nonnegative")
    lam = trend.lambda_mu
    return trend.stationary_variance * (exp(-lam * abs(s - t)) - exp(-lam * (s + t)))


def trend_stationary_std(trend: TrendParams) -> float:
    return trend.sigma_mu / sqrt(2.0 * trend.lambda_mu)


def path_generator(seed: int, path_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent Philox generator for one (seed, path, stream) triple."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def standard_normals(gen: np.random.Generator, size) -> np.ndarray:
    """N(0,1) draws by inverse CDF; the half-ulp shift keeps uniforms inside (0, 1)."""
    u = gen.random(size) + 2.0**-54
    return ndtri(u)


def _stream_block(seed, path_indices, n, stream) -> np.ndarray:
    out = np.empty((len(path_indices), n))
    for row, idx in enumerate(path_indices):
        out[row] = standard_normals(path_generator(seed, idx, stream), n)
    return out


def simulate_paths(
    params: MarketParams,
    n: int,
    seed: int,
    path_indices,
    stationary_start: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Simulate several paths at once.

    Parameters
    ----------
    params : MarketParams
    n : int
        Number of steps per path.
    seed : int
        Master seed.
    path_indices : sequence of int
        Which paths to produce; row ``j`` of the output is path ``path_indices[j]``.
    stationary_start : bool
        Draw mu_0 from the stationary law instead of starting at 0.

    Returns
    -------
    mu, y : ndarray, shape (len(path_indices), n)
    """
    if n < 1:
        raise EmptySeriesError("path length must be at least 1")
    path_indices = list(path_indices)
    phi = params.phi
    v = sqrt(params.q) * _stream_block(seed, path_indices, n, STREAM_TREND)
    u = sqrt(params.r) * _stream_block(seed, path_indices, n, STREAM_NOISE)
    if stationary_start:
        mu0 = np.array(
            [standard_normals(path_generator(seed, i, STREAM_START), 1)[0] for i in path_indices]
        ) * sqrt(params.trend.stationary_variance)
    else:
        mu0 = np.zeros(len(path_indices))
    # mu_k = phi mu_{k-1} + v_{k-1}; the initial condition enters as phi*mu_0
    mu = lfilter([1.0], [1.0, -phi], v, axis=1, zi=(phi * mu0)[:, None])[0]
    return mu, mu + u


def simulate(
    params: MarketParams,
    n: int,
    seed: int,
    stationary_start: bool = False,
    path_index: int = 0,
) -> PathSample:
    """Simulate one path of ``n`` steps; output is bit-identical for identical arguments."""
    mu, y = simulate_paths(params, n, seed, [path_index], stationary_start)
    return PathSample(mu=mu[0], y=y[0], n=n, seed=seed, delta=params.delta)
