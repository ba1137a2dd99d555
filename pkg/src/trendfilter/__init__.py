"""Trend filtering for an asset whose drift is a hidden Ornstein-Uhlenbeck process."""

from .errors import EmptySeriesError, NumericalConditioningError, PrecisionError
from .inference import (
    FisherInfo,
    FitResult,
    SpectralDensity,
    autocov_y,
    crb_horizon,
    fisher_info,
    mle_fit,
    spectral_density,
    t_test_horizon,
)
from .kalman import (
    FilterResult,
    KalmanState,
    SteadyState,
    continuous_filter,
    continuous_filter_step,
    ewma_filter,
    kalman_filter,
    kalman_step,
    steady_state,
)
from .likelihood import CovModel, TridiagPrecision, cov_matrix_y, loglik_direct, loglik_kalman, loglik_recursive
from .misspec import (
    MisspecConfig,
    conditional_trend_law,
    filter_variance_asym,
    filter_variance_t,
    normal_cdf,
    positive_trend_prob,
    residual_mc_check,
    residual_std_ratio_wellspec,
    residual_variance_asym,
)
from .model import GaussianLaw, MarketParams, PathSample, TrendParams, ou_cov, simulate, trend_stationary_std

__version__ = "0.1.0"
