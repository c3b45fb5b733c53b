"""scikit-learn style wrappers for the two fitting problems in the package.

* :class:`PowerLawRegressor` fits ``y = A N^slope`` on a log-log scale.
* :class:`PhononCountReconstructor` fits a phonon distribution to a shelving
  signal ``P_down(t)``.

Both follow the estimator protocol (``get_params``/``set_params``, ``fit``
returning ``self``, fitted attributes with a trailing underscore), so they
work with ``sklearn.base.clone`` and ``GridSearchCV``.
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .decoherence import power_law_fit
from .readout import (
    Channel,
    ReadoutConfig,
    SignalTrace,
    rabi_freqs,
    reconstruct,
)


class PowerLawRegressor(RegressorMixin, BaseEstimator):
    """Least-squares power law ``y = exp(intercept) * N**slope``.

    Parameters
    ----------
    n_min, n_max : int or None
        Only samples with ``n_min <= N <= n_max`` enter the fit.
    """

    def __init__(self, n_min=None, n_max=None):
        self.n_min = n_min
        self.n_max = n_max

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=3, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("PowerLawRegressor expects a single feature column N")
        n = X[:, 0]
        keep = np.ones_like(n, dtype=bool)
        if self.n_min is not None:
            keep &= n >= self.n_min
        if self.n_max is not None:
            keep &= n <= self.n_max
        fit = power_law_fit(n[keep], y[keep])
        self.slope_ = fit.slope
        self.intercept_ = fit.intercept
        self.r_squared_ = fit.r_squared
        self.slope_stderr_ = fit.slope_stderr
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "slope_")
        X = check_array(X)
        return np.exp(self.intercept_) * X[:, 0] ** self.slope_


class PhononCountReconstructor(BaseEstimator):
    """Non-negative fit of ``P_n`` to a single-channel shelving signal.

    ``fit(t, p_down)`` takes sample times (seconds, one column) and the
    measured ``P_down``; ``predict(t)`` evaluates the fitted model signal.

    Attributes
    ----------
    p_n_ : ndarray of shape (n_max,)
    ambiguity_flags_ : ndarray of bool
    residual_norm_, condition_number_ : float
    """

    def __init__(self, eta=0.2, omega0=2 * math.pi * 50e3, n_max=25, channel="carrier"):
        self.eta = eta
        self.omega0 = omega0
        self.n_max = n_max
        self.channel = channel

    def _config(self, times):
        return ReadoutConfig(eta=self.eta, omega0=self.omega0, n_max=self.n_max, sample_times=times)

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
        t = X[:, 0]
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        cfg = self._config(t)
        res = reconstruct(SignalTrace(t, y, Channel(self.channel)), cfg)
        self.p_n_ = res.p_n_hat
        self.ambiguity_flags_ = res.ambiguity_flags
        self.residual_norm_ = res.residual_norm
        self.condition_number_ = res.condition_number
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "p_n_")
        t = check_array(X)[:, 0]
        freqs = rabi_freqs(self.channel, self.n_max, ReadoutConfig(eta=self.eta, omega0=self.omega0))
        return 0.5 * (1.0 + np.cos(np.outer(t, freqs)) @ self.p_n_)

    def score(self, X, y):
        """Negative RMS residual of the model signal."""
        y = np.asarray(y, dtype=float)
        return -float(np.sqrt(np.mean((self.predict(X) - y) ** 2)))
