"""scikit-learn style wrappers around the functional API."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._validation import check_octave_range, check_series
from .estimate import DEFAULT_CONFIDENCE, bootstrap_ci, fit_scaling
from .flows import TAIL_QUANTILES, TAIL_RESAMPLES, partial_correlations, tail_index
from .leaders import DEFAULT_GAMMA, compute_leaders, cumulants
from .logscale import CUMULANT_KINDS, LOG2_SD
from .wavelet import DEFAULT_WAVELET, N_MIN, dwt, structure_fn


def _pyramid_and_ld(x, kind, wavelet, gamma, n_min, delta0):
    pyr = dwt(x, wavelet, delta0=delta0)
    if kind == LOG2_SD:
        return pyr, structure_fn(pyr, n_min)
    if kind not in CUMULANT_KINDS:
        raise ValueError(f"kind must be {LOG2_SD!r} or one of {CUMULANT_KINDS}")
    lp = compute_leaders(pyr, gamma)
    p = CUMULANT_KINDS.index(kind) + 1
    return lp, cumulants(lp, p, n_min)[p - 1]


class ScalingEstimator(BaseEstimator):
    """Scaling exponent of a single series over a fixed octave range.

    ``fit(x)`` takes a 1-D series.  ``kind`` selects the logscale diagram
    (``log2_Sd`` gives H, ``C_1``/``C_2``/``C_3`` give c1/c2/c3).
    ``n_resamples=0`` uses the weighted regression CI; otherwise a
    time-scale block bootstrap is run.
    """

    def __init__(self, kind=LOG2_SD, j1=6, j2=15, wavelet=DEFAULT_WAVELET, gamma=DEFAULT_GAMMA,
                 n_resamples=0, confidence=DEFAULT_CONFIDENCE, n_min=N_MIN, delta0=1.0,
                 random_state=None):
        self.kind = kind
        self.j1 = j1
        self.j2 = j2
        self.wavelet = wavelet
        self.gamma = gamma
        self.n_resamples = n_resamples
        self.confidence = confidence
        self.n_min = n_min
        self.delta0 = delta0
        self.random_state = random_state

    def fit(self, X, y=None):
        x = check_series(X, min_length=2)
        j1, j2 = check_octave_range((self.j1, self.j2))
        source, ld = _pyramid_and_ld(x, self.kind, self.wavelet, self.gamma, self.n_min,
                                     self.delta0)
        if self.n_resamples:
            est = bootstrap_ci(source, self.kind, j1, j2, self.n_resamples,
                               seed=self.random_state, confidence=self.confidence, ld=ld)
        else:
            est = fit_scaling(ld, j1, j2, self.confidence)
        self.ld_ = ld
        self.estimate_ = est
        self.value_ = est.value
        self.ci_ = (est.ci_low, est.ci_high)
        return self


class ScalingFeatures(TransformerMixin, BaseEstimator):
    """Map each row of ``X`` (one series per row) to ``[H, c1, c2]``."""

    def __init__(self, j1=6, j2=15, wavelet=DEFAULT_WAVELET, gamma=DEFAULT_GAMMA, n_min=N_MIN):
        self.j1 = j1
        self.j2 = j2
        self.wavelet = wavelet
        self.gamma = gamma
        self.n_min = n_min

    feature_names = ("H", "c1", "c2")

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True, dtype=np.float64)
        check_octave_range((self.j1, self.j2))
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, ensure_2d=True, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} samples per row, expected {self.n_features_in_}")
        out = np.empty((X.shape[0], 3))
        for i, row in enumerate(X):
            pyr = dwt(row, self.wavelet)
            out[i, 0] = fit_scaling(structure_fn(pyr, self.n_min), self.j1, self.j2).value
            c = cumulants(compute_leaders(pyr, self.gamma), 2, self.n_min)
            out[i, 1] = fit_scaling(c[0], self.j1, self.j2).value
            out[i, 2] = fit_scaling(c[1], self.j1, self.j2).value
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.feature_names, dtype=object)


class TailIndexEstimator(BaseEstimator):
    """Flow-size tail index; ``fit`` takes a 1-D array of sizes."""

    def __init__(self, q_lo=TAIL_QUANTILES[0], q_hi=TAIL_QUANTILES[1],
                 n_resamples=TAIL_RESAMPLES, random_state=None):
        self.q_lo = q_lo
        self.q_hi = q_hi
        self.n_resamples = n_resamples
        self.random_state = random_state

    def fit(self, X, y=None):
        sizes = check_series(X, min_length=1)
        est = tail_index(sizes, self.q_lo, self.q_hi, self.n_resamples, self.random_state)
        self.estimate_ = est
        self.alpha_ = est.alpha
        self.ci_ = est.ci
        self.hill_alpha_ = est.hill_alpha
        self.implied_h_ = est.implied_h
        return self


class PartialCorrelation(BaseEstimator):
    """Direct and partial correlations; ``X`` is ``(n_observations, n_variables)``."""

    def __init__(self, confidence=0.95):
        self.confidence = confidence

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True, dtype=np.float64, ensure_min_samples=3)
        res = partial_correlations(X.T, confidence=self.confidence)
        self.result_ = res
        self.direct_ = res.direct
        self.partial_ = res.partial
        self.n_features_in_ = X.shape[1]
        return self
