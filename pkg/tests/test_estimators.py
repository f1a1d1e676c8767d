import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.preprocessing import StandardScaler

from biscale import PartialCorrelation, ScalingEstimator, ScalingFeatures, TailIndexEstimator
from biscale.synth import gen_cascade, gen_fgn

from oracles import partial_by_residuals


def test_scaling_estimator_h():
    x = gen_fgn(0.8, 2 ** 18, seed=1)
    est = ScalingEstimator(j1=4, j2=13).fit(x)
    assert est.value_ == pytest.approx(0.8, abs=0.05)
    assert est.ci_[0] < est.value_ < est.ci_[1]
    assert est.estimate_.method == "wls"
    assert est.ld_.kind == "log2_Sd"


def test_scaling_estimator_bootstrap_and_clone():
    x = gen_fgn(0.7, 2 ** 16, seed=2)
    est = ScalingEstimator(j1=3, j2=11, n_resamples=99, random_state=5)
    a = clone(est).fit(x)
    b = clone(est).fit(x)
    assert a.estimate_.method == "bootstrap"
    assert a.ci_ == b.ci_
    assert est.get_params()["n_resamples"] == 99


def test_scaling_estimator_c2():
    x = gen_cascade(0.64, -0.044, 18, seed=3)
    est = ScalingEstimator(kind="C_2", j1=5, j2=14).fit(x)
    assert est.estimate_.parameter == "c2"
    assert est.value_ == pytest.approx(-0.044, abs=0.04)
    with pytest.raises(ValueError):
        ScalingEstimator(kind="bogus").fit(x)


def test_scaling_features_pipeline():
    X = np.vstack([gen_fgn(h, 2 ** 14, seed=i) for i, h in enumerate([0.6, 0.7, 0.8, 0.9])])
    feats = ScalingFeatures(j1=3, j2=10).fit(X)
    out = feats.transform(X)
    assert out.shape == (4, 3)
    assert np.all(np.diff(out[:, 0]) > 0)
    assert list(feats.get_feature_names_out()) == ["H", "c1", "c2"]
    scaled = make_pipeline(ScalingFeatures(j1=3, j2=10), StandardScaler()).fit_transform(X)
    assert np.allclose(scaled.mean(axis=0), 0, atol=1e-12)
    with pytest.raises(ValueError):
        feats.transform(X[:, :100])


def test_tail_estimator():
    x = (1 - np.random.default_rng(0).random(20000)) ** (-1 / 1.5)
    est = TailIndexEstimator(n_resamples=49, random_state=1).fit(x)
    assert est.alpha_ == pytest.approx(1.5, abs=0.15)
    assert est.implied_h_ == pytest.approx((3 - est.alpha_) / 2)


def test_partial_correlation_estimator(rng):
    X = rng.standard_normal((400, 4)) @ rng.standard_normal((4, 4))
    est = PartialCorrelation().fit(X)
    assert est.n_features_in_ == 4
    assert np.allclose(est.partial_, partial_by_residuals(X.T), atol=1e-10)
