"""scikit-learn style estimators wrapping the inference engine.

These make the algorithm compose with the wider ecosystem: both classes
follow the fit/predict_proba/predict contract, validate inputs with the
sklearn helpers, and expose their hyperparameters through get_params /
set_params (inherited from BaseEstimator), so pipelines, grid search and
cross-validation work unchanged.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_array, check_X_y

from . import _streams, core, models
from .harness.metrics import predictive_prob


class _BernoulliCviMixin:
    def _check_fitted(self):
        if not hasattr(self, "sites_"):
            raise NotFittedError("call fit first")

    def _encode(self, y):
        classes, encoded = np.unique(y, return_inverse=True)
        if classes.size != 2:
            raise ValueError("need exactly two classes, got %r" % classes)
        return classes, encoded

    def predict(self, X):
        return self.classes_[(self.predict_proba(X)[:, 1] >= 0.5).astype(int)]

    def _proba_from_moments(self, means, variances):
        rng = _streams.substream(self.seed, _streams.METRIC)
        p1 = np.atleast_1d(predictive_prob(means, variances, self.likelihood,
                                           self.predict_samples, rng))
        return np.column_stack([1.0 - p1, p1])

    def _run_config(self):
        return core.CviConfig(
            schedule=core.StepSchedule.ratio(self.step_w),
            mc_samples=self.mc_samples, max_iters=self.max_iters,
            seed=self.seed)


class CVILogisticRegression(_BernoulliCviMixin, ClassifierMixin, BaseEstimator):
    """Bayesian logistic regression fit by conjugate-computation updates.

    Parameters
    ----------
    delta : float
        Precision of the isotropic Gaussian weight prior N(0, delta^-1 I)
        (the benchmark-table convention).
    step_w : float
        Step-size ratio; the update uses beta = step_w / (1 + step_w).
    mc_samples : int
        Monte Carlo draws per factor gradient; ignored when exact=True.
    exact : bool
        Use deterministic quadrature gradients instead of Monte Carlo.
    """

    def __init__(self, delta=1.0, step_w=0.4, mc_samples=10, max_iters=100,
                 exact=False, likelihood="bernoulli-logit", seed=0,
                 predict_samples=2000):
        self.delta = delta
        self.step_w = step_w
        self.mc_samples = mc_samples
        self.max_iters = max_iters
        self.exact = exact
        self.likelihood = likelihood
        self.seed = seed
        self.predict_samples = predict_samples

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = self._encode(y)
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        model, factors = models.build_blr(X, encoded, 1.0 / self.delta,
                                          likelihood=self.likelihood,
                                          exact=self.exact)
        _, state, trace = core.run_cvi(model, factors, self._run_config())
        self.model_ = model
        self.sites_ = state.sites
        self.trace_ = trace
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_array(X)
        design = np.column_stack([np.ones(X.shape[0]), X])
        means, variances = self.model_.eta_moments(self.sites_, design)
        return self._proba_from_moments(means, variances)

    def posterior(self):
        """Full Gaussian posterior over [bias, weights] natural parameters."""
        self._check_fitted()
        return self.model_.posterior(self.sites_)


class CVIGPClassifier(_BernoulliCviMixin, ClassifierMixin, BaseEstimator):
    """GP classification with a squared-exponential kernel, fit by the same
    site-parameter recursion (each conjugate step is a GP regression)."""

    def __init__(self, log_sigma_f=0.0, log_l=0.0, step_w=0.3, mc_samples=100,
                 max_iters=100, exact=False, likelihood="bernoulli-logit",
                 seed=0, predict_samples=2000):
        self.log_sigma_f = log_sigma_f
        self.log_l = log_l
        self.step_w = step_w
        self.mc_samples = mc_samples
        self.max_iters = max_iters
        self.exact = exact
        self.likelihood = likelihood
        self.seed = seed
        self.predict_samples = predict_samples

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_, encoded = self._encode(y)
        kernel = models.KernelSpec(self.log_sigma_f, self.log_l)
        model, factors = models.build_gpc(X, encoded, kernel,
                                          likelihood=self.likelihood,
                                          exact=self.exact)
        _, state, trace = core.run_cvi(model, factors, self._run_config())
        self.kernel_ = kernel
        self.model_ = model
        self.sites_ = state.sites
        self.trace_ = trace
        self.X_train_ = X
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        self._check_fitted()
        X = check_array(X)
        K_cross = self.kernel_.matrix(self.X_train_, X)
        k_diag = np.diag(self.kernel_.matrix(X))
        means, variances = self.model_.predict_moments(self.sites_, K_cross,
                                                       k_diag)
        return self._proba_from_moments(means, variances)
