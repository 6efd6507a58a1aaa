"""Concrete non-conjugate models: likelihood factors bound to a conjugate backend.

Each builder returns (backend, factors).  A factor owns the log-likelihood of
one observation as a ScalarFunction of its latent scalar (a linear projection
eta_n for the regression backend, the latent z_n for GP/chain backends, the
scalar z itself for the Gamma model) and knows which gradient route applies to
its marginal family.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr

from . import families as fam
from ._special import digamma, log_gamma, sigmoid, softplus, trigamma
from .conjugate import GP, GammaPrior, Kalman, LinReg
from .errors import DomainError, EstimationError
from .gradients import (ScalarFunction, fisher_solve_grad, gauss_grad_mean,
                        with_quadrature_expectation)

_digamma_vec = np.vectorize(digamma)
_trigamma_vec = np.vectorize(trigamma)
_log_gamma_vec = np.vectorize(log_gamma)


@dataclass
class NonConjugateFactor:
    """One likelihood term log p(y | latent scalar)."""

    target: int
    kind: str  # bernoulli-logit | bernoulli-probit | gamma-shape
    y: float
    fn: ScalarFunction
    marginal_family: str = "gaussian"  # gaussian | gamma

    def grad(self, marginal, n_samples, rng):
        """Mean-parameter gradient of E[log p] at the factor's marginal.

        Gaussian marginals arrive as a (mean, variance) pair and use the
        mean/variance route; Gamma marginals arrive as NatParams and use the
        Fisher solve.
        """
        if self.marginal_family == "gaussian":
            m, v = marginal
            return gauss_grad_mean(self.fn, fam.gaussian_nat(m, v), n_samples, rng)
        return fisher_solve_grad(self.fn, marginal, n_samples, rng)


def loglik_eval(factor, z):
    """(value, d/dz, d2/dz2) of the factor's log likelihood at z."""
    return factor.fn.f(z), factor.fn.df(z), factor.fn.second_derivative(z)


# ---------------------------------------------------------------------------
# likelihood evaluators


def make_logit_function(y):
    """log p(y|z) = y z - log(1 + e^z), overflow-safe at both tails."""
    y = float(y)

    def value(z):
        return y * np.asarray(z, dtype=float) - softplus(z)

    def d1(z):
        return y - sigmoid(z)

    def d2(z):
        s = sigmoid(z)
        return -s * (1.0 - s)

    return ScalarFunction(f=value, df=d1, d2f=d2)


def make_probit_function(y):
    """log p(y|z) = log Phi((2y-1) z) with Mills-ratio derivatives."""
    s = 2.0 * float(y) - 1.0

    def mills(u):
        # phi(u)/Phi(u), stable far into the left tail
        log_pdf = -0.5 * u * u - 0.5 * math.log(2.0 * math.pi)
        return np.exp(log_pdf - log_ndtr(u))

    def value(z):
        return log_ndtr(s * np.asarray(z, dtype=float))

    def d1(z):
        return s * mills(s * np.asarray(z, dtype=float))

    def d2(z):
        u = s * np.asarray(z, dtype=float)
        r = mills(u)
        return -r * (u + r)

    return ScalarFunction(f=value, df=d1, d2f=d2)


def make_gamma_shape_function(y):
    """log Ga(y | shape=z, rate=1) = (z-1) log y - y - log Gamma(z)."""
    if y <= 0:
        raise DomainError("gamma-shape observations must be positive")
    log_y = math.log(y)

    def value(z):
        z = np.asarray(z, dtype=float)
        if np.any(z <= 0):
            raise DomainError("gamma-shape likelihood needs z > 0")
        return (z - 1.0) * log_y - y - _log_gamma_vec(z)

    def d1(z):
        return log_y - _digamma_vec(np.asarray(z, dtype=float))

    def d2(z):
        return -_trigamma_vec(np.asarray(z, dtype=float))

    return ScalarFunction(f=value, df=d1, d2f=d2)


_MAKERS = {
    "bernoulli-logit": make_logit_function,
    "bernoulli-probit": make_probit_function,
    "gamma-shape": make_gamma_shape_function,
}


def _bernoulli_bank_derivs(kind, y, z):
    """(d1, d2) of the Bernoulli log likelihoods, vectorised over a draw
    matrix z of shape (n_factors, n_draws) with one label per row."""
    if kind == "bernoulli-logit":
        s = sigmoid(z)
        return y[:, None] - s, -s * (1.0 - s)
    sign = 2.0 * y - 1.0
    u = sign[:, None] * z
    log_pdf = -0.5 * u * u - 0.5 * math.log(2.0 * math.pi)
    r = np.exp(log_pdf - log_ndtr(u))
    return sign[:, None] * r, -r * (u + r)


def _bernoulli_bank_values(kind, y, z):
    if kind == "bernoulli-logit":
        return y[:, None] * z - softplus(z)
    return log_ndtr((2.0 * y - 1.0)[:, None] * z)


class FactorBank:
    """Vectorised gradient evaluation for a homogeneous Bernoulli factor set.

    Numerically this is the per-factor route run on a draw (or quadrature)
    matrix with one row per factor; it exists so the run loops stay O(iters)
    in Python-call count instead of O(iters x factors).
    """

    def __init__(self, kind, y, exact=False, quad_nodes=64):
        self.kind = kind
        self.y = np.asarray(y, dtype=float)
        self.exact = exact
        self.quad_nodes = quad_nodes

    @property
    def n(self):
        return self.y.size

    def _labels(self, indices):
        return self.y if indices is None else self.y[np.asarray(indices)]

    def mc_grads(self, means, variances, n_samples, rng, indices=None):
        """Antithetic mean-parameter gradients, one row per factor."""
        means = np.asarray(means, dtype=float)
        variances = np.asarray(variances, dtype=float)
        pairs = (n_samples + 1) // 2
        eps = rng.standard_normal((means.size, pairs))
        scale = np.sqrt(variances)[:, None]
        z = np.concatenate([means[:, None] + scale * eps,
                            means[:, None] - scale * eps], axis=1)
        d1, d2 = _bernoulli_bank_derivs(self.kind, self._labels(indices), z)
        if not (np.all(np.isfinite(d1)) and np.all(np.isfinite(d2))):
            raise EstimationError("non-finite derivative in MC gradient bank")
        dm = d1.mean(axis=1)
        dv = 0.5 * d2.mean(axis=1)
        return np.column_stack([dm - 2.0 * means * dv, dv])

    def exact_grads(self, means, variances, indices=None):
        """Gauss-Hermite ("exact") gradients, one row per factor."""
        z, w = self._nodes(means, variances)
        d1, d2 = _bernoulli_bank_derivs(self.kind, self._labels(indices), z)
        dm = d1 @ w
        dv = 0.5 * (d2 @ w)
        return np.column_stack([dm - 2.0 * np.asarray(means) * dv, dv])

    def expectations(self, means, variances, indices=None):
        """Quadrature values of E[log p(y_n | .)] per factor."""
        z, w = self._nodes(means, variances)
        return _bernoulli_bank_values(self.kind, self._labels(indices), z) @ w

    def _nodes(self, means, variances):
        from .gradients import _gauss_hermite

        x, w = _gauss_hermite(self.quad_nodes)
        means = np.asarray(means, dtype=float)
        variances = np.clip(np.asarray(variances, dtype=float), 0.0, None)
        z = means[:, None] + np.sqrt(2.0 * variances)[:, None] * x[None, :]
        return z, w



class FactorList(list):
    """A factor list that may carry a vectorised bank for the run loops."""

    def __init__(self, factors, bank=None):
        super().__init__(factors)
        self.bank = bank


def make_likelihood(kind, y):
    try:
        return _MAKERS[kind](y)
    except KeyError:
        raise ValueError("unknown likelihood kind %r" % kind) from None


def normalize_labels(y):
    """{-1,+1} -> {0,1}; {0,1} passes through; anything else is an error."""
    y = np.asarray(y)
    values = set(np.unique(y).tolist())
    if values <= {0, 1}:
        return y.astype(int)
    if values <= {-1, 1}:
        return ((y + 1) // 2).astype(int)
    raise ValueError("labels must be in {0,1} or {-1,+1}, got %r" % sorted(values))


# ---------------------------------------------------------------------------
# builders


def _bernoulli_factors(y, kind, exact, quad_nodes):
    factors = []
    for n, label in enumerate(y):
        fn = make_likelihood(kind, label)
        if exact:
            fn = with_quadrature_expectation(fn, quad_nodes)
        factors.append(NonConjugateFactor(n, kind, float(label), fn))
    bank = FactorBank(kind, y, exact=exact, quad_nodes=quad_nodes)
    return FactorList(factors, bank=bank)


def build_blr(X, y, delta, likelihood="bernoulli-logit", exact=False,
              quad_nodes=64):
    """Bayesian logistic (or probit) regression on a linear backend.

    A bias column is prepended, so the latent weights have dimension D+1 and
    factor n acts on eta_n = [1, x_n]' z with marginal mean x_n'm and variance
    x_n'V x_n.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = normalize_labels(y)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y disagree on the number of rows")
    design = np.column_stack([np.ones(X.shape[0]), X])
    model = LinReg(design, delta)
    return model, _bernoulli_factors(y, likelihood, exact, quad_nodes)


@dataclass(frozen=True)
class KernelSpec:
    """Squared-exponential kernel k(x,x') = sf^2 exp(-|x-x'|^2 / (2 l^2))."""

    log_sigma_f: float = 0.0
    log_l: float = 0.0

    def matrix(self, X, X2=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        X2 = X if X2 is None else np.atleast_2d(np.asarray(X2, dtype=float))
        sf2 = math.exp(2.0 * self.log_sigma_f)
        ell2 = math.exp(2.0 * self.log_l)
        sq = (np.sum(X ** 2, axis=1)[:, None] + np.sum(X2 ** 2, axis=1)[None, :]
              - 2.0 * X @ X2.T)
        return sf2 * np.exp(-np.clip(sq, 0.0, None) / (2.0 * ell2))


def build_gpc(X, y, kernel, likelihood="bernoulli-logit", exact=False,
              quad_nodes=64):
    """GP classification: one Bernoulli factor per input, latent z ~ N(0, K)."""
    y = normalize_labels(y)
    K = kernel.matrix(X)
    if K.shape[0] != y.shape[0]:
        raise ValueError("kernel size and labels disagree")
    return GP(K), _bernoulli_factors(y, likelihood, exact, quad_nodes)


def build_kalman_glm(y, sigma2, likelihood="bernoulli-logit", exact=False,
                     quad_nodes=64):
    """Random-walk chain with a Bernoulli factor at each time step k >= 1."""
    y = normalize_labels(y)
    model = Kalman(horizon=len(y), sigma2=sigma2)
    factors = _bernoulli_factors(y, likelihood, exact, quad_nodes)
    return model, factors


def build_gamma_shape(y, a, b):
    """Scalar Gamma-shape model: Ga(y | z, 1) likelihood, Ga(z | a, b) prior."""
    if y <= 0 or a <= 0 or b <= 0:
        raise DomainError("y, a, b must all be positive")
    factor = NonConjugateFactor(0, "gamma-shape", float(y),
                                make_gamma_shape_function(y),
                                marginal_family="gamma")
    return GammaPrior(a, b), [factor]
