"""Structure-blind comparison optimizers: plain SGD and ADAM on a flat
variational parameterization.

Gaussian models use (m, L) with V = L L' and a softplus-positive diagonal;
Gamma models use softplus-positive (alpha, beta).  Gradients of the bound are
estimated by reparameterisation (Gaussian) or the score function (Gamma); the
KL-to-prior term and its gradient are closed-form.  These optimizers never
touch site banks or conjugate backends - being structure-blind is their
purpose.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ._special import digamma, log_gamma, softplus, trigamma
from .conjugate import GammaPrior, LinReg
from .errors import EstimationError


def _softplus_scalar(x):
    return float(np.logaddexp(0.0, x))


def _softplus_inv(y):
    if y <= 0:
        raise ValueError("softplus inverse needs y > 0")
    return y + math.log(-math.expm1(-y)) if y > 1e-8 else math.log(math.expm1(y))


@dataclass
class GaussianFlatParams:
    """Mean vector and raw lower-triangular factor; diag(L) = softplus(raw)."""

    m: np.ndarray
    raw_tril: np.ndarray

    @classmethod
    def from_moments(cls, m, V):
        L = np.linalg.cholesky(V)
        raw = np.tril(L, -1) + np.diag([_softplus_inv(d) for d in np.diag(L)])
        return cls(np.asarray(m, dtype=float), raw)

    def chol(self):
        L = np.tril(self.raw_tril, -1)
        return L + np.diag(softplus(np.diag(self.raw_tril)))

    def moments(self):
        L = self.chol()
        return self.m.copy(), L @ L.T

    def as_vector(self):
        idx = np.tril_indices(self.m.size)
        return np.concatenate([self.m, self.raw_tril[idx]])

    def add(self, dm, draw):
        return GaussianFlatParams(self.m + dm, self.raw_tril + draw)


@dataclass
class GammaFlatParams:
    """Unconstrained (alpha', beta'); alpha = softplus(alpha') etc."""

    raw: np.ndarray

    @classmethod
    def from_shape_rate(cls, alpha, beta):
        return cls(np.array([_softplus_inv(alpha), _softplus_inv(beta)]))

    def shape_rate(self):
        return _softplus_scalar(self.raw[0]), _softplus_scalar(self.raw[1])

    def add(self, delta):
        return GammaFlatParams(self.raw + delta)


def sgd_step(params, grad, rho):
    """One ascent step params + rho * grad in flat coordinates."""
    if rho <= 0:
        raise ValueError("step size must be positive")
    if isinstance(params, GaussianFlatParams):
        dm, draw = grad
        return params.add(rho * dm, rho * draw)
    return params.add(rho * np.asarray(grad, dtype=float))


@dataclass
class AdamState:
    m1: object = None
    m2: object = None
    t: int = 0


def adam_step(params, grad, state, w0, beta1=0.9, beta2=0.999, eps=1e-8):
    """Standard ADAM ascent step with bias correction; returns (params, state)."""
    if isinstance(params, GaussianFlatParams):
        flat = np.concatenate([np.asarray(grad[0]).ravel(),
                               grad[1][np.tril_indices(params.m.size)]])
    else:
        flat = np.asarray(grad, dtype=float)
    if state.m1 is None:
        state = AdamState(np.zeros_like(flat), np.zeros_like(flat), 0)
    t = state.t + 1
    m1 = beta1 * state.m1 + (1.0 - beta1) * flat
    m2 = beta2 * state.m2 + (1.0 - beta2) * flat * flat
    m1_hat = m1 / (1.0 - beta1 ** t)
    m2_hat = m2 / (1.0 - beta2 ** t)
    step = w0 * m1_hat / (np.sqrt(m2_hat) + eps)
    if isinstance(params, GaussianFlatParams):
        d = params.m.size
        dm, dtril = step[:d], step[d:]
        draw = np.zeros_like(params.raw_tril)
        draw[np.tril_indices(d)] = dtril
        new = params.add(dm, draw)
    else:
        new = params.add(step)
    return new, AdamState(m1, m2, t)


def elbo_and_grad(model, factors, params, n_samples, rng):
    """Stochastic bound value and its gradient in flat coordinates.

    For LinReg models the likelihood part is estimated by reparameterisation
    (or evaluated by the factors' closed forms when present and n_samples is
    0) and the KL to N(0, delta I) is closed-form.  For GammaPrior models the
    likelihood gradient uses the score function and the Gamma KL is
    closed-form.
    """
    if isinstance(model, LinReg):
        return _gaussian_elbo_and_grad(model, factors, params, n_samples, rng)
    if isinstance(model, GammaPrior):
        return _gamma_elbo_and_grad(model, factors, params, n_samples, rng)
    raise TypeError("no flat-parameter bound for %r" % model)


def _gaussian_elbo_and_grad(model, factors, params, n_samples, rng):
    X = model.X
    delta = model.delta
    d = X.shape[1]
    m, V = params.moments()
    L = params.chol()
    # closed-form KL(N(m, V) || N(0, delta I)) and its (m, L) gradient
    log_diag = np.log(np.diag(L))
    kl = 0.5 * ((np.trace(V) + m @ m) / delta - d
                - 2.0 * log_diag.sum() + d * math.log(delta))
    g_m = -m / delta
    g_L = -L / delta + np.diag(1.0 / np.diag(L))
    value = -kl
    if n_samples == 0:
        eta_mean = X @ m
        A = X @ L
        eta_var = np.einsum("ij,ij->i", A, A)
        for n, factor in enumerate(factors):
            fn = factor.fn
            value += fn.exact_value(eta_mean[n], eta_var[n])
            dm_n = fn.exact_dm(eta_mean[n], eta_var[n])
            dv_n = fn.exact_dv(eta_mean[n], eta_var[n])
            g_m += dm_n * X[n]
            g_L += 2.0 * dv_n * np.outer(X[n], X[n] @ L)
    else:
        eps = rng.standard_normal((n_samples, d))
        Z = m[None, :] + eps @ L.T
        eta = Z @ X.T  # (S, N)
        d1 = np.empty_like(eta)
        for n, factor in enumerate(factors):
            vals = factor.fn.f(eta[:, n])
            if not np.all(np.isfinite(vals)):
                raise EstimationError("non-finite bound sample")
            value += float(np.mean(vals))
            d1[:, n] = factor.fn.df(eta[:, n])
        g_m += X.T @ d1.mean(axis=0)
        g_L += (X.T @ d1.T @ eps) / n_samples
    g_L = np.tril(g_L)
    # chain through the softplus diagonal
    diag_sig = 1.0 - np.exp(-np.diag(L))  # sigmoid(raw) = 1 - exp(-softplus)
    g_raw = np.tril(g_L, -1) + np.diag(np.diag(g_L) * diag_sig)
    return value, (g_m, g_raw)


def _gamma_elbo_and_grad(model, factors, params, n_samples, rng):
    alpha, beta = params.shape_rate()
    a, b = model.a, model.b
    kl = ((alpha - a) * digamma(alpha) - log_gamma(alpha) + log_gamma(a)
          + a * (math.log(beta) - math.log(b)) + alpha * (b - beta) / beta)
    dkl_da = (alpha - a) * trigamma(alpha) + (b - beta) / beta
    dkl_db = a / beta - alpha * b / beta ** 2
    z = rng.gamma(alpha, 1.0 / beta, size=max(n_samples, 2))
    h = np.asarray(factors[0].fn.f(z), dtype=float)
    if not np.all(np.isfinite(h)):
        raise EstimationError("non-finite bound sample")
    value = float(h.mean()) - kl
    # score function with the MC mean as control variate
    centred = h - h.mean()
    score_a = np.log(z) - digamma(alpha) + math.log(beta)
    score_b = alpha / beta - z
    g_alpha = float((centred * score_a).mean()) - dkl_da
    g_beta = float((centred * score_b).mean()) - dkl_db
    # sigmoid(raw) = 1 - exp(-softplus(raw)) chains the positivity transform
    sig = np.array([1.0 - math.exp(-softplus(params.raw[0])),
                    1.0 - math.exp(-softplus(params.raw[1]))])
    return value, np.array([g_alpha, g_beta]) * sig
