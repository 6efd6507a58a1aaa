"""Prediction metrics: base-2 log-loss and posterior predictive probabilities."""

import math

import numpy as np
from scipy.special import ndtr, roots_hermite

from .._special import sigmoid

CLAMP = 1e-12


def log_loss(p_hat, y):
    """Base-2 negative predictive log-likelihood; 1.0 equals a fair coin.

    Accepts scalars or arrays; probabilities are clamped to
    [1e-12, 1 - 1e-12] first.  The dataset-level metric is the mean.
    """
    p = np.clip(np.asarray(p_hat, dtype=float), CLAMP, 1.0 - CLAMP)
    y = np.asarray(y, dtype=float)
    out = -(y * np.log2(p) + (1.0 - y) * np.log2(1.0 - p))
    return float(out) if out.ndim == 0 else out


def predictive_prob(mean, var, kind="bernoulli-logit", n_samples=2000, rng=None):
    """E_q[p(y=1 | z)] for scalar-Gaussian q(z) = N(mean, var).

    The probit likelihood has the closed form Phi(m / sqrt(1 + v)); the logit
    one is estimated with antithetic Monte Carlo draws (or pass rng=None for a
    deterministic Gauss-Hermite evaluation).
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    var = np.atleast_1d(np.asarray(var, dtype=float))
    if kind == "bernoulli-probit":
        out = ndtr(mean / np.sqrt(1.0 + var))
        return out if out.size > 1 else float(out[0])
    if kind != "bernoulli-logit":
        raise ValueError("unknown likelihood kind %r" % kind)
    if rng is None:
        x, w = roots_hermite(128)
        w = w / math.sqrt(math.pi)
        out = sigmoid(mean[:, None] + np.sqrt(2.0 * var)[:, None] * x) @ w
    else:
        half = max(n_samples // 2, 1)
        eps = rng.standard_normal(half)
        out = np.empty(mean.size)
        chunk = max(1, 2 ** 22 // half)
        for lo in range(0, mean.size, chunk):
            hi = min(lo + chunk, mean.size)
            s = np.sqrt(var[lo:hi])[:, None]
            zp = mean[lo:hi, None] + s * eps[None, :]
            zm = mean[lo:hi, None] - s * eps[None, :]
            out[lo:hi] = 0.5 * (sigmoid(zp).mean(axis=1) + sigmoid(zm).mean(axis=1))
    return out if out.size > 1 else float(out[0])
