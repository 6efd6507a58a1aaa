"""Scalar special functions used by the exponential-family kernels.

digamma/trigamma follow the classic recurrence-plus-asymptotic-series scheme:
shift the argument above 6 with the recurrences psi(x) = psi(x+1) - 1/x and
psi'(x) = psi'(x+1) + 1/x^2, then evaluate the de Moivre expansion.  Both are
validated against central finite differences of log-gamma in the test suite.
"""

import math

import numpy as np

# Bernoulli-number coefficients B_2n / 2n for the psi expansion.
_PSI_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)


def digamma(x):
    if x <= 0.0:
        raise ValueError("digamma defined here for x > 0 only, got %r" % x)
    value = 0.0
    while x < 6.0:
        value -= 1.0 / x
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    tail = 0.0
    power = inv2
    for c in _PSI_COEF:
        tail += c * power
        power *= inv2
    return value + math.log(x) - 0.5 * inv - tail


def trigamma(x):
    if x <= 0.0:
        raise ValueError("trigamma defined here for x > 0 only, got %r" % x)
    value = 0.0
    while x < 6.0:
        value += 1.0 / (x * x)
        x += 1.0
    inv = 1.0 / x
    inv2 = inv * inv
    # psi'(x) ~ 1/x + 1/(2x^2) + sum B_2n / x^{2n+1}
    tail = inv * (1.0 + 0.5 * inv)
    power = inv * inv2
    for c in (1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0):
        tail += c * power
        power *= inv2
    return value + tail


def log_gamma(x):
    return math.lgamma(x)


def softplus(z):
    """log(1 + exp(z)) without overflow."""
    z = np.asarray(z, dtype=float)
    return np.logaddexp(0.0, z)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def log_sigmoid(z):
    """log(sigma(z)) = -softplus(-z), safe at both tails."""
    return -softplus(-np.asarray(z, dtype=float))
