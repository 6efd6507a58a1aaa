"""Exponential-family kernels: full/diagonal-free Gaussian and Gamma.

Every distribution is carried as a (family, values) pair in either natural or
mean coordinates.  Conventions (fixed everywhere in this package):

  Gaussian, scalar     phi(z) = (z, z^2)
                       lambda = (m/v, -1/(2v)),            lambda2 < 0
                       mu     = (m, v + m^2)
  Gaussian, full (d)   phi(z) = (z, z z^T)
                       lambda = (V^-1 m, -1/2 V^-1)        precision PD
                       mu     = (m, V + m m^T)
                       values arrays hold the d "vector" entries followed by
                       the d*d (symmetric) matrix block, row-major.
  Gamma(alpha, beta)   density ~ x^(alpha-1) exp(-x beta)
                       phi(z) = (z, log z)
                       lambda = (-beta, alpha - 1),        lambda1 < 0, lambda2 > -1
                       mu     = (alpha/beta, psi(alpha) - log(beta))

Domain checks raise DomainError; there is no silent repair (the full-Gaussian
positive-definiteness test is a plain Cholesky with zero jitter).
"""

import math
from dataclasses import dataclass

import numpy as np

from ._special import digamma, trigamma, log_gamma
from .errors import ConvergenceError, DomainError, FamilyMismatchError

_LOG_2PI = math.log(2.0 * math.pi)

# Fixed tolerances; property tests rely on these being constants.
GAUSSIAN_ROUNDTRIP_RTOL = 1e-10
GAMMA_ROUNDTRIP_RTOL = 1e-8
GAMMA_NEWTON_TOL = 1e-10
GAMMA_NEWTON_MAX_ITER = 50


class FamilyKind:
    """Tag for one of the supported exponential families."""

    name = None

    def __eq__(self, other):
        return type(self) is type(other) and self.__dict__ == other.__dict__

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.__dict__.items()))))

    def __repr__(self):
        return self.name


class GaussianScalarKind(FamilyKind):
    name = "gaussian-scalar"
    n_params = 2


class GammaKind(FamilyKind):
    name = "gamma"
    n_params = 2


class GaussianFullKind(FamilyKind):
    def __init__(self, d):
        if d < 1:
            raise ValueError("GaussianFull needs d >= 1")
        self.d = d

    @property
    def name(self):
        return "gaussian-full(%d)" % self.d

    @property
    def n_params(self):
        return self.d + self.d * self.d


GAUSSIAN_SCALAR = GaussianScalarKind()
GAMMA = GammaKind()


def gaussian_full(d):
    return GaussianFullKind(d)


@dataclass(frozen=True)
class NatParams:
    family: FamilyKind
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


@dataclass(frozen=True)
class MeanParams:
    family: FamilyKind
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))


# ---------------------------------------------------------------------------
# constructors and accessors


def gaussian_nat(m, v):
    """Scalar Gaussian natural parameters from moments."""
    if v <= 0:
        raise DomainError("variance must be positive, got %r" % v)
    return NatParams(GAUSSIAN_SCALAR, np.array([m / v, -0.5 / v]))


def gaussian_moments(q):
    """(m, v) of a scalar Gaussian given in natural coordinates."""
    l1, l2 = q.values
    if l2 >= 0:
        raise DomainError("scalar Gaussian needs lambda2 < 0, got %r" % l2)
    v = -0.5 / l2
    return l1 * v, v


def gaussian_full_nat(m, V):
    m = np.asarray(m, dtype=float)
    V = np.asarray(V, dtype=float)
    d = m.shape[0]
    P = _solve_psd(V, np.eye(d), "covariance")
    return NatParams(gaussian_full(d), np.concatenate([P @ m, (-0.5 * P).ravel()]))


def gaussian_full_moments(q):
    """(m, V) of a full Gaussian given in natural coordinates."""
    d = q.family.d
    h = q.values[:d]
    S = q.values[d:].reshape(d, d)
    P = -2.0 * _sym(S)
    L = _chol(P, "precision")
    V = _chol_inverse(L)
    return V @ h, V


def gamma_nat(alpha, beta):
    if alpha <= 0 or beta <= 0:
        raise DomainError("Gamma needs alpha, beta > 0")
    return NatParams(GAMMA, np.array([-beta, alpha - 1.0]))


def gamma_shape_rate(q):
    l1, l2 = q.values
    if not (l1 < 0 and l2 > -1):
        raise DomainError("Gamma natural domain is lambda1 < 0, lambda2 > -1")
    return l2 + 1.0, -l1


# ---------------------------------------------------------------------------
# small linear-algebra helpers


def _sym(A):
    return 0.5 * (A + A.T)


def _chol(A, what):
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise DomainError("%s block is not positive definite" % what) from None


def _chol_inverse(L):
    eye = np.eye(L.shape[0])
    Linv = np.linalg.solve(L, eye)
    return Linv.T @ Linv


def _solve_psd(A, B, what):
    L = _chol(_sym(A), what)
    return np.linalg.solve(L.T, np.linalg.solve(L, B))


def _check_family(a, b):
    if a.family != b.family:
        raise FamilyMismatchError("%r vs %r" % (a.family, b.family))


# ---------------------------------------------------------------------------
# the dual maps


def nat_to_mean(lam):
    """Gradient of the log partition: mu = grad A(lambda)."""
    fam = lam.family
    if isinstance(fam, GaussianScalarKind):
        m, v = gaussian_moments(lam)
        return MeanParams(fam, np.array([m, v + m * m]))
    if isinstance(fam, GaussianFullKind):
        m, V = gaussian_full_moments(lam)
        return MeanParams(fam, np.concatenate([m, (V + np.outer(m, m)).ravel()]))
    if isinstance(fam, GammaKind):
        alpha, beta = gamma_shape_rate(lam)
        return MeanParams(fam, np.array([alpha / beta, digamma(alpha) - math.log(beta)]))
    raise TypeError("unsupported family %r" % fam)


def mean_to_nat(mu):
    """Inverse dual map: lambda = grad A*(mu).

    Gaussian families invert in closed form; the Gamma inversion runs a
    safeguarded Newton iteration on the shape (see _gamma_alpha_from_means).
    """
    fam = mu.family
    if isinstance(fam, GaussianScalarKind):
        m, m2 = mu.values
        v = m2 - m * m
        if v <= 0 or not np.isfinite(v):
            raise DomainError("mean parameters need mu2 - mu1^2 > 0")
        return gaussian_nat(m, v)
    if isinstance(fam, GaussianFullKind):
        d = fam.d
        m = mu.values[:d]
        M2 = mu.values[d:].reshape(d, d)
        V = _sym(M2 - np.outer(m, m))
        _chol(V, "second-moment")
        return gaussian_full_nat(m, V)
    if isinstance(fam, GammaKind):
        mu1, mu2 = mu.values
        alpha = _gamma_alpha_from_means(mu1, mu2)
        return gamma_nat(alpha, alpha / mu1)
    raise TypeError("unsupported family %r" % fam)


def _gamma_alpha_from_means(mu1, mu2):
    """Solve psi(alpha) - log(alpha) = mu2 - log(mu1) for alpha.

    The left side is increasing in alpha towards 0 from below; the right side
    is negative on the interior of the mean domain (Jensen).  Newton steps are
    safeguarded by bisection against a bracketing interval.
    """
    if not (np.isfinite(mu1) and np.isfinite(mu2)) or mu1 <= 0:
        raise DomainError("Gamma mean parameters need finite values, mu1 > 0")
    gap = math.log(mu1) - mu2
    if gap <= 0:
        raise DomainError("Gamma mean parameters violate log E[z] > E[log z]")
    alpha = 0.5 / gap
    lo, hi = 0.0, math.inf
    target = -gap
    for _ in range(GAMMA_NEWTON_MAX_ITER):
        f = digamma(alpha) - math.log(alpha) - target
        if abs(f) < GAMMA_NEWTON_TOL:
            return alpha
        if f > 0:
            hi = alpha
        else:
            lo = alpha
        step = f / (trigamma(alpha) - 1.0 / alpha)
        candidate = alpha - step
        if not (lo < candidate < hi):
            candidate = 0.5 * (lo + hi) if np.isfinite(hi) else 2.0 * alpha
        alpha = candidate
    raise ConvergenceError(
        "Gamma mean->natural inversion did not converge in %d iterations"
        % GAMMA_NEWTON_MAX_ITER)


def log_partition(lam):
    """A(lambda); finite and convex on the natural domain."""
    fam = lam.family
    if isinstance(fam, GaussianScalarKind):
        m, v = gaussian_moments(lam)
        return 0.5 * (m * m / v + math.log(2.0 * math.pi * v))
    if isinstance(fam, GaussianFullKind):
        d = fam.d
        h = lam.values[:d]
        P = -2.0 * _sym(lam.values[d:].reshape(d, d))
        L = _chol(P, "precision")
        half = np.linalg.solve(L, h)
        logdet_P = 2.0 * np.log(np.diag(L)).sum()
        return 0.5 * (half @ half - logdet_P + d * _LOG_2PI)
    if isinstance(fam, GammaKind):
        alpha, beta = gamma_shape_rate(lam)
        return log_gamma(alpha) - alpha * math.log(beta)
    raise TypeError("unsupported family %r" % fam)


def kl(q1, q2):
    """KL(q1 || q2) between members of the same family."""
    _check_family(q1, q2)
    fam = q1.family
    if isinstance(fam, GaussianScalarKind):
        m1, v1 = gaussian_moments(q1)
        m2, v2 = gaussian_moments(q2)
        return 0.5 * (math.log(v2 / v1) + (v1 + (m1 - m2) ** 2) / v2 - 1.0)
    if isinstance(fam, GaussianFullKind):
        d = fam.d
        m1, V1 = gaussian_full_moments(q1)
        m2, V2 = gaussian_full_moments(q2)
        L2 = _chol(V2, "covariance")
        half = np.linalg.solve(L2, m2 - m1)
        trace = np.trace(_chol_inverse(L2) @ V1)
        logdet1 = 2.0 * np.log(np.diag(_chol(V1, "covariance"))).sum()
        logdet2 = 2.0 * np.log(np.diag(L2)).sum()
        return 0.5 * (trace + half @ half - d + logdet2 - logdet1)
    if isinstance(fam, GammaKind):
        a1, b1 = gamma_shape_rate(q1)
        a2, b2 = gamma_shape_rate(q2)
        return ((a1 - a2) * digamma(a1) - log_gamma(a1) + log_gamma(a2)
                + a2 * (math.log(b1) - math.log(b2)) + a1 * (b2 - b1) / b1)
    raise TypeError("unsupported family %r" % fam)


def bregman_dual(mu1, mu2):
    """Bregman divergence of A* on mean parameters.

    B_{A*}(mu1 || mu2) = A*(mu1) - A*(mu2) - <mu1 - mu2, lambda2>, with
    A*(mu) = <mu, lambda(mu)> - A(lambda(mu)).  Equals kl(q1 || q2).
    """
    _check_family(mu1, mu2)
    l1 = mean_to_nat(mu1)
    l2 = mean_to_nat(mu2)
    a_star_1 = mu1.values @ l1.values - log_partition(l1)
    a_star_2 = mu2.values @ l2.values - log_partition(l2)
    return a_star_1 - a_star_2 - (mu1.values - mu2.values) @ l2.values


def fisher_info(lam):
    """d mu / d lambda, evaluated analytically.

    Equals the covariance of the sufficient statistics.  For the full
    Gaussian the matrix-block coordinates are duplicated (off-diagonal
    entries appear twice), so the result is only positive semidefinite
    there; scalar Gaussian and Gamma give positive definite matrices.
    """
    fam = lam.family
    if isinstance(fam, GaussianScalarKind):
        m, v = gaussian_moments(lam)
        return np.array([[v, 2.0 * m * v],
                         [2.0 * m * v, 2.0 * v * v + 4.0 * m * m * v]])
    if isinstance(fam, GammaKind):
        alpha, beta = gamma_shape_rate(lam)
        return np.array([[alpha / beta ** 2, 1.0 / beta],
                         [1.0 / beta, trigamma(alpha)]])
    if isinstance(fam, GaussianFullKind):
        d = fam.d
        m, V = gaussian_full_moments(lam)
        n = d + d * d
        C = np.empty((n, n))
        C[:d, :d] = V
        # Cov(z_i, (z z^T)_jk) = m_j V_ik + m_k V_ij  (Isserlis)
        cross = (m[:, None, None] * V[None, :, :]).transpose(1, 0, 2) \
            + (m[None, :, None] * V[:, None, :])
        C[:d, d:] = cross.reshape(d, d * d)
        C[d:, :d] = C[:d, d:].T
        quad = (np.einsum("ik,jl->ijkl", V, V) + np.einsum("il,jk->ijkl", V, V)
                + np.einsum("i,k,jl->ijkl", m, m, V)
                + np.einsum("i,l,jk->ijkl", m, m, V)
                + np.einsum("j,k,il->ijkl", m, m, V)
                + np.einsum("j,l,ik->ijkl", m, m, V))
        C[d:, d:] = quad.reshape(d * d, d * d)
        return C
    raise TypeError("unsupported family %r" % fam)


def sample(lam, n, rng):
    """n i.i.d. draws from q(.|lambda); deterministic given the stream state.

    Returns an array of shape (n,) for scalar families and (n, d) for the
    full Gaussian.
    """
    if n < 1:
        raise ValueError("need n >= 1 draws")
    fam = lam.family
    if isinstance(fam, GaussianScalarKind):
        m, v = gaussian_moments(lam)
        return m + math.sqrt(v) * rng.standard_normal(n)
    if isinstance(fam, GaussianFullKind):
        m, V = gaussian_full_moments(lam)
        L = _chol(V, "covariance")
        return m + rng.standard_normal((n, fam.d)) @ L.T
    if isinstance(fam, GammaKind):
        alpha, beta = gamma_shape_rate(lam)
        return rng.gamma(alpha, 1.0 / beta, size=n)
    raise TypeError("unsupported family %r" % fam)


def marginal(q, i):
    """Scalar-Gaussian marginal q(z_i) of a full Gaussian."""
    if not isinstance(q.family, GaussianFullKind):
        raise FamilyMismatchError("marginal needs a full Gaussian")
    d = q.family.d
    if not 0 <= i < d:
        raise IndexError("index %d out of range for dimension %d" % (i, d))
    m, V = gaussian_full_moments(q)
    return gaussian_nat(m[i], V[i, i])
