"""Exact posterior computations for the conjugate backends.

Each backend turns a bank of scalar Gaussian (or one Gamma) site parameters
into the exact posterior of the corresponding conjugate model and hands back
the per-factor marginals the next gradient step needs:

  LinReg      Bayesian linear regression, prior N(z | 0, delta I), one site
              per row acting on eta_n = x_n' z.  Uses the primal (D+1)-dim
              Cholesky when N >= D+1 and the matrix-inversion-lemma dual path
              when N < D+1.
  GP          Gaussian-process regression with kernel matrix K, one site per
              training index.
  Kalman      scalar random-walk chain z_0 ~ N(0,1), z_k ~ N(z_{k-1}, s2),
              sites on z_1..z_T; forward filter + RTS smoother, O(T).
  GammaPrior  scalar Gamma prior, a single (lambda1, lambda2) site added in
              the exponent.

A site bank is an (N, 2) array of natural-parameter increments; the all-zero
row means "no approximation yet" and reproduces the prior.  Site second
components may be nonnegative transiently; validity of the combined natural
parameter is what the guard in the run loop checks, via the DomainError these
functions raise.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import families as fam
from .errors import DomainError

CHOL_JITTER_REL = 1e-10


def _chol_with_jitter(A, what):
    """Cholesky with one jittered retry (1e-10 x mean diagonal), then fail."""
    try:
        return np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        pass
    jitter = CHOL_JITTER_REL * float(np.trace(A)) / A.shape[0]
    try:
        return np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
    except np.linalg.LinAlgError:
        raise DomainError("%s is not positive definite" % what) from None


def _as_site_bank(sites, n):
    sites = np.asarray(sites, dtype=float)
    if sites.shape != (n, 2):
        raise ValueError("expected a (%d, 2) site bank, got %r" % (n, sites.shape))
    return sites


@dataclass
class PseudoObservations:
    """Gaussian pseudo-data equivalent to scalar sites with negative precision
    part: sigma2 = -1/(2 lambda2), y = lambda1 * sigma2."""

    index: np.ndarray
    y: np.ndarray
    sigma2: np.ndarray


def pseudo_observations(sites):
    sites = np.asarray(sites, dtype=float)
    active = sites[:, 1] < 0.0
    if np.any((sites[:, 1] >= 0.0) & (sites[:, 0] != 0.0) |
              (sites[:, 1] > 0.0)):
        raise DomainError("sites with nonnegative lambda2 have no "
                          "pseudo-observation form")
    sigma2 = -0.5 / sites[active, 1]
    return PseudoObservations(np.flatnonzero(active), sites[active, 0] * sigma2,
                              sigma2)


# ---------------------------------------------------------------------------
# Bayesian linear regression


class LinReg:
    def __init__(self, design, delta):
        self.X = np.asarray(design, dtype=float)
        if delta <= 0:
            raise DomainError("prior scale delta must be positive")
        self.delta = float(delta)
        self.n_factors, self.dim = self.X.shape
        self._dual = self.n_factors < self.dim
        if self._dual:
            self._K = self.X @ self.X.T
            w, U = np.linalg.eigh(0.5 * (self._K + self._K.T))
            self._K_sqrt = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T

    # -- shared pieces

    def _primal_chol(self, sites):
        T = -2.0 * sites[:, 1]
        P = np.eye(self.dim) / self.delta + (self.X.T * T) @ self.X
        return _chol_with_jitter(P, "posterior precision")

    def _dual_solve(self, sites):
        T = -2.0 * sites[:, 1]
        G = self._K_sqrt
        inner = np.eye(self.n_factors) + self.delta * (G * T) @ G
        w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
        if w.min() <= 0.0:
            raise DomainError("posterior precision is not positive definite")
        M = np.eye(self.n_factors) + self.delta * (T[:, None] * self._K)
        return T, M

    def posterior(self, sites):
        """Full Gaussian posterior over the weights (tests, final reporting)."""
        sites = _as_site_bank(sites, self.n_factors)
        if self._dual:
            T, M = self._dual_solve(sites)
            u = np.linalg.solve(M, sites[:, 0])
            m = self.delta * self.X.T @ u
            V = self.delta * np.eye(self.dim) \
                - self.delta ** 2 * self.X.T @ np.linalg.solve(M, T[:, None] * self.X)
            return fam.gaussian_full_nat(m, 0.5 * (V + V.T))
        L = self._primal_chol(sites)
        m = _chol_solve(L, self.X.T @ sites[:, 0])
        V = _chol_solve(L, np.eye(self.dim))
        return fam.gaussian_full_nat(m, 0.5 * (V + V.T))

    def marginals(self, sites, query=None):
        """Means and variances of q(eta_n) for every (or the queried) rows."""
        if query is not None:
            return self.eta_moments(sites, self.X[np.asarray(query, dtype=int)])
        sites = _as_site_bank(sites, self.n_factors)
        if self._dual:
            T, M = self._dual_solve(sites)
            u = np.linalg.solve(M, sites[:, 0])
            means = self.delta * self._K @ u
            S = np.linalg.solve(M, T[:, None] * self._K)
            variances = self.delta * np.diag(self._K) \
                - self.delta ** 2 * np.einsum("ij,ji->i", self._K, S)
            return means, variances
        L = self._primal_chol(sites)
        m = _chol_solve(L, self.X.T @ sites[:, 0])
        A = np.linalg.solve(L, self.X.T)
        return self.X @ m, np.einsum("ij,ij->j", A, A)

    def factor_marginals(self, sites, query=None):
        return self.marginals(sites, query)

    def eta_moments(self, sites, X_query):
        """Posterior mean/variance of x' z for arbitrary query rows."""
        sites = _as_site_bank(sites, self.n_factors)
        X_query = np.asarray(X_query, dtype=float)
        if self._dual:
            T, M = self._dual_solve(sites)
            u = np.linalg.solve(M, sites[:, 0])
            B = self.X @ X_query.T
            means = self.delta * B.T @ u
            U = np.linalg.solve(M, T[:, None] * B)
            variances = self.delta * np.einsum("ij,ij->i", X_query, X_query) \
                - self.delta ** 2 * np.einsum("ij,ij->j", B, U)
            return means, variances
        L = self._primal_chol(sites)
        m = _chol_solve(L, self.X.T @ sites[:, 0])
        A = np.linalg.solve(L, X_query.T)
        return X_query @ m, np.einsum("ij,ij->j", A, A)

    def kl_to_prior(self, sites):
        """KL(q(z) || N(0, delta I)) of the current posterior."""
        sites = _as_site_bank(sites, self.n_factors)
        d = self.dim
        if self._dual:
            T, M = self._dual_solve(sites)
            u = np.linalg.solve(M, sites[:, 0])
            sq_mean = self.delta ** 2 * u @ self._K @ u
            Minv_trace = np.trace(np.linalg.inv(M))
            trace_V = self.delta * (d - self.n_factors + Minv_trace)
            sign, logdet_M = np.linalg.slogdet(M)
            if sign <= 0:
                raise DomainError("posterior covariance lost positivity")
            logdet_V = d * math.log(self.delta) - logdet_M
        else:
            L = self._primal_chol(sites)
            m = _chol_solve(L, self.X.T @ sites[:, 0])
            sq_mean = m @ m
            Vinv_cols = np.linalg.solve(L, np.eye(d))
            trace_V = np.einsum("ij,ij->", Vinv_cols, Vinv_cols)
            logdet_V = -2.0 * np.log(np.diag(L)).sum()
        return 0.5 * ((trace_V + sq_mean) / self.delta - d
                      + d * math.log(self.delta) - logdet_V)


def _chol_solve(L, b):
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def linreg_posterior(spec, sites):
    """Exact weight posterior of the Bayesian linear regression backend."""
    return spec.posterior(sites)


# ---------------------------------------------------------------------------
# GP regression


class GP:
    def __init__(self, K):
        K = np.asarray(K, dtype=float)
        self.K = 0.5 * (K + K.T)
        self.n_factors = K.shape[0]
        w, U = np.linalg.eigh(self.K)
        self._K_sqrt = (U * np.sqrt(np.clip(w, 0.0, None))) @ U.T

    def marginals(self, sites, query=None):
        sites = _as_site_bank(sites, self.n_factors)
        if query is None:
            query = np.arange(self.n_factors)
        query = np.asarray(query, dtype=int)
        if np.any(sites[:, 1] >= 0.0):
            nontrivial = (sites[:, 1] > 0.0) | ((sites[:, 1] == 0.0)
                                                & (sites[:, 0] != 0.0))
            if np.any(nontrivial):
                return self._marginals_general(sites, query)
        obs = pseudo_observations(sites)
        if obs.index.size == 0:
            return np.zeros(query.size), self.K[query, query].copy()
        C = self.K[np.ix_(obs.index, obs.index)] + np.diag(obs.sigma2)
        L = _chol_with_jitter(C, "site-augmented kernel")
        Kqa = self.K[np.ix_(query, obs.index)]
        alpha = _chol_solve(L, obs.y)
        A = np.linalg.solve(L, Kqa.T)
        means = Kqa @ alpha
        variances = self.K[query, query] - np.einsum("ij,ij->j", A, A)
        return means, variances

    def factor_marginals(self, sites, query=None):
        return self.marginals(sites, query)

    def _marginals_general(self, sites, query):
        """Combined-precision path for site banks with nonnegative lambda2."""
        T = -2.0 * sites[:, 1]
        inner = np.eye(self.n_factors) + (self._K_sqrt * T) @ self._K_sqrt
        if np.linalg.eigvalsh(0.5 * (inner + inner.T)).min() <= 0.0:
            raise DomainError("combined GP precision is not positive definite")
        B = np.eye(self.n_factors) + self.K * T[None, :]
        V = np.linalg.solve(B, self.K)
        V = 0.5 * (V + V.T)
        means = V @ sites[:, 0]
        return means[query], V[query, query]

    def posterior(self, sites):
        means, _ = self.marginals(sites)
        T = -2.0 * sites[:, 1]
        B = np.eye(self.n_factors) + self.K * T[None, :]
        V = np.linalg.solve(B, self.K)
        return fam.gaussian_full_nat(means, 0.5 * (V + V.T))

    def predict_moments(self, sites, K_cross, k_diag):
        """Latent mean/variance at held-out inputs.

        K_cross is the (n_train, n_query) cross-kernel block and k_diag the
        query prior variances k(x*, x*).
        """
        sites = _as_site_bank(sites, self.n_factors)
        obs = pseudo_observations(sites)
        K_cross = np.asarray(K_cross, dtype=float)
        if obs.index.size == 0:
            return np.zeros(K_cross.shape[1]), np.asarray(k_diag, float).copy()
        C = self.K[np.ix_(obs.index, obs.index)] + np.diag(obs.sigma2)
        L = _chol_with_jitter(C, "site-augmented kernel")
        Kqa = K_cross[obs.index].T
        alpha = _chol_solve(L, obs.y)
        A = np.linalg.solve(L, Kqa.T)
        return Kqa @ alpha, np.asarray(k_diag, float) - np.einsum("ij,ij->j", A, A)

    def kl_to_prior(self, sites):
        q = self.posterior(sites)
        m, V = fam.gaussian_full_moments(q)
        Lk = _chol_with_jitter(self.K, "kernel matrix")
        half = np.linalg.solve(Lk, m)
        Kinv = _chol_solve(Lk, np.eye(self.n_factors))
        sign, logdet_V = np.linalg.slogdet(V)
        if sign <= 0:
            raise DomainError("posterior covariance lost positivity")
        logdet_K = 2.0 * np.log(np.diag(Lk)).sum()
        return 0.5 * (np.trace(Kinv @ V) + half @ half - self.n_factors
                      + logdet_K - logdet_V)


def gp_marginals(spec, sites, query=None):
    """Posterior means/variances of the GP backend at the queried indices."""
    return spec.marginals(sites, query)


# ---------------------------------------------------------------------------
# Kalman smoothing on the scalar random-walk chain


class Kalman:
    def __init__(self, horizon, sigma2, initial_var=1.0):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        if sigma2 <= 0 or initial_var <= 0:
            raise DomainError("chain variances must be positive")
        self.horizon = int(horizon)
        self.sigma2 = float(sigma2)
        self.initial_var = float(initial_var)
        self.n_factors = self.horizon

    def marginals(self, sites, query=None):
        """Smoothed means/variances of z_0..z_T (sites act on z_1..z_T)."""
        sites = _as_site_bank(sites, self.horizon)
        active = (sites[:, 0] != 0.0) | (sites[:, 1] != 0.0)
        if np.any(active & (sites[:, 1] >= 0.0)):
            raise DomainError("chain sites need negative lambda2 "
                              "(positive pseudo-variance)")
        T = self.horizon
        m_f = np.zeros(T + 1)
        p_f = np.zeros(T + 1)
        m_f[0], p_f[0] = 0.0, self.initial_var
        m_pred = np.zeros(T + 1)
        p_pred = np.zeros(T + 1)
        for k in range(1, T + 1):
            m_pred[k] = m_f[k - 1]
            p_pred[k] = p_f[k - 1] + self.sigma2
            if active[k - 1]:
                s2 = -0.5 / sites[k - 1, 1]
                y = sites[k - 1, 0] * s2
                gain = p_pred[k] / (p_pred[k] + s2)
                m_f[k] = m_pred[k] + gain * (y - m_pred[k])
                p_f[k] = (1.0 - gain) * p_pred[k]
            else:
                m_f[k], p_f[k] = m_pred[k], p_pred[k]
        m_s = m_f.copy()
        p_s = p_f.copy()
        for k in range(T - 1, -1, -1):
            c = p_f[k] / p_pred[k + 1]
            m_s[k] = m_f[k] + c * (m_s[k + 1] - m_pred[k + 1])
            p_s[k] = p_f[k] + c * c * (p_s[k + 1] - p_pred[k + 1])
        if query is None:
            return m_s, p_s
        query = np.asarray(query, dtype=int)
        return m_s[query], p_s[query]

    def factor_marginals(self, sites, query=None):
        """Marginals aligned to the factor bank: factor k acts on z_{k+1}."""
        means, variances = self.marginals(sites)
        if query is None:
            return means[1:], variances[1:]
        query = np.asarray(query, dtype=int)
        return means[query + 1], variances[query + 1]

    def chain_covariance(self):
        """Dense prior covariance: Cov(z_i, z_j) = v0 + s2 * min(i, j)."""
        idx = np.arange(self.horizon + 1)
        return self.initial_var + self.sigma2 * np.minimum.outer(idx, idx)

    def posterior(self, sites):
        """Full Gaussian over (z_0 .. z_T); dense, for inspection and tests."""
        sites = _as_site_bank(sites, self.horizon)
        K = self.chain_covariance()
        T = -2.0 * np.concatenate([[0.0], sites[:, 1]])
        B = np.eye(self.horizon + 1) + K * T[None, :]
        V = np.linalg.solve(B, K)
        h = np.concatenate([[0.0], sites[:, 0]])
        return fam.gaussian_full_nat(V @ h, 0.5 * (V + V.T))

    def kl_to_prior(self, sites):
        # dense route; the chain is short in every use here
        K = self.chain_covariance()
        T = -2.0 * np.concatenate([[0.0], sites[:, 1]])
        B = np.eye(self.horizon + 1) + K * T[None, :]
        V = np.linalg.solve(B, K)
        V = 0.5 * (V + V.T)
        h = np.concatenate([[0.0], sites[:, 0]])
        m = V @ h
        Lk = _chol_with_jitter(K, "chain covariance")
        half = np.linalg.solve(Lk, m)
        Kinv = _chol_solve(Lk, np.eye(K.shape[0]))
        sign, logdet_V = np.linalg.slogdet(V)
        if sign <= 0:
            raise DomainError("posterior covariance lost positivity")
        logdet_K = 2.0 * np.log(np.diag(Lk)).sum()
        return 0.5 * (np.trace(Kinv @ V) + half @ half - K.shape[0]
                      + logdet_K - logdet_V)


def kalman_marginals(spec, sites):
    """Smoothed per-time marginals of the random-walk chain backend."""
    return spec.marginals(sites)


# ---------------------------------------------------------------------------
# scalar Gamma prior


class GammaPrior:
    n_factors = 1

    def __init__(self, a, b):
        if a <= 0 or b <= 0:
            raise DomainError("Gamma prior needs a, b > 0")
        self.a = float(a)
        self.b = float(b)

    def posterior(self, site):
        site = np.asarray(site, dtype=float).reshape(-1)
        alpha = self.a + site[1]
        beta = self.b - site[0]
        if alpha <= 0 or beta <= 0:
            raise DomainError("combined Gamma parameters left the domain "
                              "(alpha=%g, beta=%g)" % (alpha, beta))
        return fam.gamma_nat(alpha, beta)

    def marginals(self, sites, query=None):
        return self.posterior(np.asarray(sites, dtype=float).reshape(-1))

    def factor_marginals(self, sites, query=None):
        return self.marginals(sites)

    def kl_to_prior(self, sites):
        return fam.kl(self.marginals(sites), fam.gamma_nat(self.a, self.b))


def gamma_posterior(spec, site):
    """Exponent addition: Ga(a + site2, b - site1)."""
    return spec.posterior(site)
