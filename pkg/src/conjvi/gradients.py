"""Gradients of E_q[f] with respect to mean parameters.

Two stochastic routes are provided:

* gauss_grad_mean — the Gaussian route: d/dm E[f] = E[f'], d/dv E[f] = E[f'']/2,
  mapped to mean coordinates by d/dmu1 = d/dm - 2 m d/dv, d/dmu2 = d/dv.
  Draws are antithetic reparameterised pairs m +- sqrt(v) eps, which makes the
  estimate exact (any sample size) for integrands polynomial of degree <= 2.
* fisher_solve_grad — the generic route: solve C_lambda g = dE[f]/dlambda with
  the Fisher matrix evaluated analytically per family.  The lambda-gradient is
  estimated by reparameterisation for Gaussians and by the score-function
  estimator with a control variate for Gammas.  The Fisher matrix is never
  stored beyond the solve.

When a ScalarFunction carries closed-form expectation information the
estimators short-circuit to it and tag the result "exact"; that is also how
conjugate integrands reproduce their coefficient vector bitwise.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import families as fam
from .errors import DomainError, EstimationError

FD_SECOND_ORDER_STEP = 1e-5


@dataclass
class ScalarFunction:
    """A scalar integrand f with derivative evaluators (vectorised over z).

    Closed-form expectation info is optional.  For scalar-Gaussian q it is
    given as functions of the moments (m, v): exact_value, exact_dm, exact_dv.
    For other families exact_mean_grad maps MeanParams values to the gradient
    in mean coordinates directly.
    """

    f: callable
    df: callable = None
    d2f: callable = None
    exact_value: callable = None
    exact_dm: callable = None
    exact_dv: callable = None
    exact_mean_grad: callable = None

    @property
    def has_exact_gauss(self):
        return self.exact_dm is not None and self.exact_dv is not None

    def second_derivative(self, z):
        if self.d2f is not None:
            return self.d2f(z)
        h = FD_SECOND_ORDER_STEP
        return (self.df(z + h) - self.df(z - h)) / (2.0 * h)


@dataclass
class GradEstimate:
    g: np.ndarray
    n_samples: int
    estimator: str  # exact | opper-archambeau-mc | fisher-solve-mc | finite-diff

    def __post_init__(self):
        self.g = np.asarray(self.g, dtype=float)


def _check_finite(values, what):
    values = np.asarray(values)
    if not np.all(np.isfinite(values)):
        bad = np.argwhere(~np.isfinite(values))[0]
        raise EstimationError("non-finite %s in MC estimate" % what,
                              draw=tuple(bad))


def _antithetic_normal(n, rng):
    pairs = (n + 1) // 2
    eps = rng.standard_normal(pairs)
    return np.concatenate([eps, -eps])


def gauss_grad_mean(f, q, n_samples, rng):
    """Stochastic mean-parameter gradient of E_q[f] for scalar-Gaussian q."""
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    m, v = fam.gaussian_moments(q)
    if f.has_exact_gauss:
        dm = f.exact_dm(m, v)
        dv = f.exact_dv(m, v)
        return GradEstimate([dm - 2.0 * m * dv, dv], 0, "exact")
    z = m + math.sqrt(v) * _antithetic_normal(n_samples, rng)
    d1 = np.asarray(f.df(z), dtype=float)
    d2 = np.asarray(f.second_derivative(z), dtype=float)
    _check_finite(d1, "first derivative")
    _check_finite(d2, "second derivative")
    dm = d1.mean()
    dv = 0.5 * d2.mean()
    return GradEstimate([dm - 2.0 * m * dv, dv], z.size, "opper-archambeau-mc")


def fisher_solve_grad(h, lam, n_samples, rng):
    """Mean-parameter gradient via the Fisher solve C_lambda g = dE[h]/dlambda."""
    C = fam.fisher_info(lam)
    if h.exact_mean_grad is not None:
        g_mu = np.asarray(h.exact_mean_grad(fam.nat_to_mean(lam).values), dtype=float)
        g_lam = C @ g_mu
        n_used = 0
        tag = "exact"
    elif isinstance(lam.family, fam.GaussianScalarKind) and h.has_exact_gauss:
        m, v = fam.gaussian_moments(lam)
        g_mu = np.array([h.exact_dm(m, v) - 2.0 * m * h.exact_dv(m, v),
                         h.exact_dv(m, v)])
        g_lam = C @ g_mu
        n_used = 0
        tag = "exact"
    else:
        if n_samples < 2:
            raise ValueError("need n_samples >= 2")
        g_lam, n_used = _lambda_grad_mc(h, lam, n_samples, rng)
        tag = "fisher-solve-mc"
    try:
        g = np.linalg.solve(C, g_lam)
    except np.linalg.LinAlgError:
        raise DomainError("Fisher solve is singular; natural parameters too "
                          "close to the domain boundary") from None
    return GradEstimate(g, n_used, tag)


def _lambda_grad_mc(h, lam, n_samples, rng):
    family = lam.family
    if isinstance(family, fam.GaussianScalarKind):
        # reparameterisation: z = m + sqrt(v) eps, dz/dlambda = (v, v (m + z))
        m, v = fam.gaussian_moments(lam)
        z = m + math.sqrt(v) * _antithetic_normal(n_samples, rng)
        d1 = np.asarray(h.df(z), dtype=float)
        _check_finite(d1, "first derivative")
        return np.array([v * d1.mean(), v * (d1 * (m + z)).mean()]), z.size
    if isinstance(family, fam.GammaKind):
        # score function with the MC mean of h as control variate:
        # dE[h]/dlambda = E[(h(z) - E h)(phi(z) - mu)]
        z = fam.sample(lam, n_samples, rng)
        hz = np.asarray(h.f(z), dtype=float)
        _check_finite(hz, "integrand")
        mu = fam.nat_to_mean(lam).values
        phi = np.stack([z, np.log(z)], axis=1)
        centered = hz - hz.mean()
        return (centered[:, None] * (phi - mu)).mean(axis=0), z.size
    raise TypeError("no lambda-gradient estimator for %r" % family)


def finite_diff_mean_grad(f_expectation, mu, step):
    """Central-difference gradient of a scalar function of MeanParams.

    O(step^2) accurate; if a perturbed point leaves the mean domain the step
    is shrunk once (by 10x) before giving up.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    base = np.asarray(mu.values, dtype=float)
    g = np.empty_like(base)
    for i in range(base.size):
        h = step
        for attempt in range(2):
            try:
                up = fam.MeanParams(mu.family, _bump(base, i, +h))
                dn = fam.MeanParams(mu.family, _bump(base, i, -h))
                g[i] = (f_expectation(up) - f_expectation(dn)) / (2.0 * h)
                break
            except DomainError:
                if attempt == 1:
                    raise
                h = step / 10.0
    return g


def _bump(values, i, delta):
    out = values.copy()
    out[i] += delta
    return out


def mc_expectation(f, q, n_samples, rng):
    """Plain Monte Carlo mean of f under q; deterministic per stream."""
    if n_samples < 1:
        raise ValueError("need n_samples >= 1")
    z = fam.sample(q, n_samples, rng)
    values = np.asarray(f.f(z), dtype=float)
    _check_finite(values, "integrand")
    return float(values.mean())


# ---------------------------------------------------------------------------
# deterministic quadrature route (the "exact gradient" mode of the run loops)

_GH_CACHE = {}


def _gauss_hermite(n_nodes):
    if n_nodes not in _GH_CACHE:
        from scipy.special import roots_hermite

        x, w = roots_hermite(n_nodes)
        _GH_CACHE[n_nodes] = (x, w / math.sqrt(math.pi))
    return _GH_CACHE[n_nodes]


def gauss_hermite_expectation(fn, m, v, n_nodes=64):
    """E_{N(m,v)}[fn] by Gauss-Hermite quadrature; fn must vectorise."""
    x, w = _gauss_hermite(n_nodes)
    z = np.asarray(m) + math.sqrt(2.0 * max(v, 0.0)) * x
    return float(np.asarray(fn(z), dtype=float) @ w)


def with_quadrature_expectation(f, n_nodes=64):
    """A copy of f whose closed-form slots are filled by quadrature.

    dE/dm = E[f'], dE/dv = E[f'']/2 evaluated on the Gauss-Hermite grid; this
    is the deterministic gradient route for scalar-Gaussian marginals.
    """
    return ScalarFunction(
        f=f.f, df=f.df, d2f=f.d2f,
        exact_value=lambda m, v: gauss_hermite_expectation(f.f, m, v, n_nodes),
        exact_dm=lambda m, v: gauss_hermite_expectation(f.df, m, v, n_nodes),
        exact_dv=lambda m, v: 0.5 * gauss_hermite_expectation(
            f.second_derivative, m, v, n_nodes),
    )
