"""The check-gradients and selftest batteries behind the CLI."""

import math

import numpy as np

from .. import families as fam
from .. import models
from ..conjugate import GP, Kalman, LinReg
from ..gradients import (ScalarFunction, fisher_solve_grad, gauss_grad_mean,
                         gauss_hermite_expectation, with_quadrature_expectation)


def check_likelihood_derivatives(fn, points, rel_tol=1e-6, fd_step=1e-6):
    """Central finite differences of value->d1 and d1->d2; max relative error."""
    worst = 0.0
    for z in points:
        d1 = float(fn.df(z))
        d1_fd = float((fn.f(z + fd_step) - fn.f(z - fd_step)) / (2 * fd_step))
        d2 = float(fn.second_derivative(z))
        d2_fd = float((fn.df(z + fd_step) - fn.df(z - fd_step)) / (2 * fd_step))
        for have, want in ((d1, d1_fd), (d2, d2_fd)):
            err = abs(have - want) / max(1.0, abs(want))
            worst = max(worst, err)
    return worst, worst <= rel_tol


def check_gradients(verbose=False, rng_seed=1234):
    """Finite-difference and cross-estimator checks; returns a report dict."""
    rng = np.random.default_rng(rng_seed)
    report = {"ok": True, "checks": []}

    def record(name, max_err, ok):
        report["checks"].append({"name": name, "max_rel_err": max_err, "ok": ok})
        report["ok"] = report["ok"] and ok
        if verbose:
            print("%-44s max rel err %.3e  %s"
                  % (name, max_err, "PASS" if ok else "FAIL"))

    # derivative triples of each likelihood kind at random points
    for kind, z_low, z_high in (("bernoulli-logit", -8, 8),
                                ("bernoulli-probit", -6, 6),
                                ("gamma-shape", 0.2, 12.0)):
        worst = 0.0
        for _ in range(20):
            y = float(rng.integers(0, 2)) if kind.startswith("bernoulli") \
                else float(rng.uniform(0.5, 4.0))
            fn = models.make_likelihood(kind, y)
            pts = rng.uniform(z_low, z_high, size=3)
            err, _ = check_likelihood_derivatives(fn, pts)
            worst = max(worst, err)
        record("derivatives: %s" % kind, worst, worst <= 1e-5)

    # cross-estimator agreement on a logistic-Gaussian case
    fn = models.make_logit_function(1.0)
    q = fam.gaussian_nat(0.4, 0.9)
    exact = with_quadrature_expectation(fn)
    g_exact = gauss_grad_mean(exact, q, 1, rng).g
    n = 200_000
    g_mc = gauss_grad_mean(fn, q, n, rng).g
    g_fisher = fisher_solve_grad(fn, q, n, rng).g
    err_mc = np.max(np.abs(g_mc - g_exact) / np.maximum(1e-3, np.abs(g_exact)))
    err_fisher = np.max(np.abs(g_fisher - g_exact)
                        / np.maximum(1e-3, np.abs(g_exact)))
    record("cross-estimator: OA MC vs quadrature", float(err_mc), err_mc < 0.05)
    record("cross-estimator: Fisher-solve vs quadrature", float(err_fisher),
           err_fisher < 0.05)

    # conjugate integrands recover their coefficients through the solve
    c = np.array([0.7, -0.3])
    h = ScalarFunction(f=lambda z: c[0] * z + c[1] * np.log(z),
                       exact_mean_grad=lambda mu: c)
    g = fisher_solve_grad(h, fam.gamma_nat(2.5, 1.5), 10, rng).g
    err = float(np.max(np.abs(g - c)))
    record("fisher-solve: conjugate integrand", err, err < 1e-10)
    return report


def selftest(verbose=False, rng_seed=99):
    """Fast battery over the numerical kernels; True when everything passes."""
    rng = np.random.default_rng(rng_seed)
    ok = True

    def record(name, passed):
        nonlocal ok
        ok = ok and passed
        if verbose:
            print("%-44s %s" % (name, "PASS" if passed else "FAIL"))

    # dual round trips
    worst = 0.0
    for _ in range(200):
        lam = fam.gaussian_nat(rng.normal(0, 3), rng.uniform(0.05, 20))
        back = fam.mean_to_nat(fam.nat_to_mean(lam))
        worst = max(worst, np.max(np.abs(back.values - lam.values)
                                  / np.maximum(1e-12, np.abs(lam.values))))
    record("dual round trip, scalar Gaussian", worst < 1e-10)
    worst = 0.0
    for _ in range(200):
        lam = fam.gamma_nat(rng.uniform(0.2, 30), rng.uniform(0.1, 20))
        back = fam.mean_to_nat(fam.nat_to_mean(lam))
        worst = max(worst, np.max(np.abs(back.values - lam.values)
                                  / np.maximum(1e-8, np.abs(lam.values))))
    record("dual round trip, Gamma", worst < 1e-8)

    # Bregman-KL equality
    worst = 0.0
    for _ in range(100):
        q1 = fam.gaussian_nat(rng.normal(), rng.uniform(0.1, 5))
        q2 = fam.gaussian_nat(rng.normal(), rng.uniform(0.1, 5))
        k = fam.kl(q1, q2)
        b = fam.bregman_dual(fam.nat_to_mean(q1), fam.nat_to_mean(q2))
        worst = max(worst, abs(k - b) / max(1e-12, abs(k)))
    record("Bregman equals KL (Gaussian)", worst < 1e-9)

    # one-step exact recovery on a disguised-conjugate model
    X = rng.normal(size=(6, 3))
    delta = 1.7
    model = LinReg(X, delta)
    y_obs = rng.normal(size=6)
    s2 = rng.uniform(0.4, 2.0, size=6)
    sites = np.column_stack([y_obs / s2, -0.5 / s2])
    post = model.posterior(sites)
    m, V = fam.gaussian_full_moments(post)
    P = np.eye(3) / delta + (X.T / s2) @ X
    V_ref = np.linalg.inv(P)
    m_ref = V_ref @ (X.T @ (y_obs / s2))
    record("conjugate posterior matches direct solve",
           np.allclose(m, m_ref, atol=1e-10) and np.allclose(V, V_ref, atol=1e-10))

    # backend consistency: LinReg(identity design) == GP(delta I)
    sites = np.column_stack([rng.normal(size=4), -rng.uniform(0.2, 2, 4)])
    lr = LinReg(np.eye(4), delta)
    gp = GP(delta * np.eye(4))
    m1, v1 = lr.marginals(sites)
    m2, v2 = gp.marginals(sites)
    record("LinReg(I) equals GP(delta I)",
           np.allclose(m1, m2, atol=1e-9) and np.allclose(v1, v2, atol=1e-9))

    # Kalman equals GP with the chain covariance
    T = 6
    sigma2 = 0.7
    sites = np.column_stack([rng.normal(size=T), -rng.uniform(0.3, 2, T)])
    kal = Kalman(T, sigma2)
    gp = GP(kal.chain_covariance())
    gp_sites = np.vstack([np.zeros(2), sites])
    m1, v1 = kal.marginals(sites)
    m2, v2 = gp.marginals(gp_sites)
    record("Kalman equals GP(chain covariance)",
           np.allclose(m1, m2, atol=1e-9) and np.allclose(v1, v2, atol=1e-9))

    # quadrature sanity: E[z^2] under N(m, v)
    val = gauss_hermite_expectation(lambda z: z ** 2, 1.5, 0.8)
    record("Gauss-Hermite E[z^2]", abs(val - (0.8 + 1.5 ** 2)) < 1e-10)
    return ok
