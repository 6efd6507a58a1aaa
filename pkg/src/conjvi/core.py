"""The site-parameter recursion and its run loops.

One iteration does, in order:

  1. conjugate step — exact posterior marginals of the conjugate model
     augmented with the current site bank (at t=1 the bank is zero, so the
     marginals are the prior's);
  2. per-factor stochastic (or exact) gradients of the non-conjugate terms
     with respect to the mean parameters of their marginals;
  3. convex combination of old sites and gradients with step size beta;
  4. a guard that halves the step while the combined natural parameter is
     outside the domain, falling back to the previous sites when the halving
     budget runs out (reported, never fatal).

The doubly-stochastic variant updates a uniformly-sampled minibatch of sites
with gradients scaled by N/B while every site keeps the (1-beta) decay; with
B=N it reproduces the full loop bit for bit (identical substreams).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import _streams
from .errors import DomainError


@dataclass(frozen=True)
class StepSchedule:
    """Constant step size, given directly or as beta = w / (1 + w)."""

    beta: float

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("step size must be in (0, 1], got %r" % self.beta)

    @classmethod
    def constant(cls, beta):
        return cls(float(beta))

    @classmethod
    def ratio(cls, w):
        if w <= 0:
            raise ValueError("ratio parameter w must be positive")
        return cls(w / (1.0 + w))


@dataclass
class CviConfig:
    schedule: StepSchedule
    mc_samples: int = 10
    max_iters: int = 100
    minibatch: int = None
    seed: int = 0
    guard_max_halvings: int = 30
    elbo_tol: float = None  # optional relative-change stop over a 5-iter window

    def __post_init__(self):
        if self.mc_samples < 1 or self.max_iters < 1:
            raise ValueError("counts must be >= 1")
        if self.minibatch is not None and self.minibatch < 1:
            raise ValueError("minibatch must be >= 1")


@dataclass
class SiteState:
    """Per-factor natural-parameter increments, all zero at t=0."""

    sites: np.ndarray
    iteration: int = 0

    @classmethod
    def zeros(cls, n_factors, n_params=2):
        return cls(np.zeros((n_factors, n_params)), 0)


@dataclass
class TraceRow:
    iteration: int
    elapsed_ms: float
    neg_elbo: float
    train_logloss: float
    test_logloss: float
    guard_halvings: int


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows])

    def final(self):
        return self.rows[-1] if self.rows else None


def site_update(prev, grad, beta):
    """Convex combination (1-beta) * prev + beta * grad."""
    prev = np.asarray(prev, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if prev.shape != grad.shape:
        raise ValueError("site/gradient shape mismatch: %r vs %r"
                         % (prev.shape, grad.shape))
    if not 0.0 < beta <= 1.0:
        raise ValueError("step size must be in (0, 1]")
    return (1.0 - beta) * prev + beta * grad


def conjugate_step(sites, model, query=None):
    """Exact inference in the site-augmented conjugate model.

    Returns whatever the backend's next gradient step needs: per-factor
    (means, variances) for the Gaussian backends, the posterior NatParams for
    the Gamma backend.  Out-of-domain site banks raise DomainError; callers
    that cannot tolerate that must go through guard_step.
    """
    if query is not None:
        return model.marginals(sites, query)
    return model.marginals(sites)


def guard_step(sites_proposed, sites_prev, model, beta, max_halvings):
    """Step-size halving until the combined natural parameter is valid.

    Returns (accepted sites, effective beta, number of halvings, marginals of
    the accepted iterate).  When the halving budget is exhausted the previous
    sites are kept and the effective beta is 0 (flagged via halvings ==
    max_halvings + 1); this never raises.
    """
    sites_prev = np.asarray(sites_prev, dtype=float)
    direction = np.asarray(sites_proposed, dtype=float) - sites_prev
    candidate = np.asarray(sites_proposed, dtype=float)
    eff_beta = beta
    halvings = 0
    while True:
        try:
            marginals = model.marginals(candidate)
            return candidate, eff_beta, halvings, marginals
        except DomainError:
            if halvings >= max_halvings:
                return sites_prev, 0.0, max_halvings + 1, model.marginals(sites_prev)
            halvings += 1
            eff_beta *= 0.5
            candidate = sites_prev + (eff_beta / beta) * direction


def _factor_gradients(factors, marginals, cfg, iteration, indices=None):
    """Per-factor mean-parameter gradients at the given marginals.

    Homogeneous Bernoulli factor sets evaluate through their vectorised bank
    (one antithetic draw matrix per iteration, factor n on row n, stream
    (seed, MC, t)); everything else falls back to one call per factor with
    stream (seed, MC, t, factor index).
    """
    n_total = len(factors)
    if indices is None:
        indices = np.arange(n_total)
    grads = np.zeros((n_total, 2))
    bank = getattr(factors, "bank", None)
    if bank is not None and n_total >= 2:
        means, variances = marginals
        means = np.asarray(means, dtype=float)[: len(indices)]
        variances = np.asarray(variances, dtype=float)[: len(indices)]
        subset = None if len(indices) == n_total else indices
        if bank.exact:
            grads[indices] = bank.exact_grads(means, variances, subset)
        else:
            rng = _streams.substream(cfg.seed, _streams.MC, iteration)
            grads[indices] = bank.mc_grads(means, variances, cfg.mc_samples,
                                           rng, subset)
        return grads
    for pos, n in enumerate(indices):
        rng = _streams.substream(cfg.seed, _streams.MC, iteration, n)
        q_n = marginals if not isinstance(marginals, tuple) \
            else (marginals[0][pos], marginals[1][pos])
        grads[n] = factors[n].grad(q_n, cfg.mc_samples, rng).g
    return grads


def run_cvi(model, factors, cfg, eval_hooks=None):
    """Full-batch run: returns (final posterior, SiteState, RunTrace)."""
    return _run(model, factors, cfg, eval_hooks, minibatch=None)


def run_cvi_doubly_stochastic(model, factors, cfg, eval_hooks=None):
    """Doubly-stochastic run; cfg.minibatch factors are refreshed per iteration."""
    batch = cfg.minibatch
    if batch is None or batch > len(factors):
        raise ValueError("doubly-stochastic run needs minibatch <= n_factors")
    return _run(model, factors, cfg, eval_hooks, minibatch=batch)


def _run(model, factors, cfg, eval_hooks, minibatch):
    n = len(factors)
    state = SiteState.zeros(n)
    trace = RunTrace()
    beta = cfg.schedule.beta
    start = time.perf_counter()
    marginals = model.marginals(state.sites) if n else None
    neg_elbo_window = []
    for t in range(1, cfg.max_iters + 1):
        if minibatch is None or minibatch == n:
            indices = np.arange(n)
            scale = 1.0
        else:
            batch_rng = _streams.substream(cfg.seed, _streams.MINIBATCH, t)
            indices = np.sort(batch_rng.choice(n, size=minibatch, replace=False))
            scale = n / minibatch
            marginals = model.marginals(state.sites, indices) if n else None
        try:
            grads = _factor_gradients(factors, marginals, cfg, t, indices)
        except Exception as exc:
            exc.iteration = t
            raise
        # unselected factors keep the (1-beta) decay: their gradient term is 0
        proposed = site_update(state.sites, scale * grads, beta) if n \
            else state.sites
        if n:
            sites, eff_beta, halvings, marginals_full = guard_step(
                proposed, state.sites, model, beta, cfg.guard_max_halvings)
        else:
            sites, halvings, marginals_full = state.sites, 0, None
        state = SiteState(sites, t)
        if minibatch is None:
            marginals = marginals_full
        elapsed_ms = (time.perf_counter() - start) * 1e3
        metrics = eval_hooks(model, state, t) if eval_hooks else {}
        row = TraceRow(t, elapsed_ms,
                       metrics.get("neg_elbo", float("nan")),
                       metrics.get("train_logloss", float("nan")),
                       metrics.get("test_logloss", float("nan")),
                       halvings)
        trace.append(row)
        if cfg.elbo_tol is not None and np.isfinite(row.neg_elbo):
            neg_elbo_window.append(row.neg_elbo)
            if len(neg_elbo_window) > 5:
                neg_elbo_window.pop(0)
                lo, hi = min(neg_elbo_window), max(neg_elbo_window)
                if hi - lo <= cfg.elbo_tol * max(1.0, abs(hi)):
                    break
    posterior = model.posterior(state.sites) if hasattr(model, "posterior") \
        else None
    return posterior, state, trace
