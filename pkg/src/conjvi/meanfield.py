"""Mean-field inference on a Bayesian network with conjugate messages.

Every latent node carries a minimal exponential family; every factor declares,
per neighbouring node, a conjugate natural-parameter message (a function of
the other neighbours' current moments) and optionally a non-conjugate
log-density part exposed as a ScalarFunction of that node's variable.  One
node update sums conjugate messages with stochastic (or exact) gradients of
the non-conjugate parts and takes the convex combination

    lambda_{i,t+1} = (1 - beta) lambda_{i,t} + beta lambda~_{i,t},

guarded by the same step-halving policy as the site recursion.  With no
non-conjugate parts and beta = 1 a sequential sweep is exactly coordinate
ascent (VMP); with exact gradients and beta = 1 a node update is an NC-VMP
step.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _streams
from . import families as fam
from .core import RunTrace, TraceRow
from .errors import DomainError
from .gradients import fisher_solve_grad, gauss_grad_mean


@dataclass
class Node:
    """A latent node: family, current natural parameters, display name."""

    family: fam.FamilyKind
    lam: fam.NatParams
    name: str = ""

    def moments(self):
        mu = fam.nat_to_mean(self.lam)
        return mu.values


class Factor:
    """Base factor: declares neighbours and per-neighbour message functions.

    Subclasses implement conj_message(net, i) returning the natural-parameter
    message to node i (expectations over the other neighbours are taken from
    the net's current state) and optionally nonconj_part(net, i) returning a
    ScalarFunction in node i's variable.
    """

    neighbors = ()

    def conj_message(self, net, i):
        raise NotImplementedError

    def nonconj_part(self, net, i):
        return None


class GaussianObservation(Factor):
    """N(y | z_i, tau) with known variance tau: message (y/tau, -1/(2 tau))."""

    def __init__(self, i, y, tau):
        self.neighbors = (i,)
        self.y = float(y)
        self.tau = float(tau)

    def conj_message(self, net, i):
        return np.array([self.y / self.tau, -0.5 / self.tau])


class GaussianChain(Factor):
    """N(z_j | z_i, s2): messages (E[z_j]/s2, -1/(2 s2)) and symmetrically."""

    def __init__(self, i, j, s2=1.0):
        self.neighbors = (i, j)
        self.s2 = float(s2)

    def conj_message(self, net, i):
        other = self.neighbors[1] if i == self.neighbors[0] else self.neighbors[0]
        mean_other = net.nodes[other].moments()[0]
        return np.array([mean_other / self.s2, -0.5 / self.s2])


class GaussianPrior(Factor):
    """N(z_i | m0, v0): constant message."""

    def __init__(self, i, m0=0.0, v0=1.0):
        self.neighbors = (i,)
        self.m0 = float(m0)
        self.v0 = float(v0)

    def conj_message(self, net, i):
        return np.array([self.m0 / self.v0, -0.5 / self.v0])


class GammaPriorFactor(Factor):
    """Ga(z_i | a, b): constant message (-b, a-1) in (z, log z) coordinates."""

    def __init__(self, i, a, b):
        self.neighbors = (i,)
        self.a = float(a)
        self.b = float(b)

    def conj_message(self, net, i):
        return np.array([-self.b, self.a - 1.0])


class NonConjugateObservation(Factor):
    """A likelihood with no conjugate part: log p(y | z_i) as a ScalarFunction."""

    def __init__(self, i, scalar_function):
        self.neighbors = (i,)
        self.fn = scalar_function

    def conj_message(self, net, i):
        return np.zeros(2)

    def nonconj_part(self, net, i):
        return self.fn


@dataclass
class BayesNet:
    nodes: list
    factors: list

    def neighbors_of(self, i):
        return [a for a in self.factors if i in a.neighbors]

    def copy_state(self):
        return [node.lam for node in self.nodes]

    def natural_params(self):
        return [np.array(node.lam.values) for node in self.nodes]


@dataclass
class NodeState:
    lam: fam.NatParams
    message_sum: np.ndarray


def conjugate_message(net, factor, i):
    """Expectation of the factor's conjugate natural parameter for node i."""
    return np.asarray(factor.conj_message(net, i), dtype=float)


def _node_target(net, i, mc_samples, rng, exact):
    """lambda~_i = sum_a [conjugate message + mean-parameter gradient]."""
    node = net.nodes[i]
    total = np.zeros(node.lam.values.shape)
    for factor in net.neighbors_of(i):
        total += conjugate_message(net, factor, i)
        fn = factor.nonconj_part(net, i)
        if fn is None:
            continue
        if isinstance(node.family, fam.GaussianScalarKind):
            est = gauss_grad_mean(fn, node.lam, mc_samples, rng)
        else:
            est = fisher_solve_grad(fn, node.lam, mc_samples, rng)
        if exact and est.estimator != "exact":
            raise DomainError("exact gradients requested but factor %r has "
                              "no closed form" % factor)
        total += est.g
    return total


def node_update(net, i, beta, mc_samples, rng, max_halvings=30):
    """One guarded convex-combination update of node i; returns NodeState."""
    node = net.nodes[i]
    target = _node_target(net, i, mc_samples, rng, exact=False)
    eff = beta
    for _ in range(max_halvings + 1):
        candidate = (1.0 - eff) * node.lam.values + eff * target
        try:
            lam = fam.NatParams(node.family, candidate)
            fam.nat_to_mean(lam)  # domain check
            return NodeState(lam, target)
        except DomainError:
            eff *= 0.5
    return NodeState(node.lam, target)


def ncvmp_step(net, i):
    """One NC-VMP update: exact gradients, beta = 1.

    Equals node_update with beta=1 when every non-conjugate part carries a
    closed-form gradient; raises if a factor cannot provide one.
    """
    target = _node_target(net, i, 0, None, exact=True)
    lam = fam.NatParams(net.nodes[i].family, target)
    fam.nat_to_mean(lam)
    return lam


def run_meanfield(net, schedule, cfg, eval_hooks=None):
    """Iterate node updates under a schedule from {sequential, parallel,
    doubly-stochastic(B)}; returns (net, RunTrace).

    The parallel schedule computes every target from the iteration-t snapshot
    before committing any node.  The doubly-stochastic schedule updates B
    uniformly-sampled nodes per iteration with unscaled gradients.
    """
    if isinstance(schedule, tuple):
        kind, batch = schedule
    else:
        kind, batch = schedule, None
    if kind not in ("sequential", "parallel", "doubly-stochastic"):
        raise ValueError("unknown schedule %r" % kind)
    n_nodes = len(net.nodes)
    beta = cfg.schedule.beta
    trace = RunTrace()
    import time
    start = time.perf_counter()
    for t in range(1, cfg.max_iters + 1):
        halvings = 0
        if kind == "sequential":
            order = range(n_nodes)
            for i in order:
                rng = _streams.substream(cfg.seed, _streams.MC, t, i)
                state = node_update(net, i, beta, cfg.mc_samples, rng,
                                    cfg.guard_max_halvings)
                net.nodes[i].lam = state.lam
        elif kind == "parallel":
            updates = []
            for i in range(n_nodes):
                rng = _streams.substream(cfg.seed, _streams.MC, t, i)
                updates.append(node_update(net, i, beta, cfg.mc_samples, rng,
                                           cfg.guard_max_halvings))
            for i, state in enumerate(updates):
                net.nodes[i].lam = state.lam
        else:
            b = batch or cfg.minibatch or 1
            pick_rng = _streams.substream(cfg.seed, _streams.MINIBATCH, t)
            picked = np.sort(pick_rng.choice(n_nodes, size=b, replace=False))
            for i in picked:
                rng = _streams.substream(cfg.seed, _streams.MC, t, int(i))
                state = node_update(net, int(i), beta, cfg.mc_samples, rng,
                                    cfg.guard_max_halvings)
                net.nodes[int(i)].lam = state.lam
        metrics = eval_hooks(net, t) if eval_hooks else {}
        trace.append(TraceRow(t, (time.perf_counter() - start) * 1e3,
                              metrics.get("neg_elbo", float("nan")),
                              metrics.get("train_logloss", float("nan")),
                              metrics.get("test_logloss", float("nan")),
                              halvings))
    return net, trace


# ---------------------------------------------------------------------------
# demo nets


def gaussian_chain_net(observations, tau=1.0, s2=1.0, prior_var=1.0):
    """Random-walk chain z_1 .. z_M with Gaussian observations (conjugate)."""
    m = len(observations)
    nodes = [Node(fam.GAUSSIAN_SCALAR, fam.gaussian_nat(0.0, 1.0), "z%d" % i)
             for i in range(m)]
    factors = [GaussianPrior(0, 0.0, prior_var)]
    factors += [GaussianChain(i, i + 1, s2) for i in range(m - 1)]
    factors += [GaussianObservation(i, y, tau) for i, y in enumerate(observations)]
    return BayesNet(nodes, factors)


def logit_chain_net(labels, s2=1.0, prior_var=1.0, exact=False, quad_nodes=64):
    """The same chain with Bernoulli-logit observations (non-conjugate)."""
    from .gradients import with_quadrature_expectation
    from .models import make_logit_function

    m = len(labels)
    nodes = [Node(fam.GAUSSIAN_SCALAR, fam.gaussian_nat(0.0, 1.0), "z%d" % i)
             for i in range(m)]
    factors = [GaussianPrior(0, 0.0, prior_var)]
    factors += [GaussianChain(i, i + 1, s2) for i in range(m - 1)]
    for i, y in enumerate(labels):
        fn = make_logit_function(y)
        if exact:
            fn = with_quadrature_expectation(fn, quad_nodes)
        factors.append(NonConjugateObservation(i, fn))
    return BayesNet(nodes, factors)


def gamma_shape_net(y, a, b):
    """The scalar Gamma-shape model as a one-node net."""
    from .models import make_gamma_shape_function

    nodes = [Node(fam.GAMMA, fam.gamma_nat(a, b), "z")]
    factors = [GammaPriorFactor(0, a, b),
               NonConjugateObservation(0, make_gamma_shape_function(y))]
    return BayesNet(nodes, factors)
