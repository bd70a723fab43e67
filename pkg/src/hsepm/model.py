"""Model state, full Gibbs sweeps and ancestral simulation for HSEPM and G-HSEPM.

A sweep visits the blocks in this order::

    latent_counts -> memberships -> backward -> forward -> transition_layer
    [G-HSEPM only] -> hierarchy_counts -> hier_memberships -> hier_core -> hier_hypers

``transition_update="mh"`` (default) proposes the transition layer from the
Dirichlet-multinomial conditional and corrects it with a Metropolis-Hastings
ratio, which keeps the sweep exact when the rate aggregates differ across
communities. ``"gibbs"`` accepts every proposal and visits the prior
parameters in their textbook order.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from hsepm import chain as ch
from hsepm.config import RunConfig
from hsepm.distributions import TINY, RngStream, as_generator, sample_dirichlet_columns, sample_log_gamma
from hsepm.graph_prior import (
    GraphPrior,
    HierarchyState,
    link_rates,
    sample_graph_indicators,
    sample_graph_weights,
    sample_hier_core,
    sample_hier_hypers,
    sample_hier_memberships,
    sample_hierarchy_counts,
    sample_transition_ghsepm,
    transition_support,
    v_shapes,
)
from hsepm.netdata import SnapshotTensor, dyad_pairs
from hsepm.nu_prior import HsepmPrior, hsepm_concentrations, sample_beta_hsepm, sample_nu_xi, sample_transition_hsepm

CHAIN_BLOCKS = ("latent_counts", "memberships", "backward", "forward", "transition_layer")
HIERARCHY_BLOCKS = ("hierarchy_counts", "hier_memberships", "hier_core", "hier_hypers")


def block_sequence(model: str) -> tuple[str, ...]:
    return CHAIN_BLOCKS + (HIERARCHY_BLOCKS if model == "ghsepm" else ())


class InvariantViolation(RuntimeError):
    def __init__(self, sweep: int, name: str, detail: str = ""):
        super().__init__(f"sweep {sweep}: invariant '{name}' failed {detail}".rstrip())
        self.sweep = sweep
        self.name = name


@dataclass
class ModelState:
    model: str
    memb: ch.Memberships
    chain: ch.CommunityChain
    pi: np.ndarray
    s: np.ndarray
    counts: ch.EdgeCounts | None = None
    hsepm: HsepmPrior | None = None
    graph: GraphPrior | None = None
    hier: HierarchyState | None = None
    # cells where pi was allowed to be nonzero when it was last drawn (G-HSEPM)
    pi_support: np.ndarray | None = None
    sweep: int = 0
    proposed: int = 0
    accepted: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def K(self) -> int:
        return int(self.pi.shape[0])

    def init_shape(self) -> np.ndarray:
        K = self.K
        if self.model == "hsepm":
            return self.chain.tau * self.hsepm.nu
        return np.full(K, 1.0 / K)

    def copy(self) -> "ModelState":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# initialisation and ancestral simulation
# ---------------------------------------------------------------------------


def init_state(cfg: RunConfig, view: ch.TrainingView, rng) -> ModelState:
    """Starting point for a fit: random memberships, flat chain, uniform kernel."""
    gen = as_generator(rng)
    N, T, K = view.num_nodes, view.num_steps, cfg.K
    phi = np.maximum(gen.gamma(cfg.a0, 1.0, size=(N, K)), TINY)
    memb = ch.Memberships(phi, np.ones(N), cfg.a0)
    chain = ch.CommunityChain(np.full((T, K), 1.0 / K), cfg.tau)
    pi = np.full((K, K), 1.0 / K)
    st = ModelState(cfg.model, memb, chain, pi, ch.aggregate_rates(view, phi))
    if cfg.model == "hsepm":
        st.hsepm = HsepmPrior(np.full(K, 1.0 / K), 1.0, 1.0, cfg.gamma0)
    else:
        D = cfg.D
        st.graph = GraphPrior(np.ones((K, K), dtype=np.int64), np.ones((K, K)), cfg.e0)
        st.hier = HierarchyState(
            m=np.maximum(gen.gamma(1.0, 1.0, size=(K, D)), TINY),
            v=np.ones((D, D)),
            lam=np.ones(D),
            a=np.ones(K),
            c=np.ones(K),
        )
    return st


def _gam(gen, shape, rate):
    return np.maximum(gen.standard_gamma(np.maximum(shape, TINY)) / rate, TINY)


def sample_prior(cfg: RunConfig, N: int, T: int, rng, beta: float = 1.0) -> ModelState:
    """Draw every parameter from its prior (hyper-hyperparameters from ``cfg``).

    ``beta`` is the value the G-HSEPM hierarchy uses when ``cfg.freeze_beta``.
    """
    gen = as_generator(rng)
    K, tau = cfg.K, cfg.tau
    if cfg.model == "hsepm":
        b = float(_gam(gen, cfg.f0, cfg.g0))
        xi = float(_gam(gen, cfg.f0, cfg.g0))
        nu = _gam(gen, np.full(K, cfg.gamma0 / K), b)
        alpha = hsepm_concentrations(nu, xi)
        prior = HsepmPrior(nu, xi, b, cfg.gamma0)
        graph = hier = None
        init = tau * nu
    else:
        D = cfg.D
        gamma1 = float(_gam(gen, 1.0, 1.0))
        c0 = float(_gam(gen, 1.0, 1.0))
        lam = _gam(gen, np.full(D, gamma1 / D), c0)
        xi = float(_gam(gen, cfg.e0, cfg.j0))
        b = beta if cfg.freeze_beta else float(_gam(gen, cfg.f0, cfg.g0))
        v = _gam(gen, v_shapes(lam, xi), b)
        a = _gam(gen, np.full(K, cfg.e0), cfg.j0)
        c = _gam(gen, np.ones(K), 1.0)
        m = _gam(gen, np.repeat(a[:, None], D, axis=1), c[:, None])
        hier = HierarchyState(m=m, v=v, lam=lam, a=a, c=c, xi=xi, gamma1=gamma1, c0=c0, beta=b)
        omega = gen.poisson(link_rates(hier))
        np.fill_diagonal(omega, 0)
        z = (omega >= 1).astype(np.int64)
        np.fill_diagonal(z, 1)
        w = _gam(gen, np.full((K, K), cfg.e0), cfg.e0)
        graph = GraphPrior(z, w, cfg.e0)
        alpha = graph.alpha
        prior = None
        init = np.full(K, 1.0 / K)
    pi = sample_dirichlet_columns(alpha, gen)
    log_r = np.empty((T, K))
    log_r[0] = sample_log_gamma(np.maximum(init, TINY), gen) - np.log(tau)
    for t in range(1, T):
        shape = pi @ np.exp(log_r[t - 1])
        log_r[t] = sample_log_gamma(np.maximum(shape, TINY), gen) - np.log(tau)
    r = np.maximum(np.exp(log_r), TINY)
    scale = _gam(gen, np.full(N, cfg.f0), cfg.g0)
    phi = _gam(gen, np.full((N, K), cfg.a0), scale[:, None])
    memb = ch.Memberships(phi, scale, cfg.a0)
    chain = ch.CommunityChain(r, tau, log_r=log_r)
    st = ModelState(cfg.model, memb, chain, pi, np.zeros((T, K)), hsepm=prior, graph=graph, hier=hier)
    return st


def simulate_network(state: ModelState, rng) -> SnapshotTensor:
    """Draw every dyad-time indicator from its Bernoulli-Poisson link."""
    gen = as_generator(rng)
    phi, r = state.memb.phi, state.chain.r
    N = phi.shape[0]
    T = r.shape[0]
    ii, jj = dyad_pairs(N)
    p = -np.expm1(-(r @ (phi[ii] * phi[jj]).T))
    tt, d = np.nonzero(gen.random(p.shape) < p)
    return SnapshotTensor(N, T, np.stack([tt, ii[d], jj[d]], axis=1))


def link_probabilities(phi, r, tt, ii, jj) -> np.ndarray:
    return -np.expm1(-np.sum(r[tt] * phi[ii] * phi[jj], axis=1))


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def uncoupled_zeta(s, tau: float) -> np.ndarray:
    """``zeta`` from the per-community recursion, which does not involve ``pi``."""
    T, K = s.shape
    z = np.zeros((T, K))
    nxt = np.zeros(K)
    for t in range(T - 1, -1, -1):
        z[t] = np.log1p((s[t] + nxt) / tau)
        nxt = z[t]
    return z


class GibbsSampler:
    """One object per configuration; ``sweep`` mutates a :class:`ModelState`."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.blocks = block_sequence(cfg.model)

    def sweep(self, state: ModelState, view: ch.TrainingView, rng: RngStream, record: bool = False) -> ModelState:
        cfg = self.cfg
        gen = rng.gen
        trace = state.trace if record else None

        def mark(name):
            if trace is not None:
                trace.append(name)

        # latent counts draw from per-chunk substreams of a dedicated child
        state.counts = ch.sample_edge_counts(view, state.memb.phi, state.chain.r, rng.substream(0), cfg.threads)
        mark("latent_counts")

        ch.sample_memberships(view, state.counts, state.chain.r, state.memb, gen)
        ch.sample_vertex_scales(state.memb, cfg.f0, cfg.g0, gen)
        state.s = ch.aggregate_rates(view, state.memb.phi)
        mark("memberships")

        x_tk = state.counts.by_time
        init = state.init_shape()
        ch.backward_pass(x_tk, state.chain, state.pi, init, state.s, gen, coupled=cfg.rho_recursion == "coupled")
        mark("backward")
        ch.forward_pass(x_tk, state.chain, state.pi, init, state.s, gen)
        mark("forward")

        if cfg.model == "hsepm":
            self._hsepm_layer(state, x_tk, gen)
        else:
            self._graph_layer(state, x_tk, gen)
        mark("transition_layer")

        if cfg.model == "ghsepm":
            hier = state.hier
            sample_hierarchy_counts(state.graph, hier, gen)
            mark("hierarchy_counts")
            sample_hier_memberships(hier, cfg.e0, cfg.j0, gen, cfg.ck_shape)
            mark("hier_memberships")
            sample_hier_core(hier, cfg.e0, cfg.j0, gen)
            mark("hier_core")
            sample_hier_hypers(hier, cfg.f0, cfg.g0, gen, cfg.ck_shape, cfg.freeze_beta, cfg.gamma1_update)
            mark("hier_hypers")

        state.sweep += 1
        if cfg.check_invariants:
            check_invariants(state, view)
        return state

    # -- transition layers ---------------------------------------------------

    def _hsepm_layer(self, state: ModelState, x_tk, gen):
        cfg = self.cfg
        chain = state.chain
        L = chain.split_totals
        l_init = chain.l[0]
        if cfg.transition_update == "gibbs":
            state.pi = sample_transition_hsepm(state.hsepm, L, gen)
            sample_nu_xi(state.hsepm, L, l_init, chain.zeta[0], cfg.tau, cfg.f0, cfg.g0, gen)
        else:
            ref = uncoupled_zeta(state.s, cfg.tau)[0]
            old = ch.chain_log_weight(x_tk, chain, state.pi, cfg.tau * state.hsepm.nu, ref)
            prop = state.hsepm.copy()
            order = gen.permutation(state.K + 1)
            sample_nu_xi(prop, L, l_init, ref, cfg.tau, cfg.f0, cfg.g0, gen, order=order)
            pi_new = sample_transition_hsepm(prop, L, gen)
            new = ch.chain_log_weight(x_tk, chain, pi_new, cfg.tau * prop.nu, ref)
            state.proposed += 1
            if np.log(gen.random()) < new - old:
                state.accepted += 1
                state.hsepm = prop
                state.pi = pi_new
            else:
                # the auxiliaries were drawn given the current prior, so keep them
                state.hsepm.lq, state.hsepm.h = prop.lq, prop.h
        sample_beta_hsepm(state.hsepm, cfg.f0, cfg.g0, gen)

    def _graph_layer(self, state: ModelState, x_tk, gen):
        cfg = self.cfg
        chain = state.chain
        L = chain.split_totals
        if cfg.transition_update == "gibbs":
            # pi is drawn before z moves, so its support follows the previous z
            state.pi_support = transition_support(state.graph, L)
            state.pi = sample_transition_ghsepm(state.graph, L, gen)
            sample_graph_indicators(state.graph, state.hier, L, gen, integrate_w=False)
            sample_graph_weights(state.graph, L, gen)
            return
        init = state.init_shape()
        old = ch.chain_log_weight(x_tk, chain, state.pi, init)
        prop = state.graph.copy()
        sample_graph_indicators(prop, state.hier, L, gen, integrate_w=True)
        sample_graph_weights(prop, L, gen)
        pi_new = sample_transition_ghsepm(prop, L, gen)
        new = ch.chain_log_weight(x_tk, chain, pi_new, init)
        state.proposed += 1
        if np.log(gen.random()) < new - old:
            state.accepted += 1
            state.graph = prop
            state.pi = pi_new
            state.pi_support = transition_support(prop, L)
        else:
            state.graph.lq, state.graph.h = prop.lq, prop.h


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def training_log_likelihood(state: ModelState, view: ch.TrainingView) -> float:
    """Bernoulli-Poisson log-likelihood of the unmasked entries (diagnostic only)."""
    r, phi = state.chain.r, state.memb.phi
    s = ch.aggregate_rates(view, phi)
    lam = np.sum(r[view.tt] * phi[view.ii] * phi[view.jj], axis=1)
    return float(-np.sum(r * s) + np.sum(lam + np.log(np.maximum(-np.expm1(-lam), TINY))))


def check_invariants(state: ModelState, view: ch.TrainingView) -> None:
    """Raise :class:`InvariantViolation` on the first broken structural invariant."""
    sw = state.sweep
    c = state.counts
    chain = state.chain
    if c is not None:
        if not np.array_equal(c.sub.sum(axis=1), c.total):
            raise InvariantViolation(sw, "count_conservation")
        if c.total.shape[0] and c.total.min() < 1:
            raise InvariantViolation(sw, "count_support")
    col = state.pi.sum(axis=0)
    if np.any(np.abs(col - 1.0) > 1e-12) or np.any(state.pi < 0):
        raise InvariantViolation(sw, "column_stochastic", f"max dev {np.abs(col - 1).max():.3g}")
    if np.any(chain.rho < 0) or np.any(chain.rho >= 1):
        raise InvariantViolation(sw, "rho_domain")
    if not np.array_equal(chain.l_split.sum(axis=1)[1:], chain.l[1:]):
        raise InvariantViolation(sw, "split_conservation")
    if not np.array_equal(chain.l_split.sum(axis=2)[1:], chain.l_dest[1:]):
        raise InvariantViolation(sw, "split_conservation")
    positives = [state.memb.phi, state.memb.scale, chain.r]
    if state.hsepm is not None:
        positives += [state.hsepm.nu, np.array([state.hsepm.xi, state.hsepm.beta])]
        if np.any(state.hsepm.h > chain.split_totals):
            raise InvariantViolation(sw, "crt_bounds")
    if state.graph is not None:
        g, hier = state.graph, state.hier
        if not np.array_equal(g.alpha, g.z * g.w) or not np.isin(g.z, (0, 1)).all():
            raise InvariantViolation(sw, "alpha_equals_z_times_w")
        off = ~np.eye(state.K, dtype=bool)
        if not np.array_equal((hier.omega >= 1)[off], (g.z == 1)[off]):
            raise InvariantViolation(sw, "omega_z_support")
        if not np.array_equal(hier.omega_sub.sum(axis=(1, 2)), hier.omega):
            raise InvariantViolation(sw, "omega_subcount_conservation")
        support = state.pi_support if state.pi_support is not None else g.alpha > 0
        if np.any(state.pi[~support] != 0):
            raise InvariantViolation(sw, "pi_zero_support")
        positives += [g.w, hier.m, hier.v, hier.lam, hier.a, hier.c]
        positives.append(np.array([hier.xi, hier.gamma1, hier.c0, hier.beta]))
    for arr in positives:
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise InvariantViolation(sw, "positivity")
