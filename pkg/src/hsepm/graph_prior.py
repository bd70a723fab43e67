"""G-HSEPM transition prior: sparse Dirichlet concentrations ``alpha = z * w``.

The binary community graph ``z`` is generated from a two-layer Poisson-gamma
hierarchy: ``z[k1, k2] = 1(omega >= 1)`` with
``omega ~ Pois(sum_{d1, d2} m[k1, d1] v[d1, d2] m[k2, d2])``.

Diagonal entries ``z[k, k]`` are held at one (self-excitation is always
allowed) and take no part in the hierarchy, so every ``m`` update stays
gamma-Poisson conjugate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from hsepm.distributions import (
    TINY,
    as_generator,
    crt_many,
    partition_many,
    sample_dirichlet_columns,
    slice_sample,
    truncated_poisson_many,
)
from hsepm.nu_prior import sample_q_h

log = logging.getLogger(__name__)

DEAD_COLUMN_CONCENTRATION = 1e-3


@dataclass
class GraphPrior:
    z: np.ndarray
    w: np.ndarray
    e0: float = 1.0
    lq: np.ndarray | None = None
    h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        K = self.z.shape[0]
        if self.lq is None:
            self.lq = np.zeros(K)
        if self.h is None:
            self.h = np.zeros((K, K), dtype=np.int64)

    @property
    def alpha(self) -> np.ndarray:
        return self.z * self.w

    def copy(self) -> "GraphPrior":
        return GraphPrior(self.z.copy(), self.w.copy(), self.e0, self.lq.copy(), self.h.copy())


@dataclass
class HierarchyState:
    m: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    a: np.ndarray
    c: np.ndarray
    xi: float = 1.0
    gamma1: float = 1.0
    c0: float = 1.0
    beta: float = 1.0
    omega: np.ndarray | None = None
    omega_sub: np.ndarray | None = field(default=None, repr=False)
    l_kd: np.ndarray | None = field(default=None, repr=False)
    l_dd: np.ndarray | None = field(default=None, repr=False)
    l_hat: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        K, D = self.m.shape
        if self.omega is None:
            self.omega = np.zeros((K, K), dtype=np.int64)
        if self.omega_sub is None:
            self.omega_sub = np.zeros((K, D, D, K), dtype=np.int64)
        if self.l_kd is None:
            self.l_kd = np.zeros((K, D), dtype=np.int64)
        if self.l_dd is None:
            self.l_dd = np.zeros((D, D), dtype=np.int64)
        if self.l_hat is None:
            self.l_hat = np.zeros(D, dtype=np.int64)

    @property
    def K(self) -> int:
        return int(self.m.shape[0])

    @property
    def D(self) -> int:
        return int(self.m.shape[1])


def link_rates(hier: HierarchyState) -> np.ndarray:
    """``R[k1, k2] = sum_{d1, d2} m[k1, d1] v[d1, d2] m[k2, d2]``."""
    return hier.m @ hier.v @ hier.m.T


def v_shapes(lam, xi) -> np.ndarray:
    s = np.outer(lam, lam)
    np.fill_diagonal(s, xi * lam)
    return s


def v_exposure(m) -> np.ndarray:
    """``theta[d1, d2] = sum over k1 != k2 of m[k1, d1] m[k2, d2]``."""
    col = m.sum(axis=0)
    return np.maximum(np.outer(col, col) - m.T @ m, 0.0)


# ---------------------------------------------------------------------------
# transition kernel and community graph
# ---------------------------------------------------------------------------


def transition_support(gp: GraphPrior, L) -> np.ndarray:
    """Cells of ``pi`` that a draw from :func:`sample_transition_ghsepm` may leave nonzero."""
    conc = gp.alpha + L
    support = conc > 0
    support[:, ~support.any(axis=0)] = True
    return support


def sample_transition_ghsepm(gp: GraphPrior, L, rng) -> np.ndarray:
    """Column ``k`` of ``pi`` from ``Dir(alpha[:, k] + L[:, k])``; cells with both zero stay 0."""
    conc = gp.alpha + L
    dead = ~(conc.sum(axis=0) > 0)
    for k in np.flatnonzero(dead):
        log.warning("transition column %d has no support; using symmetric Dir(%g)", k, DEAD_COLUMN_CONCENTRATION)
        conc[:, k] = DEAD_COLUMN_CONCENTRATION
    return sample_dirichlet_columns(conc, rng)


def z_posterior_prob(link_prob, lq, w=None, e0: float = 1.0) -> np.ndarray:
    """``Pr(z = 1 | h = 0)``.

    With ``w`` given, the likelihood of no tables is ``exp(-w lq)``; without
    it ``w ~ Gam(e0, e0)`` is integrated out, giving ``(e0 / (e0 + lq))^e0``.
    """
    if w is None:
        like = np.exp(-e0 * np.log1p(lq / e0))
    else:
        like = np.exp(-w * lq)
    num = link_prob * like
    den = num + (1.0 - link_prob)
    return np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)


def sample_graph_indicators(gp: GraphPrior, hier: HierarchyState, L, rng, integrate_w: bool = False):
    """Draw ``q`` and ``h`` given ``alpha``, then each off-diagonal ``z``.

    ``integrate_w`` draws ``z`` with ``w`` integrated out (the pair ``(z, w)``
    is then an exact joint draw once :func:`sample_graph_weights` follows).
    """
    gen = as_generator(rng)
    K = gp.z.shape[0]
    gp.lq, gp.h = sample_q_h(gp.alpha, L, gen)
    lq = np.broadcast_to(gp.lq[None, :], (K, K))
    link_prob = -np.expm1(-link_rates(hier))
    p1 = z_posterior_prob(link_prob, lq, None if integrate_w else gp.w, gp.e0)
    u = gen.random((K, K))
    z = (u < p1).astype(np.int64)
    z[gp.h > 0] = 1
    np.fill_diagonal(z, 1)
    gp.z = z
    return gp


def sample_graph_weights(gp: GraphPrior, L, rng) -> np.ndarray:
    K = gp.z.shape[0]
    lq = np.broadcast_to(gp.lq[None, :], (K, K))
    shape = gp.e0 + gp.h
    rate = gp.e0 + gp.z * lq
    gp.w = np.maximum(as_generator(rng).standard_gamma(shape) / rate, TINY)
    return gp.w


# ---------------------------------------------------------------------------
# hierarchy
# ---------------------------------------------------------------------------


def sample_hierarchy_counts(gp: GraphPrior, hier: HierarchyState, rng):
    """``omega`` from a truncated Poisson where ``z = 1`` and its split over ``(d1, d2)``."""
    gen = as_generator(rng)
    K, D = hier.K, hier.D
    off = ~np.eye(K, dtype=bool)
    active = (gp.z == 1) & off
    k1, k2 = np.nonzero(active)
    cell = hier.m[k1][:, :, None] * hier.v[None, :, :] * hier.m[k2][:, None, :]
    cell = cell.reshape(k1.shape[0], D * D)
    omega = np.zeros((K, K), dtype=np.int64)
    sub = np.zeros((K, D, D, K), dtype=np.int64)
    if k1.shape[0]:
        tot = truncated_poisson_many(cell.sum(axis=1), gen)
        split = partition_many(tot, cell, gen).reshape(-1, D, D)
        omega[k1, k2] = tot
        sub[k1, :, :, k2] = split
    hier.omega = omega
    hier.omega_sub = sub
    return hier


def membership_counts(hier: HierarchyState) -> np.ndarray:
    """``omega_kd``: subcounts touching ``(k, d)`` in either role."""
    sub = hier.omega_sub
    return sub.sum(axis=(2, 3)) + sub.sum(axis=(0, 1)).T


def sample_hier_memberships(hier: HierarchyState, e0: float, j0: float, rng, ck_shape: str = "conjugate"):
    """Per community: CRT counts, ``a_k``, ``m_k`` and ``c_k`` in that order."""
    gen = as_generator(rng)
    K, D = hier.K, hier.D
    counts = membership_counts(hier)
    vsym = hier.v + hier.v.T
    col = hier.m.sum(axis=0)
    for k in range(K):
        rest = col - hier.m[k]
        p = vsym @ rest
        hier.l_kd[k] = crt_many(counts[k], np.full(D, hier.a[k]), gen)
        lg = np.log1p(p / hier.c[k])
        hier.a[k] = max(gen.standard_gamma(e0 + hier.l_kd[k].sum()) / (j0 + lg.sum()), TINY)
        new = np.maximum(gen.standard_gamma(hier.a[k] + counts[k]) / (hier.c[k] + p), TINY)
        col = rest + new
        hier.m[k] = new
        shape = 1.0 + hier.a[k] * (D if ck_shape == "conjugate" else 1)
        hier.c[k] = max(gen.standard_gamma(shape) / (1.0 + new.sum()), TINY)
    return hier


def sample_hier_core(hier: HierarchyState, e0: float, j0: float, rng):
    """CRT counts on ``v``, then ``lambda`` (sequential), ``xi`` and ``v``."""
    gen = as_generator(rng)
    D = hier.D
    theta = v_exposure(hier.m)
    counts = hier.omega_sub.sum(axis=(0, 3))
    shapes = v_shapes(hier.lam, hier.xi)
    hier.l_dd = crt_many(counts.ravel(), shapes.ravel(), gen).reshape(D, D)
    lg = np.log1p(theta / hier.beta)
    lgs = lg + lg.T
    l = hier.l_dd
    n = l.sum(axis=0) + l.sum(axis=1) - np.diag(l)
    for d in range(D):
        others = np.delete(hier.lam * lgs[d], d).sum()
        rate = hier.c0 + others + hier.xi * lg[d, d]
        hier.lam[d] = max(gen.standard_gamma(hier.gamma1 / D + n[d]) / rate, TINY)
    shape = e0 + np.trace(l)
    rate = j0 + np.sum(hier.lam * np.diag(lg))
    hier.xi = max(gen.standard_gamma(shape) / rate, TINY)
    shapes = v_shapes(hier.lam, hier.xi)
    hier.v = np.maximum(gen.standard_gamma(shapes + counts) / (hier.beta + theta), TINY)
    return hier


def lambda_exposure(hier: HierarchyState) -> np.ndarray:
    """Poisson rate multiplying ``lambda_d`` in the collapsed-``v`` representation."""
    D = hier.D
    lg = np.log1p(v_exposure(hier.m) / hier.beta)
    lgs = lg + lg.T
    out = np.empty(D)
    for d in range(D):
        out[d] = np.delete(hier.lam * lgs[d], d).sum() + hier.xi * lg[d, d]
    return out


def gamma1_log_density(g, lam, c0) -> float:
    """Log density of ``gamma1`` given ``lambda`` under a ``Gam(1, 1)`` prior."""
    if g <= 0:
        return -np.inf
    D = lam.shape[0]
    a = g / D
    return float(-g + np.sum(a * np.log(c0) + (a - 1.0) * np.log(lam) - gammaln(a)))


def sample_hier_hypers(
    hier: HierarchyState,
    f0: float,
    g0: float,
    rng,
    ck_shape: str = "conjugate",
    freeze_beta: bool = False,
    gamma1_update: str = "slice",
):
    """``beta`` against the ``v`` draws, then ``gamma1`` and ``c0``."""
    gen = as_generator(rng)
    D = hier.D
    if not freeze_beta:
        shapes = v_shapes(hier.lam, hier.xi)
        hier.beta = max(gen.standard_gamma(f0 + shapes.sum()) / (g0 + hier.v.sum()), TINY)
    if gamma1_update == "crt":
        l = hier.l_dd
        n = l.sum(axis=0) + l.sum(axis=1) - np.diag(l)
        hier.l_hat = crt_many(n, np.full(D, hier.gamma1 / D), gen)
        lp = np.log1p(lambda_exposure(hier) / hier.c0)
        hier.gamma1 = max(gen.standard_gamma(1.0 + hier.l_hat.sum()) / (1.0 + lp.sum() / D), TINY)
    else:
        lam, c0 = hier.lam, hier.c0
        y = slice_sample(lambda u: gamma1_log_density(np.exp(u), lam, c0) + u, np.log(hier.gamma1), gen)
        hier.gamma1 = max(float(np.exp(y)), TINY)
    shape = 1.0 + (hier.gamma1 if ck_shape == "conjugate" else hier.gamma1 / D)
    hier.c0 = max(gen.standard_gamma(shape) / (1.0 + hier.lam.sum()), TINY)
    return hier
