"""Gibbs kernels shared by both models.

Covers the latent edge counts, vertex memberships and scales, per-time rate
aggregates, and the backward (CRT) / forward (gamma) pass over the community
weight chain ``r``.

Index conventions (0-based throughout):

* ``pi[k1, k2]`` is the weight of source community ``k2`` on destination ``k1``;
  columns sum to one.
* ``l_split[t, k1, k2]`` counts tables at destination ``k1`` and time ``t``
  attributed to source ``k2`` at time ``t - 1``.
* ``l_dest[t, k]`` is the CRT draw for destination ``k`` (row sums of the split
  for ``t >= 1``); ``l[t, k]`` is the source total passed back to ``t - 1``
  (column sums of the split). At ``t = 0`` there is no source and
  ``l[0] = l_dest[0]``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from hsepm import kernels
from hsepm.distributions import (
    TINY,
    RngStream,
    as_generator,
    crt_many,
    partition_many,
    sample_log_gamma,
    truncated_poisson_many,
)
from hsepm.netdata import HoldoutMask, SnapshotTensor, empty_mask, training_edges

# latent-count draws are chunked so results do not depend on the thread count
COUNT_CHUNK = 4096


@dataclass
class TrainingView:
    """Index arrays derived from a tensor and its holdout mask."""

    num_nodes: int
    num_steps: int
    tt: np.ndarray
    ii: np.ndarray
    jj: np.ndarray
    mt: np.ndarray
    mi: np.ndarray
    mj: np.ndarray
    mask_ptr: np.ndarray = field(repr=False)
    mask_t: np.ndarray = field(repr=False)
    mask_j: np.ndarray = field(repr=False)

    @property
    def num_edges(self) -> int:
        return int(self.tt.shape[0])


def build_view(data: SnapshotTensor, mask: HoldoutMask | None = None) -> TrainingView:
    if mask is None:
        mask = empty_mask(data.num_nodes, data.num_steps)
    e = training_edges(data, mask)
    m = mask.masked
    n = data.num_nodes
    # per-vertex CSR of masked (t, partner) pairs, both endpoints
    own = np.concatenate([m[:, 1], m[:, 2]])
    part = np.concatenate([m[:, 2], m[:, 1]])
    tt = np.concatenate([m[:, 0], m[:, 0]])
    order = np.lexsort((part, tt, own))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, own + 1, 1)
    ptr = np.cumsum(ptr)
    return TrainingView(
        num_nodes=n,
        num_steps=data.num_steps,
        tt=np.ascontiguousarray(e[:, 0]),
        ii=np.ascontiguousarray(e[:, 1]),
        jj=np.ascontiguousarray(e[:, 2]),
        mt=np.ascontiguousarray(m[:, 0]),
        mi=np.ascontiguousarray(m[:, 1]),
        mj=np.ascontiguousarray(m[:, 2]),
        mask_ptr=ptr,
        mask_t=np.ascontiguousarray(tt[order]),
        mask_j=np.ascontiguousarray(part[order]),
    )


@dataclass
class EdgeCounts:
    """Latent counts on unmasked observed edges, aligned with ``TrainingView`` edges."""

    total: np.ndarray
    sub: np.ndarray
    by_time: np.ndarray
    by_node: np.ndarray


@dataclass
class Memberships:
    phi: np.ndarray
    scale: np.ndarray
    a0: float = 1.0


@dataclass
class CommunityChain:
    """Community weights ``r[t, k]`` and the augmentation counts of their chain.

    ``log_r`` is kept alongside ``r``: gamma draws with tiny shapes underflow,
    and the transition-layer weights need ``log r`` below the double range.
    ``r`` itself is floored at the smallest positive normal.
    """

    r: np.ndarray
    tau: float = 1.0
    log_r: np.ndarray | None = None
    l: np.ndarray | None = None
    l_dest: np.ndarray | None = None
    l_split: np.ndarray | None = None
    rho: np.ndarray | None = None
    zeta: np.ndarray | None = None
    future_rate: np.ndarray | None = None

    def __post_init__(self):
        T, K = self.r.shape
        if self.log_r is None:
            self.log_r = np.log(np.maximum(self.r, TINY))
        if self.l is None:
            self.l = np.zeros((T, K), dtype=np.int64)
        if self.l_dest is None:
            self.l_dest = np.zeros((T, K), dtype=np.int64)
        if self.l_split is None:
            self.l_split = np.zeros((T, K, K), dtype=np.int64)
        if self.rho is None:
            self.rho = np.zeros((T, K))
        if self.zeta is None:
            self.zeta = np.zeros((T, K))
        if self.future_rate is None:
            self.future_rate = np.zeros((T, K))

    def set_rates(self, r) -> None:
        self.r[:] = np.maximum(r, TINY)
        self.log_r[:] = np.log(self.r)

    @property
    def split_totals(self) -> np.ndarray:
        """``L[k1, k2]``: tables from source ``k2`` into destination ``k1`` summed over time."""
        return self.l_split.sum(axis=0)


# ---------------------------------------------------------------------------
# latent counts
# ---------------------------------------------------------------------------


def edge_rates(view: TrainingView, phi: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Per-edge, per-community Poisson rates ``r_k^(t) phi_ik phi_jk``."""
    return r[view.tt] * phi[view.ii] * phi[view.jj]


def _count_chunk(w, stream):
    lam = w.sum(axis=1)
    total = truncated_poisson_many(lam, stream)
    return total, partition_many(total, w, stream)


def sample_edge_counts(view: TrainingView, phi, r, rng, threads: int = 1) -> EdgeCounts:
    """Truncated-Poisson totals and their multinomial split for every training edge.

    ``rng`` is an :class:`RngStream`; chunk ``c`` draws from its substream ``c``
    so the result is identical for any ``threads``.
    """
    if not isinstance(rng, RngStream):
        raise TypeError("sample_edge_counts needs an RngStream for chunked substreams")
    E = view.num_edges
    K = phi.shape[1]
    w = edge_rates(view, phi, r)
    starts = list(range(0, E, COUNT_CHUNK))
    jobs = [(w[s : s + COUNT_CHUNK], rng.substream(c)) for c, s in enumerate(starts)]
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda a: _count_chunk(*a), jobs))
    else:
        parts = [_count_chunk(*a) for a in jobs]
    if parts:
        total = np.concatenate([p[0] for p in parts])
        sub = np.concatenate([p[1] for p in parts])
    else:
        total = np.zeros(0, dtype=np.int64)
        sub = np.zeros((0, K), dtype=np.int64)
    by_time, by_node = kernels.edge_totals(sub, view.tt, view.ii, view.jj, view.num_steps, view.num_nodes)
    return EdgeCounts(total, sub, by_time, by_node)


def empty_counts(view: TrainingView, K: int) -> EdgeCounts:
    E = view.num_edges
    return EdgeCounts(
        np.zeros(E, dtype=np.int64),
        np.zeros((E, K), dtype=np.int64),
        np.zeros((view.num_steps, K), dtype=np.int64),
        np.zeros((view.num_nodes, K), dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# memberships
# ---------------------------------------------------------------------------


def sample_memberships(view: TrainingView, counts: EdgeCounts, r, memb: Memberships, rng) -> np.ndarray:
    """Sequential gamma update of every ``phi_i`` in ascending vertex order (in place)."""
    gen = as_generator(rng)
    gstd = gen.standard_gamma(memb.a0 + counts.by_node)
    kernels.phi_sweep(memb.phi, gstd, memb.scale, r, view.mask_ptr, view.mask_t, view.mask_j)
    return memb.phi


def sample_vertex_scales(memb: Memberships, f0: float, g0: float, rng) -> np.ndarray:
    K = memb.phi.shape[1]
    shape = f0 + K * memb.a0
    rate = g0 + memb.phi.sum(axis=1)
    memb.scale[:] = np.maximum(as_generator(rng).standard_gamma(shape, size=rate.shape) / rate, TINY)
    return memb.scale


def aggregate_rates(view: TrainingView, phi) -> np.ndarray:
    """``s[t, k]``: sum of ``phi_ik phi_jk`` over unmasked dyads ``i < j`` at time ``t``."""
    col = phi.sum(axis=0)
    full = 0.5 * (col * col - (phi * phi).sum(axis=0))
    full = np.maximum(full, 0.0)
    s = np.repeat(full[None, :], view.num_steps, axis=0)
    if view.mt.shape[0]:
        s -= kernels.triple_products(phi, view.mt, view.mi, view.mj, view.num_steps)
        np.maximum(s, 0.0, out=s)
    return s


# ---------------------------------------------------------------------------
# community-weight chain
# ---------------------------------------------------------------------------


def prior_shapes(pi, r, init_shape) -> np.ndarray:
    """Gamma shapes of ``r``: ``init_shape`` at t = 0 and ``pi @ r[t-1]`` after."""
    T, K = r.shape
    a = np.empty((T, K))
    a[0] = init_shape
    if T > 1:
        a[1:] = r[:-1] @ pi.T
    return np.maximum(a, TINY)


def backward_pass(x_tk, chain: CommunityChain, pi, init_shape, s, rng, coupled: bool = True):
    """Draw the CRT counts from ``t = T-1`` down to 0 and the propagated rates.

    With ``coupled`` the information passed to ``t - 1`` is ``pi.T @ zeta[t]``,
    which is what the thinned Poisson counts actually carry when ``zeta`` varies
    across communities; otherwise ``zeta[t]`` is passed per community.
    """
    gen = as_generator(rng)
    r, tau = chain.r, chain.tau
    T, K = r.shape
    shapes = prior_shapes(pi, r, init_shape)
    carried = np.zeros(K)
    passed = np.zeros(K, dtype=np.int64)
    chain.l_split[:] = 0
    for t in range(T - 1, -1, -1):
        zeta = np.log1p((s[t] + carried) / tau)
        chain.zeta[t] = zeta
        chain.rho[t] = np.minimum(-np.expm1(-zeta), 1.0 - 1e-16)
        chain.future_rate[t] = carried
        m = x_tk[t] + passed
        chain.l_dest[t] = crt_many(m, shapes[t], gen)
        if t > 0:
            lr = chain.log_r[t - 1]
            w = pi * np.exp(lr - lr.max())[None, :]
            chain.l_split[t] = partition_many(chain.l_dest[t], w, gen)
            chain.l[t] = chain.l_split[t].sum(axis=0)
        else:
            chain.l[0] = chain.l_dest[0]
        carried = pi.T @ zeta if coupled else zeta
        passed = chain.l[t]
    return chain


def forward_pass(x_tk, chain: CommunityChain, pi, init_shape, s, rng):
    """Draw ``r[t]`` from ``t = 0`` up given this sweep's backward counts."""
    gen = as_generator(rng)
    r, tau = chain.r, chain.tau
    T, K = r.shape
    for t in range(T):
        prior = init_shape if t == 0 else pi @ r[t - 1]
        shape = x_tk[t] + prior
        if t + 1 < T:
            shape = shape + chain.l[t + 1]
        rate = tau + s[t] + chain.future_rate[t]
        chain.log_r[t] = sample_log_gamma(np.maximum(shape, TINY), gen) - np.log(rate)
        r[t] = np.maximum(np.exp(chain.log_r[t]), TINY)
    return chain


def chain_log_weight(x_tk, chain: CommunityChain, pi, init_shape=None, init_ref=None) -> float:
    """Log of the factor that the Dirichlet-multinomial view of the transition counts omits.

    For ``t >= 1`` this is ``a log(tau r) - lgamma(a + m)`` summed over ``k``,
    with ``a = (pi @ r[t-1])_k`` and ``m`` the Poisson count ``r[t, k]`` absorbed.
    It is the Metropolis-Hastings correction for transition-layer proposals.
    When ``init_ref`` is given the ``t = 0`` term for a parameter-dependent
    ``init_shape`` is added, relative to a Poisson view with rate ``init_ref``.
    """
    T, K = chain.r.shape
    m = x_tk.astype(np.float64).copy()
    m[:-1] += chain.l[1:]
    logr = np.log(chain.tau) + chain.log_r
    total = 0.0
    if T > 1:
        a = np.maximum(chain.r[:-1] @ pi.T, TINY)
        total += float(np.sum(a * logr[1:] - gammaln(a + m[1:])))
    if init_ref is not None:
        a0 = np.maximum(np.asarray(init_shape, dtype=np.float64), TINY)
        total += float(np.sum(a0 * (logr[0] + init_ref) - gammaln(a0 + m[0])))
    return total
