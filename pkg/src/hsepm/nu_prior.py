"""HSEPM transition prior: Dirichlet columns with concentrations built from ``nu`` and ``xi``.

Column ``k`` of ``pi`` is ``Dir(nu_1 nu_k, ..., xi nu_k, ..., nu_K nu_k)`` with the
``xi nu_k`` entry on the diagonal. The updates of ``nu`` and ``xi`` integrate
``pi`` out through a beta auxiliary ``q_k`` (stored as ``lq_k = -log(1 - q_k)``)
and CRT table counts ``h``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from hsepm.distributions import TINY, as_generator, crt_many, sample_dirichlet_columns, sample_neg_log1m_beta


@dataclass
class HsepmPrior:
    nu: np.ndarray
    xi: float = 1.0
    beta: float = 1.0
    gamma0: float = 1.0
    lq: np.ndarray | None = None
    h: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        K = self.nu.shape[0]
        if self.lq is None:
            self.lq = np.zeros(K)
        if self.h is None:
            self.h = np.zeros((K, K), dtype=np.int64)

    @property
    def K(self) -> int:
        return int(self.nu.shape[0])

    def copy(self) -> "HsepmPrior":
        return HsepmPrior(self.nu.copy(), self.xi, self.beta, self.gamma0, self.lq.copy(), self.h.copy())

    def concentrations(self) -> np.ndarray:
        return hsepm_concentrations(self.nu, self.xi)


def hsepm_concentrations(nu, xi) -> np.ndarray:
    """``alpha[k1, k] = nu_k1 nu_k`` off the diagonal and ``xi nu_k`` on it."""
    alpha = np.outer(nu, nu)
    np.fill_diagonal(alpha, xi * nu)
    return alpha


def sample_columns(alpha, L, rng) -> np.ndarray:
    return sample_dirichlet_columns(alpha + L, rng)


def sample_transition_hsepm(prior: HsepmPrior, L, rng) -> np.ndarray:
    """Column ``k`` of ``pi`` from ``Dir(alpha[:, k] + L[:, k])``."""
    return sample_columns(prior.concentrations(), L, rng)


def sample_q_h(alpha, L, rng) -> tuple[np.ndarray, np.ndarray]:
    """Beta auxiliaries per column (as ``-log(1 - q)``) and CRT tables per cell.

    ``q_k ~ Beta(L_.k, alpha_.k)``; columns without counts have ``q_k = 0``.
    """
    gen = as_generator(rng)
    K = alpha.shape[0]
    col = L.sum(axis=0)
    lq = np.zeros(K)
    live = col > 0
    if live.any():
        lq[live] = sample_neg_log1m_beta(col[live], np.maximum(alpha.sum(axis=0)[live], TINY), gen)
    safe = np.where(alpha > 0, alpha, 1.0)
    h = crt_many(L.ravel(), safe.ravel(), gen).reshape(K, K)
    return lq, h


def sample_nu_xi(
    prior: HsepmPrior,
    L,
    l_init,
    zeta_init,
    tau: float,
    f0: float,
    g0: float,
    rng,
    order=None,
) -> HsepmPrior:
    """Update ``q``, ``h``, then ``xi`` and each ``nu_k`` given the table counts.

    Args:
        L: K x K transition counts (destination x source) summed over time.
        l_init: CRT counts at the first step, whose Poisson rate is
            ``tau nu_k zeta_init_k``.
        zeta_init: ``-log(1 - rho)`` at the first step.
        order: visiting order over ``0..K``, where ``K`` stands for ``xi``.
            Defaults to ``xi`` first, then ``nu`` in index order.
    """
    gen = as_generator(rng)
    K = prior.K
    prior.lq, prior.h = sample_q_h(prior.concentrations(), L, gen)
    lq = prior.lq
    h = prior.h
    n = h.sum(axis=0) + h.sum(axis=1) - np.diag(h) + l_init
    if order is None:
        order = [K, *range(K)]
    nu = prior.nu
    for k in order:
        if k == K:
            shape = f0 + np.trace(h)
            rate = g0 + np.sum(nu * lq)
            prior.xi = max(gen.standard_gamma(shape) / rate, TINY)
            continue
        others = nu.sum() - nu[k]
        rate = (
            prior.beta
            + lq[k] * (prior.xi + others)
            + (np.dot(lq, nu) - lq[k] * nu[k])
            + tau * zeta_init[k]
        )
        shape = prior.gamma0 / K + n[k]
        nu[k] = max(gen.standard_gamma(shape) / rate, TINY)
    return prior


def sample_beta_hsepm(prior: HsepmPrior, f0: float, g0: float, rng) -> float:
    shape = f0 + prior.gamma0
    rate = g0 + prior.nu.sum()
    prior.beta = max(as_generator(rng).standard_gamma(shape) / rate, TINY)
    return prior.beta
