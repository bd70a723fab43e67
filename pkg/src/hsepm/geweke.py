"""Joint-distribution (Geweke) test harness.

Two samplers should agree on every test function:

* marginal-conditional: independent ancestral draws of parameters and data;
* successive-conditional: alternate a full Gibbs sweep with a fresh draw of
  the data given the parameters.

Several successive-conditional chains are run from independent prior draws;
standard errors use an effective sample size from Geyer's initial monotone
sequence estimator.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from hsepm import chain as ch
from hsepm.config import RunConfig
from hsepm.distributions import RngStream
from hsepm.model import GibbsSampler, ModelState, sample_prior, simulate_network


def probe_values(state: ModelState) -> dict[str, float]:
    """Scalar summaries compared between the two samplers.

    Heavy-tailed hierarchy quantities (whose prior means do not exist) enter
    through ``log1p``.
    """
    out = {}
    T, K = state.chain.r.shape
    for t in range(T):
        for k in range(K):
            out[f"r[{t},{k}]"] = state.chain.r[t, k]
    N = state.memb.phi.shape[0]
    for i in range(N):
        for k in range(K):
            out[f"phi[{i},{k}]"] = state.memb.phi[i, k]
    if state.hsepm is not None:
        out["xi"] = state.hsepm.xi
        for k in range(K):
            out[f"nu[{k}]"] = state.hsepm.nu[k]
        out["beta"] = state.hsepm.beta
    if state.graph is not None:
        g, h = state.graph, state.hier
        for k1 in range(K):
            for k2 in range(K):
                if k1 != k2:
                    out[f"z[{k1},{k2}]"] = g.z[k1, k2]
                out[f"w[{k1},{k2}]"] = g.w[k1, k2]
        for k in range(K):
            for d in range(h.D):
                out[f"log1p m[{k},{d}]"] = np.log1p(h.m[k, d])
        for d1 in range(h.D):
            for d2 in range(h.D):
                out[f"log1p v[{d1},{d2}]"] = np.log1p(h.v[d1, d2])
        for d in range(h.D):
            out[f"log1p lambda[{d}]"] = np.log1p(h.lam[d])
        out["log1p xi"] = np.log1p(h.xi)
    return out


def autocorr(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    y = x - x.mean()
    f = np.fft.rfft(y, n=2 * n)
    acov = np.fft.irfft(f * np.conj(f))[:n] / n
    if acov[0] <= 0:
        return np.zeros(n)
    return acov / acov[0]


def effective_sample_size(x) -> float:
    """Geyer initial monotone sequence ESS of a single chain."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if n < 4 or np.ptp(x) == 0:
        return float(n)
    rho = autocorr(x)
    pairs = rho[0 : n - 1 : 2][: (n - 1) // 2] + rho[1:n:2][: (n - 1) // 2]
    tau = -1.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        tau += 2.0 * g
        prev = g
    return float(n / max(tau, 1e-12))


def mean_and_se(chains: np.ndarray) -> tuple[float, float, float]:
    """Pooled mean, standard error and total ESS over a (chains x draws) array.

    The standard error is the larger of the within-chain (ESS based) and the
    between-chain estimate, which guards against chains that sit in a tail
    for their whole length.
    """
    chains = np.atleast_2d(chains)
    C = chains.shape[0]
    ess = np.array([effective_sample_size(c) for c in chains])
    var = chains.var(axis=1, ddof=1) if chains.shape[1] > 1 else np.zeros(C)
    se = np.sqrt(np.sum(var / ess)) / C
    if C > 1:
        se = max(se, chains.mean(axis=1).std(ddof=1) / np.sqrt(C))
    return float(chains.mean()), float(se), float(ess.sum())


@dataclass
class GewekeRow:
    name: str
    stat: str
    mc_mean: float
    mc_se: float
    sc_mean: float
    sc_se: float
    sc_ess: float

    @property
    def z(self) -> float:
        se = np.hypot(self.mc_se, self.sc_se)
        return float((self.sc_mean - self.mc_mean) / se) if se > 0 else 0.0


@dataclass
class GewekeReport:
    rows: list
    seconds: float
    acceptance: float

    def failures(self, limit: float = 3.0) -> list:
        return [r for r in self.rows if abs(r.z) > limit]

    def min_ess(self) -> float:
        return min(r.sc_ess for r in self.rows)

    def summary(self, limit: float = 3.0) -> str:
        lines = []
        for r in self.rows:
            flag = "FAIL" if abs(r.z) > limit else "ok"
            lines.append(
                f"{r.name:>20s} {r.stat:4s} mc={r.mc_mean:10.4g} sc={r.sc_mean:10.4g} "
                f"z={r.z:+6.2f} ess={r.sc_ess:8.0f} {flag}"
            )
        return "\n".join(lines)


def _stack(dicts):
    names = list(dicts[0])
    return names, np.array([[d[n] for n in names] for d in dicts], dtype=np.float64)


def marginal_conditional(cfg: RunConfig, N: int, T: int, draws: int, rng: RngStream):
    out = [probe_values(sample_prior(cfg, N, T, rng.substream(i))) for i in range(draws)]
    return _stack(out)


def successive_conditional(cfg: RunConfig, N: int, T: int, chains: int, steps: int, rng: RngStream, thin: int = 1):
    sampler = GibbsSampler(cfg)
    names = None
    res = []
    proposed = accepted = 0
    for c in range(chains):
        crng = rng.substream(c)
        state = sample_prior(cfg, N, T, crng.substream(0))
        data = simulate_network(state, crng.substream(1))
        draws = []
        for it in range(steps):
            srng = crng.substream(2, it)
            sampler.sweep(state, ch.build_view(data), srng)
            # the sweep only draws from srng.gen and its substreams, so the
            # generator can carry on for the data
            data = simulate_network(state, srng)
            if it % thin == 0:
                draws.append(probe_values(state))
        names, arr = _stack(draws)
        res.append(arr)
        proposed += state.proposed
        accepted += state.accepted
    return names, np.stack(res), (accepted / proposed if proposed else 1.0)


def run_geweke(
    cfg: RunConfig,
    N: int = 6,
    T: int = 3,
    draws: int = 20000,
    chains: int = 8,
    steps: int = 5000,
    thin: int = 1,
    seed: int = 0,
) -> GewekeReport:
    """Compare the mean and variance of every test function."""
    start = time.perf_counter()
    root = RngStream(seed)
    names, mc = marginal_conditional(cfg, N, T, draws, root.substream(1))
    names2, sc, acc = successive_conditional(cfg, N, T, chains, steps, root.substream(2), thin)
    assert names == names2
    rows = []
    for j, name in enumerate(names):
        center = mc[:, j].mean()
        for stat in ("mean", "var"):
            if stat == "mean":
                a, b = mc[:, j], sc[:, :, j]
            else:
                # squared deviations from the ancestral mean estimate the variance
                a, b = (mc[:, j] - center) ** 2, (sc[:, :, j] - center) ** 2
            sc_mean, sc_se, sc_ess = mean_and_se(b)
            mc_se = a.std(ddof=1) / np.sqrt(a.shape[0])
            rows.append(GewekeRow(name, stat, float(a.mean()), float(mc_se), sc_mean, sc_se, sc_ess))
    return GewekeReport(rows, time.perf_counter() - start, acc)
