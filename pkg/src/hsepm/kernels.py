"""Hot inner loops of the Gibbs sweeps.

Every kernel exists twice: an ``@njit`` body and a vectorised numpy twin.
Both consume the same pre-drawn uniforms / standard-gamma variates, so for
identical inputs they return identical integers (and floats equal to
rounding). The public names at the bottom dispatch on ``USE_NUMBA``.
"""
from __future__ import annotations

import numpy as np

from hsepm._backend import USE_NUMBA, njit

# below this rate the zero-truncated Poisson is returned as its limit, 1
ZTP_SMALL = 1e-10
# above this rate the caller uses rejection from an untruncated Poisson
ZTP_INVERSION_MAX = 30.0
TINY = np.finfo(np.float64).tiny


# ---------------------------------------------------------------------------
# zero-truncated Poisson by inversion
# ---------------------------------------------------------------------------


@njit
def _ztp_inverse_nb(lam, u):
    n = lam.shape[0]
    out = np.empty(n, dtype=np.int64)
    for e in range(n):
        lm = lam[e]
        if lm < ZTP_SMALL:
            out[e] = 1
            continue
        p = lm / np.expm1(lm)
        cdf = p
        x = 1
        while u[e] > cdf:
            x += 1
            p = p * lm / x
            cdf = cdf + p
            if p < 1e-300:
                break
        out[e] = x
    return out


def _ztp_inverse_np(lam, u):
    lam = np.asarray(lam, dtype=np.float64)
    out = np.ones(lam.shape[0], dtype=np.int64)
    live = lam >= ZTP_SMALL
    if not live.any():
        return out
    idx = np.flatnonzero(live)
    lm = lam[idx]
    uu = u[idx]
    p = lm / np.expm1(lm)
    cdf = p.copy()
    x = np.ones(idx.shape[0], dtype=np.int64)
    act = uu > cdf
    while act.any():
        a = np.flatnonzero(act)
        x[a] += 1
        p[a] = p[a] * lm[a] / x[a]
        cdf[a] = cdf[a] + p[a]
        act[a] = (uu[a] > cdf[a]) & (p[a] >= 1e-300)
    out[idx] = x
    return out


# ---------------------------------------------------------------------------
# multinomial partition of integer totals, one uniform per unit
# ---------------------------------------------------------------------------


@njit
def _pick_nb(w, u):
    K = w.shape[0]
    tot = 0.0
    for k in range(K):
        tot += w[k]
    if tot <= 0.0:
        k = int(u * K)
        return K - 1 if k >= K else k
    target = u * tot
    cum = 0.0
    last = -1
    for k in range(K):
        cum += w[k]
        if w[k] > 0.0:
            last = k
        if cum > target:
            return k
    return last


@njit
def _partition_nb(weights, totals, u):
    E, K = weights.shape
    out = np.zeros((E, K), dtype=np.int64)
    pos = 0
    for e in range(E):
        for _ in range(totals[e]):
            out[e, _pick_nb(weights[e], u[pos])] += 1
            pos += 1
    return out


def _partition_np(weights, totals, u):
    weights = np.asarray(weights, dtype=np.float64)
    E, K = weights.shape
    out = np.zeros((E, K), dtype=np.int64)
    totals = np.asarray(totals, dtype=np.int64)
    if totals.sum() == 0:
        return out
    owner = np.repeat(np.arange(E), totals)
    cum = np.cumsum(weights, axis=1)
    tot = cum[:, -1]
    cu = cum[owner]
    target = u * tot[owner]
    k = (cu <= target[:, None]).sum(axis=1)
    over = k >= K
    if over.any():
        # rounding pushed the target past the last cell: take the last positive weight
        pos = weights[owner[over]] > 0.0
        k[over] = K - 1 - np.argmax(pos[:, ::-1], axis=1)
    dead = tot[owner] <= 0.0
    if dead.any():
        k[dead] = np.minimum((u[dead] * K).astype(np.int64), K - 1)
    np.add.at(out, (owner, k), 1)
    return out


# ---------------------------------------------------------------------------
# Chinese restaurant table counts, one uniform per customer
# ---------------------------------------------------------------------------


@njit
def _crt_nb(counts, shapes, u):
    n = counts.shape[0]
    out = np.zeros(n, dtype=np.int64)
    pos = 0
    for e in range(n):
        a = shapes[e]
        tables = 0
        for i in range(counts[e]):
            if u[pos] < a / (a + i):
                tables += 1
            pos += 1
        out[e] = tables
    return out


def _crt_np(counts, shapes, u):
    counts = np.asarray(counts, dtype=np.int64)
    n = counts.shape[0]
    total = int(counts.sum())
    if total == 0:
        return np.zeros(n, dtype=np.int64)
    owner = np.repeat(np.arange(n), counts)
    starts = np.cumsum(counts) - counts
    seat = np.arange(total) - starts[owner]
    a = shapes[owner]
    hit = u < a / (a + seat)
    return np.bincount(owner, weights=hit, minlength=n).astype(np.int64)


# ---------------------------------------------------------------------------
# sequential vertex-membership sweep
# ---------------------------------------------------------------------------


@njit
def _phi_sweep_nb(phi, gstd, scale, r, mptr, mt, mj):
    N, K = phi.shape
    T = r.shape[0]
    colsum = np.zeros(K)
    rtot = np.zeros(K)
    for i in range(N):
        for k in range(K):
            colsum[k] += phi[i, k]
    for t in range(T):
        for k in range(K):
            rtot[k] += r[t, k]
    corr = np.empty(K)
    for i in range(N):
        for k in range(K):
            corr[k] = 0.0
        for p in range(mptr[i], mptr[i + 1]):
            t = mt[p]
            j = mj[p]
            for k in range(K):
                corr[k] += r[t, k] * phi[j, k]
        for k in range(K):
            exposure = rtot[k] * (colsum[k] - phi[i, k]) - corr[k]
            if exposure < 0.0:
                exposure = 0.0
            new = gstd[i, k] / (scale[i] + exposure)
            if new < TINY:
                new = TINY
            colsum[k] += new - phi[i, k]
            phi[i, k] = new
    return phi


def _phi_sweep_np(phi, gstd, scale, r, mptr, mt, mj):
    N, K = phi.shape
    colsum = phi.sum(axis=0)
    rtot = r.sum(axis=0)
    for i in range(N):
        a, b = mptr[i], mptr[i + 1]
        if b > a:
            corr = (r[mt[a:b]] * phi[mj[a:b]]).sum(axis=0)
            exposure = rtot * (colsum - phi[i]) - corr
            exposure = np.maximum(exposure, 0.0)
        else:
            exposure = rtot * (colsum - phi[i])
        new = np.maximum(gstd[i] / (scale[i] + exposure), TINY)
        colsum += new - phi[i]
        phi[i] = new
    return phi


# ---------------------------------------------------------------------------
# sparse accumulations
# ---------------------------------------------------------------------------


@njit
def _triple_products_nb(phi, tt, ii, jj, T):
    K = phi.shape[1]
    out = np.zeros((T, K))
    for p in range(tt.shape[0]):
        t = tt[p]
        i = ii[p]
        j = jj[p]
        for k in range(K):
            out[t, k] += phi[i, k] * phi[j, k]
    return out


def _triple_products_np(phi, tt, ii, jj, T):
    out = np.zeros((T, phi.shape[1]))
    if tt.shape[0]:
        np.add.at(out, tt, phi[ii] * phi[jj])
    return out


@njit
def _edge_totals_nb(xk, tt, ii, jj, T, N):
    E, K = xk.shape
    by_time = np.zeros((T, K), dtype=np.int64)
    by_node = np.zeros((N, K), dtype=np.int64)
    for e in range(E):
        for k in range(K):
            c = xk[e, k]
            if c:
                by_time[tt[e], k] += c
                by_node[ii[e], k] += c
                by_node[jj[e], k] += c
    return by_time, by_node


def _edge_totals_np(xk, tt, ii, jj, T, N):
    K = xk.shape[1]
    by_time = np.zeros((T, K), dtype=np.int64)
    by_node = np.zeros((N, K), dtype=np.int64)
    if xk.shape[0]:
        np.add.at(by_time, tt, xk)
        np.add.at(by_node, ii, xk)
        np.add.at(by_node, jj, xk)
    return by_time, by_node


# public dispatch ------------------------------------------------------------

NUMBA_KERNELS = {
    "ztp_inverse": _ztp_inverse_nb,
    "partition": _partition_nb,
    "crt": _crt_nb,
    "phi_sweep": _phi_sweep_nb,
    "triple_products": _triple_products_nb,
    "edge_totals": _edge_totals_nb,
}
NUMPY_KERNELS = {
    "ztp_inverse": _ztp_inverse_np,
    "partition": _partition_np,
    "crt": _crt_np,
    "phi_sweep": _phi_sweep_np,
    "triple_products": _triple_products_np,
    "edge_totals": _edge_totals_np,
}
_ACTIVE = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

ztp_inverse = _ACTIVE["ztp_inverse"]
partition = _ACTIVE["partition"]
crt = _ACTIVE["crt"]
phi_sweep = _ACTIVE["phi_sweep"]
triple_products = _ACTIVE["triple_products"]
edge_totals = _ACTIVE["edge_totals"]
