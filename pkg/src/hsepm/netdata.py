"""Temporal network containers, edge-list I/O, holdout masks and the synthetic generator."""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hsepm.distributions import RngStream, as_generator


class EdgeListError(ValueError):
    """Malformed or out-of-range edge-list content."""


class SpecError(ValueError):
    """Inconsistent synthetic-data specification."""


_HEADER = re.compile(r"^%\s*nodes\s*=\s*(\d+)\s+timesteps\s*=\s*(\d+)\s*$")


def num_dyads(n: int) -> int:
    return n * (n - 1) // 2


def dyad_index(i, j, n: int):
    """Row-major index of the dyad (i, j), i < j, among the upper triangle."""
    i = np.asarray(i, dtype=np.int64)
    j = np.asarray(j, dtype=np.int64)
    return i * n - i * (i + 1) // 2 + (j - i - 1)


def dyad_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.triu_indices(n, k=1)
    return ii.astype(np.int64), jj.astype(np.int64)


def _canonical(triples: np.ndarray) -> np.ndarray:
    """Order (t, i, j) rows with i < j, drop self-loops and duplicates, sort ascending."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    t, a, b = triples[:, 0], triples[:, 1], triples[:, 2]
    keep = a != b
    out = np.stack([t[keep], np.minimum(a, b)[keep], np.maximum(a, b)[keep]], axis=1)
    if out.shape[0] == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return np.unique(out, axis=0)


@dataclass(frozen=True)
class SnapshotTensor:
    """T binary symmetric N x N snapshots stored as sorted (t, i, j) rows, i < j."""

    num_nodes: int
    num_steps: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.num_nodes < 1 or self.num_steps < 1:
            raise EdgeListError("num_nodes and num_steps must be positive")
        e = _canonical(self.edges)
        if e.shape[0]:
            if e[:, 2].max() >= self.num_nodes:
                raise EdgeListError("vertex index exceeds num_nodes")
            if e[:, 0].min() < 0 or e[:, 1].min() < 0:
                raise EdgeListError("negative index")
            if e[:, 0].max() >= self.num_steps:
                raise EdgeListError("time index exceeds num_steps")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.num_steps, self.num_nodes, self.num_nodes)

    def edges_at(self, t: int) -> np.ndarray:
        lo, hi = np.searchsorted(self.edges[:, 0], [t, t + 1])
        return self.edges[lo:hi, 1:]

    def flat_keys(self) -> np.ndarray:
        """Position of each edge on the flattened dyad-time grid."""
        return self.edges[:, 0] * num_dyads(self.num_nodes) + dyad_index(
            self.edges[:, 1], self.edges[:, 2], self.num_nodes
        )

    def has_edge(self, t: int, i: int, j: int) -> bool:
        if i == j:
            return False
        i, j = min(i, j), max(i, j)
        key = t * num_dyads(self.num_nodes) + int(dyad_index(i, j, self.num_nodes))
        keys = self.flat_keys()
        pos = np.searchsorted(keys, key)
        return bool(pos < keys.shape[0] and keys[pos] == key)

    def lookup(self, tt, ii, jj) -> np.ndarray:
        """Vectorised edge membership for arrays of (t, i < j) triples."""
        key = np.asarray(tt, dtype=np.int64) * num_dyads(self.num_nodes) + dyad_index(ii, jj, self.num_nodes)
        keys = self.flat_keys()
        pos = np.searchsorted(keys, key)
        pos = np.minimum(pos, max(keys.shape[0] - 1, 0))
        if keys.shape[0] == 0:
            return np.zeros(key.shape, dtype=bool)
        return keys[pos] == key

    def dense(self) -> np.ndarray:
        b = np.zeros(self.shape, dtype=np.int8)
        t, i, j = self.edges.T
        b[t, i, j] = 1
        b[t, j, i] = 1
        return b


@dataclass(frozen=True)
class HoldoutMask:
    """Held-out dyad-time triples (t, i, j), i < j, sorted ascending."""

    masked: np.ndarray = field(repr=False)
    fraction: float
    num_nodes: int
    num_steps: int

    @property
    def size(self) -> int:
        return int(self.masked.shape[0])

    def flat_keys(self) -> np.ndarray:
        m = self.masked
        return m[:, 0] * num_dyads(self.num_nodes) + dyad_index(m[:, 1], m[:, 2], self.num_nodes)

    def contains(self, tt, ii, jj) -> np.ndarray:
        key = np.asarray(tt, dtype=np.int64) * num_dyads(self.num_nodes) + dyad_index(ii, jj, self.num_nodes)
        keys = self.flat_keys()
        if keys.shape[0] == 0:
            return np.zeros(np.shape(key), dtype=bool)
        pos = np.minimum(np.searchsorted(keys, key), keys.shape[0] - 1)
        return keys[pos] == key


def empty_mask(num_nodes: int, num_steps: int) -> HoldoutMask:
    return HoldoutMask(np.zeros((0, 3), dtype=np.int64), 0.0, num_nodes, num_steps)


# ---------------------------------------------------------------------------
# edge-list files
# ---------------------------------------------------------------------------


def load_edge_list(path) -> SnapshotTensor:
    """Read ``t i j`` lines with an optional ``% nodes=N timesteps=T`` header."""
    n_decl = t_decl = None
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("%"):
                m = _HEADER.match(line)
                if m is None:
                    raise EdgeListError(f"line {lineno}: malformed header {line!r}")
                n_decl, t_decl = int(m.group(1)), int(m.group(2))
                continue
            parts = line.split()
            if len(parts) != 3:
                raise EdgeListError(f"line {lineno}: expected 't i j', got {line!r}")
            try:
                t, i, j = (int(p) for p in parts)
            except ValueError:
                raise EdgeListError(f"line {lineno}: non-integer field in {line!r}") from None
            if min(t, i, j) < 0:
                raise EdgeListError(f"line {lineno}: negative index")
            if n_decl is not None and max(i, j) >= n_decl:
                raise EdgeListError(f"line {lineno}: vertex {max(i, j)} >= declared nodes={n_decl}")
            if t_decl is not None and t >= t_decl:
                raise EdgeListError(f"line {lineno}: time {t} >= declared timesteps={t_decl}")
            rows.append((t, i, j))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 3)
    if n_decl is None:
        if arr.shape[0] == 0:
            raise EdgeListError("empty edge list without a header")
        n_decl = int(arr[:, 1:].max()) + 1
    if t_decl is None:
        if arr.shape[0] == 0:
            raise EdgeListError("empty edge list without a header")
        t_decl = int(arr[:, 0].max()) + 1
        missing = np.setdiff1d(np.arange(t_decl), arr[:, 0])
        if missing.size:
            raise EdgeListError(f"time steps {missing.tolist()} have no edges; declare timesteps in a header")
    return SnapshotTensor(n_decl, t_decl, arr)


def format_edge_list(data: SnapshotTensor) -> str:
    lines = [f"% nodes={data.num_nodes} timesteps={data.num_steps}"]
    lines.extend(f"{t} {i} {j}" for t, i, j in data.edges.tolist())
    return "\n".join(lines) + "\n"


def save_edge_list(data: SnapshotTensor, path) -> None:
    Path(path).write_text(format_edge_list(data), encoding="utf-8")


# ---------------------------------------------------------------------------
# holdout
# ---------------------------------------------------------------------------


def make_holdout(data: SnapshotTensor, fraction: float, rng) -> HoldoutMask:
    """Mask a uniformly random ``fraction`` of all dyad-time entries."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("holdout fraction must lie in (0, 1)")
    n, steps = data.num_nodes, data.num_steps
    nd = num_dyads(n)
    total = steps * nd
    size = int(round(fraction * total))
    flat = np.sort(as_generator(rng).choice(total, size=size, replace=False))
    ii, jj = dyad_pairs(n)
    t = flat // nd
    d = flat % nd
    masked = np.stack([t, ii[d], jj[d]], axis=1).astype(np.int64)
    masked.setflags(write=False)
    return HoldoutMask(masked, float(fraction), n, steps)


def training_edges(data: SnapshotTensor, mask: HoldoutMask) -> np.ndarray:
    """Observed edges that are not held out."""
    if mask.size == 0:
        return data.edges
    keep = ~mask.contains(data.edges[:, 0], data.edges[:, 1], data.edges[:, 2])
    return data.edges[keep]


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass
class SyntheticSpec:
    num_nodes: int = 60
    num_steps: int = 6
    block_sizes: tuple = (20, 10, 10, 10, 10)
    intra_prob: float = 0.8
    inter_prob: float = 0.05
    merge_pair: tuple = (0, 1)
    merge_steps: tuple = (1, 3, 5)
    seed: int = 0

    def validate(self) -> None:
        sizes = list(self.block_sizes)
        if any(s < 1 for s in sizes) or sum(sizes) != self.num_nodes:
            raise SpecError(f"block sizes {sizes} do not sum to num_nodes={self.num_nodes}")
        if not 0.0 <= self.inter_prob < self.intra_prob <= 1.0:
            raise SpecError("need 0 <= inter_prob < intra_prob <= 1")
        if self.num_steps < 1:
            raise SpecError("num_steps must be positive")
        a, b = self.merge_pair
        if not (0 <= a < len(sizes) and 0 <= b < len(sizes)) or a == b:
            raise SpecError(f"invalid merge_pair {self.merge_pair}")
        if any(not 0 <= t < self.num_steps for t in self.merge_steps):
            raise SpecError("merge step outside 0..num_steps-1")

    def labels(self) -> np.ndarray:
        return np.repeat(np.arange(len(self.block_sizes)), self.block_sizes)


def block_probabilities(spec: SyntheticSpec, t: int) -> np.ndarray:
    nb = len(spec.block_sizes)
    p = np.full((nb, nb), spec.inter_prob)
    np.fill_diagonal(p, spec.intra_prob)
    if t in set(spec.merge_steps):
        a, b = spec.merge_pair
        p[a, b] = p[b, a] = spec.intra_prob
    return p


def generate_synthetic(spec: SyntheticSpec, rng=None) -> SnapshotTensor:
    """Independent Bernoulli draws per (t, dyad) from the block probabilities."""
    spec.validate()
    gen = as_generator(rng if rng is not None else RngStream(spec.seed))
    labels = spec.labels()
    ii, jj = dyad_pairs(spec.num_nodes)
    rows = []
    for t in range(spec.num_steps):
        p = block_probabilities(spec, t)[labels[ii], labels[jj]]
        hit = gen.random(p.shape[0]) < p
        rows.append(np.stack([np.full(hit.sum(), t), ii[hit], jj[hit]], axis=1))
    return SnapshotTensor(spec.num_nodes, spec.num_steps, np.concatenate(rows, axis=0))
