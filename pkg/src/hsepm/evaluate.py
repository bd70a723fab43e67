"""Link probabilities, holdout scoring, posterior averaging and community extraction."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from hsepm.netdata import dyad_index, dyad_pairs, num_dyads

CSV_FORMAT = "%.17g"


class EvalError(ValueError):
    """Invalid evaluation input such as out-of-range coordinates."""


class ArtifactError(EvalError):
    """A run artifact is missing or unreadable."""


# ---------------------------------------------------------------------------
# link probabilities
# ---------------------------------------------------------------------------


def _rate(phi, r, t: int, i: int, j: int) -> float:
    # the product is formed in sorted vertex order so (i, j) and (j, i) agree bitwise
    a, b = min(i, j), max(i, j)
    return float(np.sum(r[t] * phi[a] * phi[b]))


def link_probability(source, t: int, i: int, j: int) -> float:
    """``1 - exp(-sum_k r_k^(t) phi_ik phi_jk)`` for a state or a posterior summary.

    A :class:`PosteriorSummary` answers with its collection-averaged probability,
    i.e. the mean of the per-state probabilities over collected sweeps.
    """
    if i == j:
        raise EvalError("link probability is undefined for i == j")
    if isinstance(source, PosteriorSummary):
        N, T = source.num_nodes, source.num_steps
        if not (0 <= t < T and 0 <= min(i, j) and max(i, j) < N):
            raise EvalError(f"coordinates ({t}, {i}, {j}) out of range")
        d = int(dyad_index(min(i, j), max(i, j), N))
        return float(source.mean_link[t, d])
    phi, r = source.memb.phi, source.chain.r
    if not (0 <= t < r.shape[0] and 0 <= min(i, j) and max(i, j) < phi.shape[0]):
        raise EvalError(f"coordinates ({t}, {i}, {j}) out of range")
    return float(-np.expm1(-_rate(phi, r, t, i, j)))


def all_link_probabilities(phi, r) -> np.ndarray:
    """``(T, N(N-1)/2)`` matrix of link probabilities over the upper triangle."""
    ii, jj = dyad_pairs(phi.shape[0])
    return -np.expm1(-(r @ (phi[ii] * phi[jj]).T))


# ---------------------------------------------------------------------------
# posterior summary
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorSummary:
    """Running means over collected sweeps.

    ``mean_z``, ``mean_m``, ``mean_v`` and ``mean_lam`` are ``None`` for HSEPM.
    ``mean_link[t, d]`` is the averaged link probability of dyad ``d`` (row-major
    upper triangle) at time ``t``.
    """

    mean_phi: np.ndarray
    mean_r: np.ndarray
    mean_pi: np.ndarray
    mean_link: np.ndarray
    mean_z: np.ndarray | None = None
    mean_m: np.ndarray | None = None
    mean_v: np.ndarray | None = None
    mean_lam: np.ndarray | None = None
    num_collected: int = 1

    @property
    def num_nodes(self) -> int:
        return int(self.mean_phi.shape[0])

    @property
    def num_steps(self) -> int:
        return int(self.mean_r.shape[0])

    @property
    def K(self) -> int:
        return int(self.mean_pi.shape[0])


def _state_values(state) -> dict:
    phi, r = state.memb.phi, state.chain.r
    out = {
        "mean_phi": phi,
        "mean_r": r,
        "mean_pi": state.pi,
        "mean_link": all_link_probabilities(phi, r),
    }
    if state.graph is not None:
        out.update(mean_z=state.graph.z, mean_m=state.hier.m, mean_v=state.hier.v, mean_lam=state.hier.lam)
    return out


def accumulate_posterior(summary: PosteriorSummary | None, state) -> PosteriorSummary:
    """Fold one collected state into the running means (returns a new summary).

    Pass ``None`` for the first state.
    """
    values = _state_values(state)
    if summary is None:
        return PosteriorSummary(
            **{k: np.array(v, dtype=np.float64) for k, v in values.items()},
            num_collected=1,
        )
    n = summary.num_collected + 1
    updated = {}
    for key, x in values.items():
        m = getattr(summary, key)
        # m + (x - m) / n stays exactly constant on constant input
        updated[key] = m + (np.asarray(x, dtype=np.float64) - m) / n
    return replace(summary, num_collected=n, **updated)


# ---------------------------------------------------------------------------
# holdout metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Holdout metrics; AUC fields are ``None`` when ``status`` is not ``"ok"``."""

    accuracy: float | None
    f1: float | None
    auc_roc: float | None
    auc_pr: float | None
    threshold: float
    oracle_threshold: float | None = None
    oracle_f1: float | None = None
    num_positive: int = 0
    num_negative: int = 0
    status: str = "ok"

    def to_dict(self) -> dict:
        return asdict(self)


def auc_roc_fraction(scores, truths) -> Fraction:
    """Probability that a random positive outranks a random negative, ties counting 1/2.

    Computed from sorted score groups in integer arithmetic, so the result is
    exact.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(bool)
    P = int(truths.sum())
    Nn = int(truths.size - P)
    if P == 0 or Nn == 0:
        raise EvalError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    y = truths[order]
    starts = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    pos = np.add.reduceat(y.astype(np.int64), starts)
    size = np.diff(np.r_[starts, s.size])
    neg = size - pos
    neg_below = np.cumsum(neg) - neg
    twice_u = int(np.sum(pos * (2 * neg_below + neg), dtype=np.int64))
    return Fraction(twice_u, 2 * P * Nn)


def auc_roc(scores, truths) -> float:
    return float(auc_roc_fraction(scores, truths))


def auc_pr(scores, truths) -> float:
    """Step-wise area under the precision-recall curve.

    Thresholds run over distinct scores from high to low; each recall increment
    is weighted by the precision at that threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(bool)
    P = int(truths.sum())
    if P == 0 or P == truths.size:
        raise EvalError("AUC needs at least one positive and one negative")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = truths[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    predicted = last + 1
    precision = tp / predicted
    recall_step = np.diff(np.r_[0, tp]) / P
    return float(np.sum(recall_step * precision))


def _confusion(pred, truths):
    tp = int(np.sum(pred & truths))
    fp = int(np.sum(pred & ~truths))
    fn = int(np.sum(~pred & truths))
    return tp, fp, fn


def f1_score(pred, truths) -> float:
    tp, fp, fn = _confusion(pred, truths)
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2 * tp + fp + fn)


def best_f1_threshold(scores, truths) -> tuple[float, float]:
    """Threshold among the observed scores that maximises F1 (largest on ties)."""
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(bool)
    P = int(truths.sum())
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = truths[order]
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(y)[last]
    predicted = last + 1
    f1 = 2.0 * tp / (predicted + P)
    best = int(np.argmax(f1))
    return float(s[last[best]]), float(f1[best])


def score_holdout(probabilities, truths, threshold: float = 0.5) -> MetricsReport:
    """Accuracy and F1 at ``threshold`` (predict 1 when ``p >= threshold``) plus both AUCs."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(truths).astype(bool)
    if p.shape != y.shape:
        raise EvalError(f"length mismatch: {p.shape} probabilities vs {y.shape} truths")
    if p.size == 0:
        return MetricsReport(None, None, None, None, float(threshold), status="no test entries")
    pred = p >= threshold
    P = int(y.sum())
    Nn = int(y.size - P)
    report = MetricsReport(
        accuracy=float(np.mean(pred == y)),
        f1=f1_score(pred, y),
        auc_roc=None,
        auc_pr=None,
        threshold=float(threshold),
        num_positive=P,
        num_negative=Nn,
    )
    if P == 0 or Nn == 0:
        report.status = "single class"
        return report
    report.auc_roc = auc_roc(p, y)
    report.auc_pr = auc_pr(p, y)
    report.oracle_threshold, report.oracle_f1 = best_f1_threshold(p, y)
    return report


def aggregate_reports(reports: list[MetricsReport]) -> dict:
    """Mean and standard deviation of every metric over repeats."""
    out = {"repeats": len(reports)}
    for key in ("accuracy", "f1", "auc_roc", "auc_pr", "oracle_f1"):
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if vals:
            out[f"{key}_mean"] = float(np.mean(vals))
            out[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return out


# ---------------------------------------------------------------------------
# communities
# ---------------------------------------------------------------------------


@dataclass
class Communities:
    scores: np.ndarray  # (T, N, K): mean_r[t, k] * mean_phi[i, k]
    labels: np.ndarray  # (T, N), lowest index wins ties
    weights: np.ndarray  # (T, K): r_k^(t) / sum_t r_k^(t)
    top: np.ndarray = field(repr=False)  # (T, N, min(3, K)) community indices by score


def extract_communities(summary: PosteriorSummary) -> Communities:
    scores = summary.mean_r[:, None, :] * summary.mean_phi[None, :, :]
    labels = np.argmax(scores, axis=2)
    total = summary.mean_r.sum(axis=0)
    weights = summary.mean_r / np.where(total > 0, total, 1.0)
    # stable sort on the negated scores keeps the lower index first on ties
    top = np.argsort(-scores, axis=2, kind="stable")[:, :, : min(3, summary.K)]
    return Communities(scores, labels, weights, top)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------


def write_matrix(path, arr, header: list[str] | None = None) -> None:
    arr = np.atleast_2d(np.asarray(arr, dtype=np.float64))
    if header is None:
        header = [f"c{k}" for k in range(arr.shape[1])]
    np.savetxt(path, arr, fmt=CSV_FORMAT, delimiter=",", header=",".join(header), comments="")


def write_link_probs(path, masked: np.ndarray, probs, truths) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,i,j,probability,truth\n")
        for (t, i, j), p, y in zip(masked.tolist(), np.asarray(probs).tolist(), np.asarray(truths).tolist()):
            fh.write(f"{t},{i},{j},{p:.17g},{int(y)}\n")


def read_link_probs(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(triples, probabilities, truths)``."""
    try:
        with open(path, encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "t,i,j,probability,truth":
                raise ArtifactError(f"{path}: unexpected header {header!r}")
            rows = [line.split(",") for line in fh if line.strip()]
    except OSError as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    if not rows:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0), np.zeros(0, dtype=bool)
    triples = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows], dtype=np.int64)
    probs = np.array([float(r[3]) for r in rows])
    truths = np.array([int(r[4]) for r in rows], dtype=bool)
    return triples, probs, truths


def write_communities(path, comm: Communities) -> None:
    T, N, top = comm.top.shape
    cols = ["t", "i", "label"]
    for rank in range(top):
        cols += [f"top{rank + 1}", f"score{rank + 1}"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for t in range(T):
            for i in range(N):
                parts = [str(t), str(i), str(int(comm.labels[t, i]))]
                for k in comm.top[t, i].tolist():
                    parts += [str(k), f"{comm.scores[t, i, k]:.17g}"]
                fh.write(",".join(parts) + "\n")


def write_predictive(path, summary: PosteriorSummary) -> None:
    """Averaged link probability of every dyad-time entry."""
    N = summary.num_nodes
    ii, jj = dyad_pairs(N)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("t,i,j,probability\n")
        for t in range(summary.num_steps):
            for i, j, p in zip(ii.tolist(), jj.tolist(), summary.mean_link[t].tolist()):
                fh.write(f"{t},{i},{j},{p:.17g}\n")


def read_predictive(path, t: int, i: int, j: int) -> float:
    """Look up one entry of ``predictive.csv``."""
    if i == j:
        raise EvalError("link probability is undefined for i == j")
    a, b = min(i, j), max(i, j)
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
    if data.shape[0] == 0 or data.shape[1] != 4:
        raise ArtifactError(f"{path}: empty or malformed")
    # rows are laid out as t-major blocks of the upper triangle
    N = int(data[:, 2].max()) + 1
    T = int(data[:, 0].max()) + 1
    if not (0 <= t < T and a >= 0 and b < N):
        raise EvalError(f"coordinates ({t}, {i}, {j}) out of range")
    row = data[t * num_dyads(N) + int(dyad_index(a, b, N))]
    return float(row[3])


def write_summary(out_dir, summary: PosteriorSummary) -> None:
    """All matrix CSVs, communities and the predictive table."""
    out = Path(out_dir)
    K = summary.K
    kcols = [f"k{k}" for k in range(K)]
    write_matrix(out / "phi.csv", summary.mean_phi, kcols)
    write_matrix(out / "r.csv", summary.mean_r, kcols)
    write_matrix(out / "pi.csv", summary.mean_pi, kcols)
    if summary.mean_z is not None:
        D = summary.mean_m.shape[1]
        dcols = [f"d{d}" for d in range(D)]
        write_matrix(out / "z.csv", summary.mean_z, kcols)
        write_matrix(out / "m.csv", summary.mean_m, dcols)
        write_matrix(out / "v.csv", summary.mean_v, dcols)
        write_matrix(out / "lambda.csv", summary.mean_lam[None, :], dcols)
    comm = extract_communities(summary)
    write_communities(out / "communities.csv", comm)
    write_matrix(out / "weights.csv", comm.weights, kcols)
    write_predictive(out / "predictive.csv", summary)


def _clean(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_metrics(path, metrics: dict) -> None:
    text = json.dumps({k: _clean(v) for k, v in metrics.items()}, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_metrics(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ArtifactError(f"cannot read {path}: {exc}") from exc
