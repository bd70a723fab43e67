"""Command-line driver: ``fit``, ``synth``, ``eval`` and ``predict``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 runtime
invariant violation.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hsepm import chain as ch
from hsepm.config import ConfigError, RunConfig, config_from_pairs, format_config, load_config, parse_pairs
from hsepm.distributions import RngStream
from hsepm.evaluate import (
    ArtifactError,
    EvalError,
    MetricsReport,
    PosteriorSummary,
    accumulate_posterior,
    aggregate_reports,
    read_link_probs,
    read_metrics,
    read_predictive,
    score_holdout,
    write_link_probs,
    write_metrics,
    write_summary,
)
from hsepm.model import GibbsSampler, InvariantViolation, ModelState, init_state, training_log_likelihood
from hsepm.netdata import (
    EdgeListError,
    HoldoutMask,
    SnapshotTensor,
    SpecError,
    SyntheticSpec,
    dyad_index,
    empty_mask,
    generate_synthetic,
    load_edge_list,
    make_holdout,
    save_edge_list,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INVARIANT = 4

CONFIG_ECHO = "config.txt"
METRIC_KEYS = tuple(MetricsReport.__dataclass_fields__)

log = logging.getLogger("hsepm")


@dataclass
class FitResult:
    state: ModelState
    summary: PosteriorSummary
    mask: HoldoutMask
    probabilities: np.ndarray
    truths: np.ndarray
    report: MetricsReport
    log_likelihood: list = field(default_factory=list)
    seconds: list = field(default_factory=list)


def fit_model(cfg: RunConfig, data: SnapshotTensor, rng: RngStream, record: bool = False) -> FitResult:
    """Holdout split, ``cfg.iterations`` sweeps and posterior collection after burn-in.

    Streams: ``rng.substream(0)`` draws the mask, ``substream(1)`` the
    initial state and ``substream(2, it)`` sweep ``it``.
    """
    if cfg.holdout_fraction > 0:
        mask = make_holdout(data, cfg.holdout_fraction, rng.substream(0))
    else:
        mask = empty_mask(data.num_nodes, data.num_steps)
    view = ch.build_view(data, mask)
    state = init_state(cfg, view, rng.substream(1))
    sampler = GibbsSampler(cfg)
    summary = None
    loglik, seconds = [], []
    for it in range(cfg.iterations):
        start = time.perf_counter()
        sampler.sweep(state, view, rng.substream(2, it), record=record)
        seconds.append(time.perf_counter() - start)
        loglik.append(training_log_likelihood(state, view))
        if it >= cfg.burn_in:
            summary = accumulate_posterior(summary, state)
        if (it + 1) % 500 == 0:
            log.info("sweep %d/%d  loglik %.3f", it + 1, cfg.iterations, loglik[-1])
    m = mask.masked
    truths = data.lookup(m[:, 0], m[:, 1], m[:, 2]) if mask.size else np.zeros(0, dtype=bool)
    d = dyad_index(m[:, 1], m[:, 2], data.num_nodes)
    probs = summary.mean_link[m[:, 0], d] if mask.size else np.zeros(0)
    report = score_holdout(probs, truths, cfg.threshold)
    return FitResult(state, summary, mask, probs, truths, report, loglik, seconds)


def _write_run(out: Path, cfg: RunConfig, res: FitResult) -> dict:
    write_summary(out, res.summary)
    write_link_probs(out / "link_probs.csv", res.mask.masked, res.probabilities, res.truths)
    with open(out / "convergence.csv", "w", encoding="utf-8") as fh:
        fh.write("sweep,log_likelihood\n")
        fh.writelines(f"{i},{v:.17g}\n" for i, v in enumerate(res.log_likelihood))
    # wall-clock times are the one artifact that is not reproducible
    with open(out / "timing.csv", "w", encoding="utf-8") as fh:
        fh.write("sweep,seconds\n")
        fh.writelines(f"{i},{v:.6f}\n" for i, v in enumerate(res.seconds))
    st = res.state
    metrics = res.report.to_dict()
    metrics.update(
        model=cfg.model,
        K=cfg.K,
        sweeps=cfg.iterations,
        num_collected=res.summary.num_collected,
        mh_acceptance=st.accepted / st.proposed if st.proposed else 1.0,
    )
    if cfg.model == "ghsepm":
        metrics["D"] = cfg.D
    write_metrics(out / "metrics.json", metrics)
    return metrics


def _repeat_dirs(out: Path, repeats: int) -> list[Path]:
    if repeats == 1:
        return [out]
    return [out / f"repeat_{r:02d}" for r in range(repeats)]


def run_fit(cfg: RunConfig, data_path, out_dir) -> dict:
    """Fit, then write every artifact; returns the contents of ``metrics.json``.

    With ``cfg.repeats > 1`` each repeat gets its own sub-directory and seed
    stream, and the top-level ``metrics.json`` holds means and standard
    deviations across repeats.
    """
    cfg.validate()
    out = Path(out_dir)
    # fail on an unwritable directory before any sampling
    out.mkdir(parents=True, exist_ok=True)
    (out / CONFIG_ECHO).write_text(format_config(cfg), encoding="utf-8")
    data = load_edge_list(data_path)
    root = RngStream(cfg.seed)
    dirs = _repeat_dirs(out, cfg.repeats)
    reports, all_metrics = [], []
    for r, sub in enumerate(dirs):
        sub.mkdir(exist_ok=True)
        res = fit_model(cfg, data, root.substream(r))
        all_metrics.append(_write_run(sub, cfg, res))
        reports.append(res.report)
    if cfg.repeats == 1:
        return all_metrics[0]
    agg = aggregate_reports(reports)
    write_metrics(out / "metrics.json", agg)
    return agg


def run_synth(spec_path, out_path) -> SnapshotTensor:
    """Generate the block-structured benchmark network and save it as an edge list."""
    spec = SyntheticSpec()
    if spec_path is not None:
        try:
            text = Path(spec_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read spec {spec_path}: {exc}") from exc
        spec = config_from_pairs(parse_pairs(text), cls=SyntheticSpec)
    data = generate_synthetic(spec)
    save_edge_list(data, out_path)
    return data


def _threshold(run_dir: Path) -> float:
    echo = run_dir / CONFIG_ECHO
    if not echo.exists():
        echo = run_dir.parent / CONFIG_ECHO
    if not echo.exists():
        return RunConfig().threshold
    return load_config(echo).threshold


def _eval_one(run_dir: Path, threshold: float | None) -> MetricsReport:
    _, probs, truths = read_link_probs(run_dir / "link_probs.csv")
    return score_holdout(probs, truths, _threshold(run_dir) if threshold is None else threshold)


def run_eval(run_dir, threshold: float | None = None) -> tuple[dict, bool]:
    """Recompute the metrics from ``link_probs.csv``.

    Returns the recomputed metrics and whether they equal the stored
    ``metrics.json`` on every metric key.
    """
    run_dir = Path(run_dir)
    subs = sorted(p for p in run_dir.glob("repeat_*") if p.is_dir())
    if subs:
        reports = [_eval_one(p, threshold) for p in subs]
        fresh = aggregate_reports(reports)
        keys = list(fresh)
    else:
        fresh = _eval_one(run_dir, threshold).to_dict()
        keys = list(METRIC_KEYS)
    stored_path = run_dir / "metrics.json"
    if not stored_path.exists():
        return fresh, True
    stored = read_metrics(stored_path)
    same = all(stored.get(k) == fresh.get(k) for k in keys)
    return fresh, same


def predict(run_dir, t: int, i: int, j: int) -> float:
    run_dir = Path(run_dir)
    if not (run_dir / "predictive.csv").exists():
        subs = sorted(p for p in run_dir.glob("repeat_*") if p.is_dir())
        if subs:
            run_dir = subs[0]
    return read_predictive(run_dir / "predictive.csv", t, i, j)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsepm", description="Dynamic edge partition models with Gibbs sampling.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model and write run artifacts")
    f.add_argument("config")
    f.add_argument("edge_list")
    f.add_argument("out_dir")
    f.add_argument("--repeats", type=int, default=None, help="independent runs with derived seeds")
    f.add_argument("--seed", type=int, default=None)
    f.add_argument("--threshold", type=float, default=None, help="classification threshold for accuracy/F1")

    s = sub.add_parser("synth", help="write the synthetic benchmark network")
    s.add_argument("paths", nargs="+", metavar="[spec] out_file")

    e = sub.add_parser("eval", help="recompute metrics of a run directory")
    e.add_argument("run_dir")
    e.add_argument("--threshold", type=float, default=None)

    q = sub.add_parser("predict", help="posterior link probability of one dyad")
    q.add_argument("run_dir")
    q.add_argument("t", type=int)
    q.add_argument("i", type=int)
    q.add_argument("j", type=int)
    return p


def _dispatch(args) -> int:
    if args.command == "fit":
        cfg = load_config(args.config)
        overrides = {k: getattr(args, k) for k in ("repeats", "seed", "threshold") if getattr(args, k) is not None}
        if overrides:
            cfg = cfg.replace(**overrides)
        metrics = run_fit(cfg, args.edge_list, args.out_dir)
        print(_format_metrics(metrics))
        return EXIT_OK
    if args.command == "synth":
        if len(args.paths) > 2:
            raise ConfigError("synth takes [spec] out_file")
        spec = args.paths[0] if len(args.paths) == 2 else None
        data = run_synth(spec, args.paths[-1])
        print(f"wrote {data.num_edges} edges, nodes={data.num_nodes} timesteps={data.num_steps}")
        return EXIT_OK
    if args.command == "eval":
        metrics, same = run_eval(args.run_dir, args.threshold)
        print(_format_metrics(metrics))
        if not same:
            print("recomputed metrics differ from stored metrics.json", file=sys.stderr)
            return EXIT_INVARIANT
        return EXIT_OK
    if args.command == "predict":
        print(f"{predict(args.run_dir, args.t, args.i, args.j):.17g}")
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command}")


def _format_metrics(metrics: dict) -> str:
    return "\n".join(f"{k} = {v}" for k, v in sorted(metrics.items()))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return _dispatch(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, SpecError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, EdgeListError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
