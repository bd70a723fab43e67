"""Time the numba kernels against their numpy twins, then a full sweep under each backend.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 20] [--nodes 60] [--K 10]

The per-kernel section calls both implementations directly on identical
inputs and checks that they agree. The sweep section starts one subprocess
per backend (the backend is fixed at import time by ``HSEPM_DISABLE_NUMBA``).
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from hsepm import kernels
from hsepm.netdata import SyntheticSpec, dyad_pairs


def _best_of(fn, args, repeat: int) -> float:
    fn(*args)  # warm-up (and JIT compilation for numba)
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def kernel_inputs(nodes: int, K: int, T: int, seed: int = 0) -> dict:
    gen = np.random.default_rng(seed)
    ii, jj = dyad_pairs(nodes)
    E = T * ii.shape[0] // 4
    pick = gen.choice(T * ii.shape[0], size=E, replace=False)
    tt = (pick // ii.shape[0]).astype(np.int64)
    ei, ej = ii[pick % ii.shape[0]], jj[pick % ii.shape[0]]
    phi = gen.gamma(1.0, 1.0, size=(nodes, K))
    r = gen.gamma(1.0, 1.0, size=(T, K))
    lam = gen.gamma(0.5, 2.0, size=E)
    totals = gen.integers(1, 6, size=E)
    weights = gen.random((E, K))
    counts = gen.integers(0, 40, size=E)
    shapes = gen.gamma(1.0, 1.0, size=E)
    mptr = np.zeros(nodes + 1, dtype=np.int64)
    return {
        "ztp_inverse": (lam, gen.random(E)),
        "partition": (weights, totals, gen.random(int(totals.sum()))),
        "crt": (counts, shapes, gen.random(int(counts.sum()))),
        "phi_sweep": (
            phi.copy(), gen.gamma(1.0, 1.0, size=(nodes, K)), np.ones(nodes), r, mptr,
            np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
        ),
        "triple_products": (phi, tt, ei, ej, T),
        "edge_totals": (gen.integers(0, 3, size=(E, K)), tt, ei, ej, T, nodes),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=0)


def bench_kernels(nodes: int, K: int, T: int, repeat: int) -> None:
    inputs = kernel_inputs(nodes, K, T)
    print(f"{'kernel':16s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s}  agree")
    for name, args in inputs.items():
        nb, npf = kernels.NUMBA_KERNELS[name], kernels.NUMPY_KERNELS[name]
        copy = lambda: tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)  # noqa: E731
        agree = _same(nb(*copy()), npf(*copy()))
        t_nb = _best_of(nb, copy(), repeat)
        t_np = _best_of(npf, copy(), repeat)
        print(f"{name:16s} {1e3 * t_nb:10.3f} {1e3 * t_np:10.3f} {t_np / t_nb:8.1f}  {agree}")


SWEEP_SNIPPET = """
import time
from hsepm import chain as ch, backend_name
from hsepm.config import RunConfig
from hsepm.distributions import RngStream
from hsepm.model import GibbsSampler, init_state
from hsepm.netdata import SyntheticSpec, generate_synthetic, make_holdout
data = generate_synthetic(SyntheticSpec(seed=1))
cfg = RunConfig(model="ghsepm", K={K}, D=5)
view = ch.build_view(data, make_holdout(data, 0.3, RngStream(1)))
state = init_state(cfg, view, RngStream(2))
s = GibbsSampler(cfg)
for it in range(20):
    s.sweep(state, view, RngStream(3).substream(it))
start = time.perf_counter()
for it in range({sweeps}):
    s.sweep(state, view, RngStream(4).substream(it))
print(backend_name(), (time.perf_counter() - start) / {sweeps})
"""


def bench_sweeps(K: int, sweeps: int) -> None:
    code = SWEEP_SNIPPET.format(K=K, sweeps=sweeps)
    for flag in ("0", "1"):
        env = dict(os.environ, HSEPM_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, sec = out.stdout.split()
        print(f"full G-HSEPM sweep, synthetic N=60 T=6 K={K}, backend={name:5s}: {1e3 * float(sec):.2f} ms")


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=20)
    p.add_argument("--nodes", type=int, default=SyntheticSpec().num_nodes)
    p.add_argument("--steps", type=int, default=SyntheticSpec().num_steps)
    p.add_argument("--K", type=int, default=10)
    p.add_argument("--sweeps", type=int, default=200)
    args = p.parse_args(argv)
    bench_kernels(args.nodes, args.K, args.steps, args.repeat)
    bench_sweeps(args.K, args.sweeps)


if __name__ == "__main__":
    main()
