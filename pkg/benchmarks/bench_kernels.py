"""Time the numba and numpy kernel paths on pipeline-sized inputs, then one pretraining run per backend.

Usage: python3 benchmarks/bench_kernels.py [--repeat N] [--skip-pipeline]
"""
from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tagcbm import _kernels
from tagcbm.evalbench.synth import synth_planted
from tagcbm.nn.layers import ego_batch
from tagcbm.graphcore import ego_network


def _best(fn, repeat: int) -> float:
    fn()  # warm-up (includes JIT compile)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_table(repeat: int) -> list[tuple[str, float, float]]:
    ds = synth_planted(seed=0)
    g = ds.graph
    egos = [ego_network(g, u, 2, max_neighbors=None) for u in range(128)]
    adj = ego_batch(egos).adj
    X = np.random.default_rng(0).standard_normal((adj.shape[0], 64))
    indptr, indices = g.csr
    rows = []
    a = (adj.indptr, adj.indices, adj.data, X)
    rows.append((f"spmm {adj.shape[0]}x{adj.shape[1]} nnz={adj.indices.size} d=64",
                 _best(lambda: _kernels.spmm_numpy(*a), repeat), _best(lambda: _kernels.spmm_numba(*a), repeat)))

    def bfs(fn):
        return lambda: [fn(indptr, indices, u, 2) for u in range(g.num_nodes)]

    rows.append((f"k-hop BFS x{g.num_nodes} (k=2)", _best(bfs(_kernels.khop_distances_numpy), repeat),
                 _best(bfs(_kernels.khop_distances_numba), repeat)))
    return rows


PIPELINE_SNIPPET = """
import time
from tagcbm import _kernels
from tagcbm.ccgp import PretrainConfig
from tagcbm.conceptspace.llm import FixtureStore, RecordingClient
from tagcbm.pipeline import pretrain_encoder, synthetic_world
from tagcbm.evalbench.synth import SynthConfig
w = synthetic_world(SynthConfig(seed=0))
client = RecordingClient(w.simulator, FixtureStore())
t = time.perf_counter()
pretrain_encoder(w.source, w.table, client, PretrainConfig(steps=100))
print(_kernels.BACKEND, time.perf_counter() - t)
"""


def pipeline_times() -> list[tuple[str, float]]:
    out = []
    for flag in ("0", "1"):
        env = {**os.environ, "TAGCBM_DISABLE_NUMBA": flag}
        res = subprocess.run([sys.executable, "-c", PIPELINE_SNIPPET], env=env, capture_output=True, text=True,
                             check=True)
        backend, secs = res.stdout.split()
        out.append((backend, float(secs)))
    return out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    print(f"{'kernel':52s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for name, t_np, t_nb in kernel_table(args.repeat):
        print(f"{name:52s} {t_np * 1e3:10.2f} {t_nb * 1e3:10.2f} {t_np / t_nb:8.1f}x")
    if not args.skip_pipeline:
        print("\npretraining, 100 steps (fresh process per backend, includes JIT warm-up):")
        for backend, secs in pipeline_times():
            print(f"  {backend:6s} {secs:7.2f} s")


if __name__ == "__main__":
    main()
