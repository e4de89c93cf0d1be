"""Chunked Monte Carlo with per-chunk seed streams.

Chunks draw from independent generators spawned off one root seed and are
reduced in chunk order (pairwise), so results are bit-identical for any
thread count and any completion order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

__all__ = ["chunked_stats"]


def _pairwise_sum(parts):
    parts = list(parts)
    while len(parts) > 1:
        nxt = []
        for a in range(0, len(parts) - 1, 2):
            nxt.append(parts[a] + parts[a + 1])
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def chunked_stats(fn, n_draws, seed, *, threads=1, chunk=250_000):
    """Mean and standard error of ``fn(rng, m) -> (m, ...) array`` over
    ``n_draws`` total draws split into seeded chunks."""
    sizes = [chunk] * (n_draws // chunk)
    if n_draws % chunk:
        sizes.append(n_draws % chunk)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(args):
        ss, m = args
        vals = np.asarray(fn(np.random.default_rng(ss), m), dtype=float)
        return np.sum(vals, axis=0), np.sum(vals * vals, axis=0), m

    jobs = list(zip(streams, sizes))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    total = _pairwise_sum([r[0] for r in results])
    total_sq = _pairwise_sum([r[1] for r in results])
    n = sum(r[2] for r in results)
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    se = np.sqrt(var / n)
    return mean, se
