"""Kernel throughput benchmark, including the naive-loop comparison that
motivated keeping the kernels on BLAS.

Usage:
    python3 benchmarks/bench_kernels.py [--quick] [--naive]

``--naive`` also times straightforward per-row Python/numpy loop versions
of each kernel (the shape a hand-compiled core would take); on machines
with a tuned BLAS the production kernels win by a wide margin, which is
why the package ships no compiled extension.
"""

import argparse
import time

import numpy as np

from negspace import kernels


def _unit(rng, n, d):
    rows = rng.standard_normal((n, d))
    return (rows / np.linalg.norm(rows, axis=1, keepdims=True)).astype(np.float32)


def _time(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def naive_sim_matrix(a, b):
    out = np.empty((a.shape[0], b.shape[0]))
    b64 = b.astype(np.float64)
    for i in range(a.shape[0]):
        out[i] = np.clip(b64 @ a[i].astype(np.float64), -1, 1)
    return out


def naive_quantile(cand, ref, q):
    ref64 = ref.astype(np.float64)
    h = (ref.shape[0] - 1) * q
    lo = int(np.floor(h))
    out = np.empty(cand.shape[0])
    for i in range(cand.shape[0]):
        sims = np.sort(np.clip(ref64 @ cand[i].astype(np.float64), -1, 1))
        out[i] = sims[-1] if lo >= ref.shape[0] - 1 else sims[lo] + (h - lo) * (sims[lo + 1] - sims[lo])
    return out


def naive_alpha(imgs, pos, negs, offsets, tau):
    out = np.empty(imgs.shape[0])
    pos64, neg64 = pos.astype(np.float64), negs.astype(np.float64)
    for i in range(imgs.shape[0]):
        x = imgs[i].astype(np.float64)
        zp = np.sort(np.clip(pos64 @ x, -1, 1) / tau)
        lp = zp[-1] + np.log(np.sum(np.exp(zp - zp[-1])))
        acc = 0.0
        for k in range(len(offsets) - 1):
            zn = np.sort(np.clip(neg64[offsets[k]:offsets[k + 1]] @ x, -1, 1) / tau)
            ln = zn[-1] + np.log(np.sum(np.exp(zn - zn[-1])))
            t = lp - ln
            acc += 1.0 / (1.0 + np.exp(-t)) if t >= 0 else np.exp(t) / (1.0 + np.exp(t))
        out[i] = acc
    return out


def run(quick: bool, naive: bool) -> None:
    rng = np.random.default_rng(0)
    scale = 0.25 if quick else 1.0
    n_cand = int(20_000 * scale)
    n_ref = 800
    n_imgs = int(2_000 * scale)
    n_pos = 100
    n_neg = 1_500
    d = 256
    k = 10

    cand = _unit(rng, n_cand, d)
    ref = _unit(rng, n_ref, d)
    imgs = _unit(rng, n_imgs, d)
    pos = _unit(rng, n_pos, d)
    negs = _unit(rng, n_neg, d)
    bounds = np.linspace(0, n_neg, k + 1).astype(np.int64)

    cases = [
        (f"sim_matrix {n_imgs}x{n_ref}x{d}",
         lambda: kernels.sim_matrix(imgs, ref),
         lambda: naive_sim_matrix(imgs, ref)),
        (f"quantile_scores {n_cand}x{n_ref}x{d}",
         lambda: kernels.quantile_scores(cand, ref, 0.95),
         lambda: naive_quantile(cand, ref, 0.95)),
        (f"alpha_scores {n_imgs}x({n_pos}+{n_neg})x{d}",
         lambda: kernels.alpha_scores(imgs, pos, negs, bounds, 0.01),
         lambda: naive_alpha(imgs, pos, negs, bounds, 0.01)),
    ]

    header = f"{'kernel':<36}{'blas (s)':>10}"
    if naive:
        header += f"{'naive (s)':>12}{'speedup':>9}"
    print(header)
    for name, fast, slow in cases:
        t_fast = _time(fast)
        line = f"{name:<36}{t_fast:>10.4f}"
        if naive:
            t_slow = _time(slow, repeats=1)
            line += f"{t_slow:>12.4f}{t_slow / t_fast:>9.1f}"
        print(line)


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller problem sizes")
    parser.add_argument("--naive", action="store_true", help="also time naive per-row loops")
    run(parser.parse_args().quick, parser.parse_args().naive)
