"""Compare the compiled kernel extension against the numpy reference.

Times every fused elementwise/rowwise kernel on training-shaped arrays
and prints per-call latency for both backends plus the speedup. Matrix
products are BLAS in both lanes, so they are deliberately absent here;
only the kernels that the extension actually fuses are measured.

    python3 benchmarks/bench_kernels.py --batch 256 --items 4000
"""
import argparse
import time

import numpy as np

from vampcf.kernels import ref

try:
    from vampcf.kernels import _fast
except ImportError:
    _fast = None


def timeit(fn, repeats, inner):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def cases(rng, batch, items, hidden, k):
    """Yield (name, call-factory) pairs; factories bind fresh arrays so both
    backends see identical inputs."""
    act = rng.standard_normal((batch, hidden))
    act_y = np.tanh(act)
    act_g = rng.standard_normal((batch, hidden))
    logits = rng.standard_normal((batch, items))
    logits_g = rng.standard_normal((batch, items))
    mix = rng.standard_normal((batch, k))
    mix_out = ref.logsumexp_rows(mix)
    mix_g = rng.standard_normal((batch, 1))
    rows = rng.random((batch, items))
    rows_y, rows_inv = ref.l2_normalize_rows(rows)
    sig_y = ref.sigmoid(act)
    logsm = ref.log_softmax_rows(logits)

    yield "sigmoid", lambda im: lambda: im.sigmoid(act)
    yield "sigmoid_bwd", lambda im: lambda: im.sigmoid_bwd(sig_y, act_g)
    yield "tanh_bwd", lambda im: lambda: im.tanh_bwd(act_y, act_g)
    yield "softplus", lambda im: lambda: im.softplus(logits)
    yield "softplus_bwd", lambda im: lambda: im.softplus_bwd(logits, logits_g)
    yield "logsumexp_rows", lambda im: lambda: im.logsumexp_rows(mix)
    yield "logsumexp_rows_bwd", \
        lambda im: lambda: im.logsumexp_rows_bwd(mix, mix_out, mix_g)
    yield "log_softmax_rows", lambda im: lambda: im.log_softmax_rows(logits)
    yield "log_softmax_rows_bwd", \
        lambda im: lambda: im.log_softmax_rows_bwd(logsm, logits_g)
    yield "l2_normalize_rows", lambda im: lambda: im.l2_normalize_rows(rows)
    yield "l2_normalize_rows_bwd", \
        lambda im: lambda: im.l2_normalize_rows_bwd(rows_y, rows_inv, logits_g)

    def adam(im):
        p = np.zeros((hidden, items))
        g = rng.standard_normal((hidden, items))
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        t = [0]

        def run():
            t[0] += 1
            im.adam_update(p, g, m, v, t[0], 1e-3, 0.9, 0.999, 1e-8)
        return run
    yield "adam_update", adam


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--batch", type=int, default=256)
    ap.add_argument("--items", type=int, default=4000)
    ap.add_argument("--hidden", type=int, default=600)
    ap.add_argument("--k", type=int, default=1000, help="mixture components")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--inner", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    if _fast is None:
        print("compiled extension not available; showing reference lane only")
    rng = np.random.default_rng(args.seed)
    print(f"shapes: batch={args.batch} items={args.items} "
          f"hidden={args.hidden} k={args.k}")
    header = f"{'kernel':<24}{'ref ms':>10}{'fast ms':>10}{'speedup':>10}"
    print(header)
    print("-" * len(header))
    geo, n_geo = 0.0, 0
    for name, factory in cases(rng, args.batch, args.items, args.hidden,
                               args.k):
        t_ref = timeit(factory(ref), args.repeats, args.inner)
        if _fast is None:
            print(f"{name:<24}{t_ref * 1e3:>10.3f}{'-':>10}{'-':>10}")
            continue
        t_fast = timeit(factory(_fast), args.repeats, args.inner)
        ratio = t_ref / t_fast
        geo += np.log(ratio)
        n_geo += 1
        print(f"{name:<24}{t_ref * 1e3:>10.3f}{t_fast * 1e3:>10.3f}"
              f"{ratio:>9.2f}x")
    if n_geo:
        print("-" * len(header))
        print(f"{'geometric mean':<44}{np.exp(geo / n_geo):>9.2f}x")


if __name__ == "__main__":
    main()
