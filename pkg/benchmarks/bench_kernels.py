"""Time each hot kernel in its numba and pure-numpy variants.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]

Inputs are sized like a 100k-user, 10M-tweet day of work.  Numba timings
exclude the first (compiling) call.  Both variants are checked for agreement
before timing.
"""
import argparse
import platform
import timeit

import numpy as np
import scipy.sparse as sp

from tweetpoll import _accel, kernels


def hypergeom_inputs(rng, n_pairs):
    n = np.full(n_pairs, 10_000_000, dtype=np.int64)
    ci = rng.integers(100, 200_000, size=n_pairs)
    cj = rng.integers(100, 200_000, size=n_pairs)
    mean = ci * cj // n
    k = np.minimum(mean + rng.integers(1, 500, size=n_pairs), np.minimum(ci, cj))
    return k, ci, cj, n


def pair_inputs(rng, n_tweets, n_tags=5000):
    lengths = rng.choice([0, 1, 2, 3, 4, 6], size=n_tweets, p=[0.5, 0.25, 0.12, 0.07, 0.04, 0.02])
    indptr = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
    ids = rng.integers(0, n_tags, size=int(indptr[-1])).astype(np.int64)
    return indptr, ids, n_tags


def lr_inputs(rng, n_rows, vocab=50_000):
    x = sp.random(n_rows, vocab, density=10 / vocab, format="csr", random_state=rng, dtype=np.float64)
    x.data[:] = 1.0
    rows = rng.permutation(n_rows)[:4096].astype(np.int64)
    y = rng.integers(0, 2, size=n_rows).astype(np.float64)
    w = rng.normal(scale=0.1, size=vocab)
    return x.indptr.astype(np.int64), x.indices.astype(np.int64), x.data, rows, y, w, 0.1


def vote_inputs(rng, n_users):
    g = sp.random(n_users, n_users, density=20 / n_users, format="csr", random_state=rng)
    g = ((g + g.T) > 0).astype(np.int8).tocsr()
    labels = rng.integers(-1, 5, size=n_users).astype(np.int64)
    targets = np.flatnonzero(labels >= 3).astype(np.int64)
    return g.indptr.astype(np.int64), g.indices.astype(np.int64), labels, targets


def _same(a, b, atol=1e-9):
    if isinstance(a, tuple):
        return all(_same(x, y, atol) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-9, atol=atol)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0, help="multiply every input size")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)
    s = args.scale
    cases = [
        ("hypergeom_logtail", 200_000, hypergeom_inputs(rng, int(200_000 * s))),
        ("pair_codes", 2_000_000, pair_inputs(rng, int(2_000_000 * s))),
        ("lr_batch", 4096, lr_inputs(rng, int(200_000 * s))),
        ("neighbor_votes", 100_000, vote_inputs(rng, int(100_000 * s))),
    ]
    print(f"python {platform.python_version()}  numpy {np.__version__}  threads {_accel.numba.get_num_threads()}")
    print(f"{'kernel':<20}{'items':>12}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, items, inputs in cases:
        fast = getattr(kernels, f"{name}_numba")
        slow = getattr(kernels, f"{name}_numpy")
        a, b = fast(*inputs), slow(*inputs)
        if name == "pair_codes":
            a, b = np.sort(a), np.sort(b)
        # lgamma cancellation near N log N bounds the hypergeometric agreement
        atol = 8 * np.spacing(1e7 * np.log(1e7)) if name == "hypergeom_logtail" else 1e-9
        if not _same(a, b, atol):
            raise SystemExit(f"{name}: numba and numpy variants disagree")
        t_fast = min(timeit.repeat(lambda: fast(*inputs), number=1, repeat=args.repeat))
        t_slow = min(timeit.repeat(lambda: slow(*inputs), number=1, repeat=args.repeat))
        print(f"{name:<20}{int(items * s) if name != 'lr_batch' else items:>12}{1e3 * t_fast:>12.2f}{1e3 * t_slow:>12.2f}{t_slow / t_fast:>9.1f}x")


if __name__ == "__main__":
    main()
