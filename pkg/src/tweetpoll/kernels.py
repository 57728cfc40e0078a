"""Hot numeric kernels.

Every kernel exists twice: a numba-compiled loop (``*_numba``) and a
vectorised numpy twin (``*_numpy``).  The unsuffixed name is bound to one of
them according to :data:`tweetpoll._accel.USE_NUMBA`.  Both variants take and
return plain numpy arrays so they can be swapped freely and compared in tests.
"""
import math

import numpy as np
import scipy.sparse as sp
from scipy.special import expit, gammaln

from tweetpoll._accel import HAVE_NUMBA, USE_NUMBA, njit, prange

# Upper-tail summation stops once a term falls below this fraction of the sum.
_TAIL_EPS = 1e-17
# Upper bound on the number of pmf terms materialised at once on the numpy path.
_NUMPY_TERM_BUDGET = 1 << 22


# ---------------------------------------------------------------------------
# hypergeometric upper tail, log space
# ---------------------------------------------------------------------------


@njit(cache=True)
def _log_choose(n, k):
    return math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)


@njit(cache=True)
def _logtail_one(k, ci, cj, n):
    lo = max(0, ci + cj - n)
    hi = min(ci, cj)
    if k <= lo:
        return 0.0
    if k > hi:
        return -np.inf
    fci = float(ci)
    fcj = float(cj)
    rest = float(n - ci - cj)
    mode = math.floor((fci + 1.0) * (fcj + 1.0) / (n + 2.0))
    if k > mode:
        # terms decrease monotonically from k upward
        logp = _log_choose(ci, k) + _log_choose(n - ci, cj - k) - _log_choose(n, cj)
        total = 1.0
        term = 1.0
        x = float(k)
        while x < hi:
            term *= (fci - x) * (fcj - x) / ((x + 1.0) * (rest + x + 1.0))
            total += term
            if term < _TAIL_EPS * total:
                break
            x += 1.0
        return min(0.0, logp + math.log(total))
    # k at or below the mode: 1 - P[X <= k-1], summing downward from k-1
    x = float(k - 1)
    logq = _log_choose(ci, k - 1) + _log_choose(n - ci, cj - k + 1) - _log_choose(n, cj)
    total = 1.0
    term = 1.0
    while x > lo:
        term *= x * (rest + x) / ((fci - x + 1.0) * (fcj - x + 1.0))
        total += term
        if term < _TAIL_EPS * total:
            break
        x -= 1.0
    lower = math.exp(logq) * total
    if lower >= 1.0:
        return -np.inf
    return math.log1p(-lower)


@njit(cache=True, parallel=True)
def hypergeom_logtail_numba(k, ci, cj, n):
    out = np.empty(k.shape[0], dtype=np.float64)
    for e in prange(k.shape[0]):
        out[e] = _logtail_one(k[e], ci[e], cj[e], n[e])
    return out


def _log_pmf(x, ci, cj, n):
    return (
        gammaln(ci + 1.0) - gammaln(x + 1.0) - gammaln(ci - x + 1.0)
        + gammaln(n - ci + 1.0) - gammaln(cj - x + 1.0) - gammaln(n - ci - cj + x + 1.0)
        - gammaln(n + 1.0) + gammaln(cj + 1.0) + gammaln(n - cj + 1.0)
    )


def _segment_logsumexp(values, starts):
    peak = np.maximum.reduceat(values, starts)
    lengths = np.diff(np.append(starts, values.size))
    shifted = np.exp(values - np.repeat(peak, lengths))
    return peak + np.log(np.add.reduceat(shifted, starts))


def _truncated_span(k, ci, cj, n, lo, hi, upper):
    """Summation range for each tail, dropping terms below ``_TAIL_EPS`` of the sum.

    The pmf is log-concave, so past any point ``x`` the remaining terms are at
    most ``pmf(x) * r / (1 - r)`` with ``r`` the term ratio at ``x``.  The span
    starts at the geometric bound from the anchor (at most 40 standard
    deviations) and doubles until that bound holds.
    """
    f_ci, f_cj, f_n = (a.astype(np.float64) for a in (ci, cj, n))
    rest = f_n - f_ci - f_cj
    var = f_cj * (f_ci / f_n) * (1.0 - f_ci / f_n) * (f_n - f_cj) / np.maximum(f_n - 1.0, 1.0)
    anchor = k if upper else k - 1
    # terms past the anchor shrink at least geometrically with its ratio r0
    a = anchor.astype(np.float64)
    if upper:
        r0 = (f_ci - a) * (f_cj - a) / ((a + 1.0) * (rest + a + 1.0))
    else:
        r0 = a * (rest + a) / ((f_ci - a + 1.0) * (f_cj - a + 1.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        geometric = (np.log(_TAIL_EPS) + np.log1p(-r0)) / np.log(r0)
    width = np.ceil(40.0 * np.sqrt(var)) + 40.0
    width = np.where((r0 > 0) & (r0 < 1), np.minimum(width, geometric + 2.0), width).astype(np.int64)
    ref = _log_pmf(anchor.astype(np.float64), f_ci, f_cj, f_n)
    todo = np.ones(k.size, dtype=bool)
    end = anchor.copy()
    log_eps = np.log(_TAIL_EPS) - 2.0
    while todo.any():
        t = np.flatnonzero(todo)
        if upper:
            e = np.minimum(hi[t], anchor[t] + width[t])
            x = e.astype(np.float64)
            r = (f_ci[t] - x) * (f_cj[t] - x) / ((x + 1.0) * (rest[t] + x + 1.0))
            at_edge = e >= hi[t]
        else:
            e = np.maximum(lo[t], anchor[t] - width[t])
            x = e.astype(np.float64)
            r = x * (rest[t] + x) / ((f_ci[t] - x + 1.0) * (f_cj[t] - x + 1.0))
            at_edge = e <= lo[t]
        end[t] = e
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = _log_pmf(x, f_ci[t], f_cj[t], f_n[t]) + np.log(r) - np.log1p(-r) - ref[t]
        done = at_edge | ((r < 1.0) & (bound < log_eps))
        todo[t[done]] = False
        width[t[~done]] *= 2
    return (k, end) if upper else (end, k - 1)


def _logtail_batch_numpy(k, ci, cj, n):
    lo = np.maximum(0, ci + cj - n)
    hi = np.minimum(ci, cj)
    out = np.zeros(k.size)
    out[k > hi] = -np.inf
    live = (k > lo) & (k <= hi)
    if not live.any():
        return out
    mode = np.floor((ci + 1.0) * (cj + 1.0) / (n + 2.0))
    upper = live & (k > mode)
    lower = live & ~upper
    for mask, is_upper in ((upper, True), (lower, False)):
        idx = np.flatnonzero(mask)
        if idx.size == 0:
            continue
        first, last = _truncated_span(k[idx], ci[idx], cj[idx], n[idx], lo[idx], hi[idx], is_upper)
        counts = (last - first + 1).astype(np.int64)
        starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
        offset = np.arange(counts.sum()) - np.repeat(starts, counts)
        x = (np.repeat(first, counts) + offset).astype(np.float64)
        rep = lambda a: np.repeat(a[idx].astype(np.float64), counts)  # noqa: E731
        lse = _segment_logsumexp(_log_pmf(x, rep(ci), rep(cj), rep(n)), starts)
        if is_upper:
            out[idx] = np.minimum(0.0, lse)
        else:
            below = np.exp(lse)
            with np.errstate(divide="ignore"):
                out[idx] = np.where(below >= 1.0, -np.inf, np.log1p(-np.minimum(below, 1.0)))
    return out


def hypergeom_logtail_numpy(k, ci, cj, n):
    k, ci, cj, n = (np.asarray(a, dtype=np.int64) for a in (k, ci, cj, n))
    out = np.empty(k.size)
    width = np.maximum(np.minimum(ci, cj) - np.maximum(0, ci + cj - n), 1)
    p = ci / np.maximum(n, 1)
    sd = np.sqrt(cj * p * (1.0 - p) * (n - cj) / np.maximum(n - 1, 1))
    # chunk by the expected truncated span, not the full support
    budget = np.cumsum(np.minimum(width, np.ceil(40.0 * sd).astype(np.int64) + 41))
    start = 0
    while start < k.size:
        base = budget[start - 1] if start else 0
        stop = int(np.searchsorted(budget, base + _NUMPY_TERM_BUDGET, side="right"))
        stop = max(stop, start + 1)
        sl = slice(start, stop)
        out[sl] = _logtail_batch_numpy(k[sl], ci[sl], cj[sl], n[sl])
        start = stop
    return out


# ---------------------------------------------------------------------------
# co-occurrence pair codes
# ---------------------------------------------------------------------------


@njit(cache=True)
def pair_codes_numba(indptr, ids, n_ids):
    total = 0
    for t in range(indptr.shape[0] - 1):
        m = indptr[t + 1] - indptr[t]
        total += m * (m - 1) // 2
    out = np.empty(total, dtype=np.int64)
    pos = 0
    for t in range(indptr.shape[0] - 1):
        for i in range(indptr[t], indptr[t + 1]):
            a = ids[i] * n_ids
            for j in range(i + 1, indptr[t + 1]):
                out[pos] = a + ids[j]
                pos += 1
    return out


def pair_codes_numpy(indptr, ids, n_ids):
    indptr = np.asarray(indptr, dtype=np.int64)
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.diff(indptr)
    chunks = []
    for m in np.unique(lengths[lengths >= 2]):
        rows = np.flatnonzero(lengths == m)
        block = ids[indptr[rows][:, None] + np.arange(m)]
        a, b = np.triu_indices(m, 1)
        chunks.append((block[:, a] * n_ids + block[:, b]).ravel())
    if not chunks:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(chunks)


# ---------------------------------------------------------------------------
# logistic regression, one mini-batch over CSR rows
# ---------------------------------------------------------------------------


@njit(cache=True)
def lr_batch_numba(indptr, indices, data, rows, y, w, b):
    grad = np.zeros(w.shape[0])
    loss = 0.0
    gb = 0.0
    for r in rows:
        z = b
        for p in range(indptr[r], indptr[r + 1]):
            z += data[p] * w[indices[p]]
        if z > 0.0:
            loss += z + math.log1p(math.exp(-z)) - y[r] * z
            prob = 1.0 / (1.0 + math.exp(-z))
        else:
            ez = math.exp(z)
            loss += math.log1p(ez) - y[r] * z
            prob = ez / (1.0 + ez)
        resid = prob - y[r]
        gb += resid
        for p in range(indptr[r], indptr[r + 1]):
            grad[indices[p]] += resid * data[p]
    return loss, grad, gb


def lr_batch_numpy(indptr, indices, data, rows, y, w, b):
    x = sp.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, w.shape[0]))[rows]
    z = x @ w + b
    yr = y[rows]
    loss = float(np.sum(np.logaddexp(0.0, z) - yr * z))
    resid = expit(z) - yr
    return loss, np.asarray(x.T @ resid).ravel(), float(resid.sum())


# ---------------------------------------------------------------------------
# homophily: per-target neighbour label counts
# ---------------------------------------------------------------------------


@njit(cache=True)
def neighbor_votes_numba(indptr, indices, labels, targets):
    out = np.zeros((targets.shape[0], 3), dtype=np.int64)
    for i in range(targets.shape[0]):
        u = targets[i]
        for p in range(indptr[u], indptr[u + 1]):
            lab = labels[indices[p]]
            if lab >= 0 and lab < 3:
                out[i, lab] += 1
    return out


def neighbor_votes_numpy(indptr, indices, labels, targets):
    indptr = np.asarray(indptr, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.int64)
    first = indptr[targets]
    deg = indptr[targets + 1] - first
    owner = np.repeat(np.arange(targets.size), deg)
    flat = np.repeat(first - np.cumsum(deg) + deg, deg) + np.arange(deg.sum())
    labs = np.asarray(labels)[np.asarray(indices)[flat]].astype(np.int64)
    keep = (labs >= 0) & (labs < 3)
    counts = np.bincount(owner[keep] * 3 + labs[keep], minlength=targets.size * 3)
    return counts.reshape(targets.size, 3).astype(np.int64)


if USE_NUMBA:
    hypergeom_logtail = hypergeom_logtail_numba
    pair_codes = pair_codes_numba
    lr_batch = lr_batch_numba
    neighbor_votes = neighbor_votes_numba
else:
    hypergeom_logtail = hypergeom_logtail_numpy
    pair_codes = pair_codes_numpy
    lr_batch = lr_batch_numpy
    neighbor_votes = neighbor_votes_numpy

BACKEND = "numba" if USE_NUMBA else "numpy"

__all__ = [
    "BACKEND",
    "HAVE_NUMBA",
    "hypergeom_logtail",
    "hypergeom_logtail_numba",
    "hypergeom_logtail_numpy",
    "lr_batch",
    "lr_batch_numba",
    "lr_batch_numpy",
    "neighbor_votes",
    "neighbor_votes_numba",
    "neighbor_votes_numpy",
    "pair_codes",
    "pair_codes_numba",
    "pair_codes_numpy",
]
