"""Hashtag co-occurrence network with hypergeometric edge validation."""
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np

from tweetpoll import kernels
from tweetpoll.errors import DataError, DomainError
from tweetpoll.io import csv_text, fmt, read_csv_rows

CAMPS = ("M", "F", "T")
# the published seed tables use K (Kirchner) for the Fernandez camp
CAMP_ALIASES = {"K": "F"}


@dataclass
class CooccurrenceCounts:
    N: int = 0
    occ: Counter = field(default_factory=Counter)
    pair: Counter = field(default_factory=Counter)

    def merge(self, other):
        return CooccurrenceCounts(self.N + other.N, self.occ + other.occ, self.pair + other.pair)


def _tag_sets(tweets):
    for t in tweets:
        yield tuple(sorted(set(t.hashtags)))


def count_cooccurrences(tweets, count_all_tweets=True):
    """Count hashtag occurrences and co-occurrences, once per tweet.

    ``N`` is the number of tweets processed, or only those carrying at least
    one hashtag when ``count_all_tweets`` is false.
    """
    tag_sets = list(_tag_sets(tweets))
    vocab = sorted({h for s in tag_sets for h in s})
    index = {h: i for i, h in enumerate(vocab)}
    lengths = np.fromiter((len(s) for s in tag_sets), dtype=np.int64, count=len(tag_sets))
    indptr = np.concatenate(([0], np.cumsum(lengths))).astype(np.int64)
    ids = np.fromiter((index[h] for s in tag_sets for h in s), dtype=np.int64, count=int(lengths.sum()))

    counts = CooccurrenceCounts()
    counts.N = len(tag_sets) if count_all_tweets else int(np.count_nonzero(lengths))
    if vocab:
        occ = np.bincount(ids, minlength=len(vocab))
        counts.occ = Counter({vocab[i]: int(c) for i, c in enumerate(occ) if c})
        codes, k = np.unique(kernels.pair_codes(indptr, ids, len(vocab)), return_counts=True)
        a, b = np.divmod(codes, len(vocab))
        counts.pair = Counter({(vocab[i], vocab[j]): int(c) for i, j, c in zip(a, b, k)})
    return counts


def _check_domain(k, ci, cj, n):
    if np.any(ci < 1) or np.any(cj < 1):
        raise DomainError("occurrence counts must be >= 1")
    if np.any(k < 0) or np.any(k > np.minimum(ci, cj)) or np.any(np.maximum(ci, cj) > n):
        raise DomainError("need 0 <= k <= min(c_i, c_j) <= max(c_i, c_j) <= N")


def edge_log_pvalues(k, ci, cj, n):
    """Vectorised ``log P[X >= k]`` for hypergeometric X (N, c_i marked, c_j drawn)."""
    k, ci, cj, n = (np.atleast_1d(np.asarray(a, dtype=np.int64)) for a in (k, ci, cj, n))
    k, ci, cj, n = np.broadcast_arrays(k, ci, cj, n)
    _check_domain(k, ci, cj, n)
    return kernels.hypergeom_logtail(*(np.ascontiguousarray(a) for a in (k, ci, cj, n)))


def edge_pvalues(k, ci, cj, n):
    return np.exp(edge_log_pvalues(k, ci, cj, n))


def edge_pvalue(k, c_i, c_j, N):
    """Probability of at least ``k`` co-occurrences by chance.

    X counts the tweets carrying both hashtags when the ``c_j`` tweets of one
    are placed uniformly at random among ``N`` tweets, ``c_i`` of which carry
    the other.  The tail is summed exactly in log space.
    """
    if k == 0:
        _check_domain(np.array([0]), np.array([c_i]), np.array([c_j]), np.array([N]))
        return 1.0
    return float(edge_pvalues(k, c_i, c_j, N)[0])


@dataclass
class ValidatedHashtagNetwork:
    vertices: dict
    edges: list  # (hashtag_i, hashtag_j, k, p) with hashtag_i < hashtag_j
    threshold: float
    log_p: dict = field(default_factory=dict, repr=False)

    def adjacency(self):
        adj = defaultdict(set)
        for a, b, _, _ in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        return adj

    def connected_vertices(self):
        return sorted({h for e in self.edges for h in e[:2]})

    def edges_csv(self):
        return csv_text(("hashtag_i", "hashtag_j", "k", "p"), [(a, b, k, fmt(p)) for a, b, k, p in self.edges])

    def vertices_csv(self, seeds=None):
        seeds = seeds or {}
        rows = [(h, c, seeds.get(h, "")) for h, c in sorted(self.vertices.items())]
        return csv_text(("hashtag", "count", "camp"), rows)


def validate_network(counts, threshold=1e-7):
    if not 0.0 < threshold <= 1.0:
        raise DomainError("threshold must lie in (0, 1]")
    pairs = sorted(counts.pair.items())
    edges, log_p = [], {}
    if pairs:
        k = np.array([c for _, c in pairs])
        ci = np.array([counts.occ[a] for (a, _), _ in pairs])
        cj = np.array([counts.occ[b] for (_, b), _ in pairs])
        lp = edge_log_pvalues(k, ci, cj, np.full(k.size, counts.N))
        cut = math.log(threshold)
        for ((a, b), kk), l in zip(pairs, lp):
            # threshold=1 keeps every co-occurring pair
            if l < cut or (threshold == 1.0 and kk > 0):
                edges.append((a, b, int(kk), math.exp(l)))
                log_p[(a, b)] = float(l)
    return ValidatedHashtagNetwork(dict(counts.occ), edges, threshold, log_p)


def normalize_camp(camp):
    c = camp.strip().upper()
    c = CAMP_ALIASES.get(c, c)
    if c not in CAMPS:
        raise DataError(f"unknown camp {camp!r}")
    return c


def load_seed_labels(path):
    seeds = {}
    for row in read_csv_rows(path):
        tag = row["hashtag"].strip().lstrip("#").lower()
        camp = normalize_camp(row["camp"])
        if seeds.get(tag, camp) != camp:
            raise DataError(f"hashtag {tag!r} labelled with two camps")
        seeds[tag] = camp
    return seeds


def seed_labels_csv(seeds):
    return csv_text(("hashtag", "camp"), sorted(seeds.items()))


@dataclass
class ConsistencyReport:
    cross_edges: list  # (hashtag_i, camp_i, hashtag_j, camp_j, k, p)
    labelled_edges: int
    ranking: list  # (hashtag, camp, n_cross_edges, n_same_edges)

    @property
    def cross_fraction(self):
        return len(self.cross_edges) / self.labelled_edges if self.labelled_edges else 0.0

    def to_csv(self):
        return csv_text(
            ("hashtag", "camp", "cross_camp_edges", "same_camp_edges"),
            self.ranking,
        )


def label_consistency_report(net, seeds):
    """Validated edges joining hashtags seeded with different camps.

    Hashtags are ranked by how many cross-camp edges they carry, the
    likeliest mislabels first.
    """
    cross, labelled = [], 0
    n_cross, n_same = Counter(), Counter()
    strength = Counter()
    for a, b, k, p in net.edges:
        ca, cb = seeds.get(a), seeds.get(b)
        if ca is None or cb is None:
            continue
        labelled += 1
        if ca == cb:
            n_same[a] += 1
            n_same[b] += 1
            continue
        cross.append((a, ca, b, cb, k, p))
        lp = -net.log_p.get((a, b), math.log(max(p, 1e-300)))
        for h in (a, b):
            n_cross[h] += 1
            strength[h] += lp
    cross.sort(key=lambda e: (e[5], e[0], e[2]))
    ranked = sorted(n_cross, key=lambda h: (-n_cross[h], -n_cross[h] / (n_cross[h] + n_same[h]), -strength[h], h))
    ranking = [(h, seeds[h], n_cross[h], n_same[h]) for h in ranked]
    return ConsistencyReport(cross, labelled, ranking)


def propagate_labels(net, seeds, max_rounds=10):
    """Synchronous majority-label propagation over validated edges.

    Seeds never change; unlabelled vertices take the strict plurality camp of
    their labelled neighbours and stay unlabelled on ties.
    """
    if not seeds:
        raise DomainError("propagation needs at least one seed label")
    adj = net.adjacency()
    labels = dict(seeds)
    for _ in range(max_rounds):
        update = {}
        for v in sorted(adj):
            if v in seeds:
                continue
            votes = Counter(labels[u] for u in adj[v] if u in labels)
            if not votes:
                continue
            (top, n), *rest = votes.most_common()
            if rest and rest[0][1] == n:
                continue
            if labels.get(v) != top:
                update[v] = top
        if not update:
            break
        labels.update(update)
    return labels


def hashtag_frequencies(tweets):
    """Tweets per hashtag, most frequent first."""
    c = Counter(h for s in _tag_sets(tweets) for h in s)
    return sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))


def frequencies_csv(freqs):
    return csv_text(("hashtag", "count"), freqs)
