import math
from collections import Counter
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweetpoll import hashnet
from tweetpoll.errors import DataError, DomainError

from conftest import exact_tail


def tw(*tags):
    return SimpleNamespace(hashtags=tags)


def all_cases(n_max):
    rows = []
    for n in range(1, n_max + 1):
        for ci in range(1, n + 1):
            for cj in range(1, n + 1):
                for k in range(0, min(ci, cj) + 1):
                    rows.append((k, ci, cj, n))
    return np.array(rows, dtype=np.int64).T


def test_textbook_value():
    # 10 tweets, 5 carry A, 4 carry B, all 4 B tweets also carry A
    assert hashnet.edge_pvalue(4, 5, 4, 10) == pytest.approx(5 / 210, abs=1e-15)


def test_k_zero_is_certain():
    assert hashnet.edge_pvalue(0, 3, 4, 10) == 1.0


def test_exhaustive_small_n_against_fractions():
    k, ci, cj, n = all_cases(12)
    got = hashnet.edge_pvalues(k, ci, cj, n)
    want = np.array([float(exact_tail(*c)) for c in zip(k.tolist(), ci.tolist(), cj.tolist(), n.tolist())])
    assert np.max(np.abs(got - want)) < 1e-12


def test_symmetric_in_marked_and_drawn():
    rng = np.random.default_rng(3)
    n = rng.integers(50, 5000, size=200)
    ci = rng.integers(1, n + 1)
    cj = rng.integers(1, n + 1)
    k = rng.integers(0, np.minimum(ci, cj) + 1)
    a = hashnet.edge_log_pvalues(k, ci, cj, n)
    b = hashnet.edge_log_pvalues(k, cj, ci, n)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_tiny_tails_stay_finite_in_log_space():
    lp = hashnet.edge_log_pvalues(5000, 5000, 5000, 10**8)
    assert np.isfinite(lp[0]) and lp[0] < -50_000


@pytest.mark.parametrize("args", [(3, 2, 4, 10), (-1, 2, 4, 10), (1, 11, 4, 10), (1, 0, 4, 10)])
def test_domain_errors(args):
    with pytest.raises(DomainError):
        hashnet.edge_pvalue(*args)


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 400).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n), st.integers(1, n))))
def test_tail_is_monotone_in_k(case):
    n, ci, cj = case
    ks = np.arange(0, min(ci, cj) + 1)
    p = hashnet.edge_pvalues(ks, ci, cj, n)
    assert p[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(p) <= 1e-12)
    assert np.all((p >= 0) & (p <= 1 + 1e-12))


def test_count_once_per_tweet():
    counts = hashnet.count_cooccurrences([tw("a", "b", "a"), tw("b"), tw()])
    assert counts.N == 3
    assert counts.occ == Counter({"a": 1, "b": 2})
    assert counts.pair == Counter({("a", "b"): 1})
    assert hashnet.count_cooccurrences([tw("a"), tw()], count_all_tweets=False).N == 1


def test_counts_merge_matches_union():
    a = [tw("x", "y"), tw("y", "z")]
    b = [tw("x", "y", "z")]
    merged = hashnet.count_cooccurrences(a).merge(hashnet.count_cooccurrences(b))
    whole = hashnet.count_cooccurrences(a + b)
    assert merged == whole


def network_fixture():
    # "a" and "b" always appear together; "c" is scattered noise
    tweets = [tw("a", "b")] * 30 + [tw("c")] * 30 + [tw()] * 400 + [tw("a", "c")]
    return hashnet.count_cooccurrences(tweets)


def test_validation_keeps_only_significant_edges():
    net = hashnet.validate_network(network_fixture())
    assert [(a, b) for a, b, _, _ in net.edges] == [("a", "b")]
    loose = hashnet.validate_network(network_fixture(), threshold=1.0)
    assert {(a, b) for a, b, _, _ in loose.edges} == {("a", "b"), ("a", "c")}


def test_seed_loading_accepts_k_alias(tmp_path):
    p = tmp_path / "seeds.csv"
    p.write_text("hashtag,camp\n#CFK,K\nmacri,M\nlavagna2019,T\n")
    assert hashnet.load_seed_labels(p) == {"cfk": "F", "macri": "M", "lavagna2019": "T"}
    p.write_text("hashtag,camp\ncfk,F\ncfk,M\n")
    with pytest.raises(DataError):
        hashnet.load_seed_labels(p)


def test_consistency_report_ranks_cross_camp_hashtags():
    tweets = [tw("f1", "f2")] * 20 + [tw("m1", "m2")] * 20 + [tw("f1", "m1")] * 15 + [tw()] * 500
    net = hashnet.validate_network(hashnet.count_cooccurrences(tweets))
    seeds = {"f1": "F", "f2": "F", "m1": "M", "m2": "M"}
    rep = hashnet.label_consistency_report(net, seeds)
    assert [(e[0], e[2]) for e in rep.cross_edges] == [("f1", "m1")]
    assert {r[0] for r in rep.ranking} == {"f1", "m1"}
    assert rep.cross_fraction == pytest.approx(1 / 3)


def test_propagation_fills_neighbours_and_keeps_seeds():
    tweets = [tw("f1", "x")] * 20 + [tw("x", "y")] * 20 + [tw("m1", "z")] * 20 + [tw()] * 1000
    net = hashnet.validate_network(hashnet.count_cooccurrences(tweets))
    labels = hashnet.propagate_labels(net, {"f1": "F", "m1": "M"})
    assert labels == {"f1": "F", "x": "F", "y": "F", "m1": "M", "z": "M"}
    with pytest.raises(DomainError):
        hashnet.propagate_labels(net, {})


def test_exports_have_documented_headers():
    net = hashnet.validate_network(network_fixture())
    assert net.edges_csv().splitlines()[0] == "hashtag_i,hashtag_j,k,p"
    assert net.vertices_csv({"a": "F"}).splitlines()[1] == "a,31,F"
    freqs = hashnet.hashtag_frequencies([tw("a"), tw("a", "b")])
    assert hashnet.frequencies_csv(freqs) == "hashtag,count\na,2\nb,1\n"


def test_large_network_pvalue_matches_log_identity():
    # P[X >= c] with c_i = c_j = c is 1 / C(N, c)
    n, c = 10**6, 40
    lp = hashnet.edge_log_pvalues(c, c, c, n)[0]
    want = -(math.lgamma(n + 1) - math.lgamma(c + 1) - math.lgamma(n - c + 1))
    assert lp == pytest.approx(want, rel=1e-12)
