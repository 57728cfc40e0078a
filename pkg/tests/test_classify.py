from datetime import date
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logit

from tweetpoll import classify, ingest
from tweetpoll.classify import TweetStance
from tweetpoll.errors import ConfigurationError, DataError

SEEDS = {"fa": "F", "fb": "F", "ma": "M", "mb": "M", "ta": "T"}


def ct(i, tokens, tags=(), day=date(2019, 3, 1), user="u"):
    return ingest.CleanTweet(str(i), user, day, tuple(tokens), tuple(tags), None)


def toy_corpus(n=400, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        camp = "F" if i % 2 else "M"
        own = [f"{camp.lower()}w{j}" for j in rng.integers(0, 20, size=5)]
        shared = [f"c{j}" for j in rng.integers(0, 10, size=3)]
        tag = "fa" if camp == "F" else "ma"
        out.append(ct(i, own + shared, (tag,)))
    return out


def test_training_set_labels_split_and_cutoff():
    tweets = [
        ct(1, ["a"], ("fa",)),
        ct(2, ["b"], ("ma", "mb")),
        ct(3, ["c"], ("fa", "ma")),
        ct(4, ["d"], ("ta",)),
        ct(5, ["e"], ("fa",), day=date(2019, 8, 1)),
        ct(6, ["f"]),
    ]
    split = classify.build_training_set(tweets, SEEDS, date(2019, 8, 1), test_fraction=0.5, seed=1)
    ids = sorted(lt.tweet.tweet_id for lt in split.train + split.test)
    assert ids == ["1", "2"]
    assert len(split.test) == 1
    assert [lt.tweet.tweet_id for lt in split.third] == ["4"]
    assert split.excluded_conflicts == 1
    with pytest.raises(ConfigurationError):
        classify.build_training_set(tweets, SEEDS, date(2019, 1, 1))


def test_featurize_counts_and_drops_oov():
    vocab = {"a": 0, "b": 1}
    x = classify.featurize([["a", "a", "z"], ["b"]], vocab).toarray()
    np.testing.assert_array_equal(x, [[2, 0], [0, 1]])


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(0)
    x = classify.featurize([[f"t{j}" for j in rng.integers(0, 50, size=6)] for _ in range(40)], {f"t{j}": j for j in range(50)})
    y = rng.integers(0, 2, size=40).astype(float)
    w, b, lam, h = rng.normal(size=50), 0.2, 1e-2, 1e-6
    _, gw, gb = classify.lr_objective(w, b, x, y, lam)
    fd = np.empty(50)
    for j in range(50):
        e = np.zeros(50)
        e[j] = h
        fd[j] = (classify.lr_objective(w + e, b, x, y, lam)[0] - classify.lr_objective(w - e, b, x, y, lam)[0]) / (2 * h)
    fdb = (classify.lr_objective(w, b + h, x, y, lam)[0] - classify.lr_objective(w, b - h, x, y, lam)[0]) / (2 * h)
    assert np.max(np.abs(gw - fd)) / np.max(np.abs(gw)) < 1e-6
    assert gb == pytest.approx(fdb, rel=1e-6)


def test_training_separates_camps_and_is_deterministic():
    tweets = toy_corpus()
    split = classify.build_training_set(tweets, SEEDS, date(2019, 8, 1), seed=0)
    m1 = classify.train_lr(split.train, seed=3)
    m2 = classify.train_lr(split.train, seed=3)
    assert m1.to_json() == m2.to_json()
    report = classify.evaluate(m1, split.test)
    assert report.accuracy > 0.95
    assert report.confusion.sum() == len(split.test)


def test_naive_bayes_baseline_runs():
    split = classify.build_training_set(toy_corpus(), SEEDS, date(2019, 8, 1), seed=0)
    nb = classify.train_nb(split.train)
    assert classify.evaluate(nb, split.test).accuracy > 0.9


def test_one_class_training_is_rejected():
    with pytest.raises(DataError):
        classify.train_lr([classify.LabeledTweet(ct(1, ["a"]), "F")])


def test_model_round_trip():
    split = classify.build_training_set(toy_corpus(100), SEEDS, date(2019, 8, 1), seed=0)
    m = classify.train_lr(split.train, epochs=2)
    again = classify.StanceModel.from_json(m.to_json())
    np.testing.assert_array_equal(again.weights, m.weights)
    assert again.vocab == m.vocab and again.bias == m.bias
    with pytest.raises(DataError):
        classify.StanceModel.from_dict({"format": "other"})


def one_token_model(p):
    return classify.StanceModel({"x": 0}, np.array([logit(p)]), 0.0, 0.0)


@pytest.mark.parametrize("p,stance", [(0.33, TweetStance.FF), (0.66, TweetStance.MP), (0.5, TweetStance.UNCLASSIFIED), (0.3299, TweetStance.FF), (0.6601, TweetStance.MP)])
def test_threshold_boundaries(p, stance):
    tweet = ct(1, ["x"])
    got, prob = classify.classify_tweet(one_token_model(p), tweet, SEEDS)
    assert prob == p
    assert got is stance


def test_third_party_needs_only_third_party_seeds():
    m = one_token_model(0.9)
    assert classify.classify_tweet(m, ct(1, ["x"], ("ta",)), SEEDS) == (TweetStance.TP, None)
    assert classify.classify_tweet(m, ct(1, ["x"], ("ta", "fa")), SEEDS)[0] is TweetStance.MP


def test_classified_csv_header():
    rows = classify.classify_corpus(one_token_model(0.2), [ct(1, ["x"])], SEEDS)
    assert classify.classified_csv(rows).splitlines()[0] == "tweet_id,user_id,day,stance,p"


def test_precision_recall_from_confusion():
    rep = classify.evaluate_predictions([0, 0, 0, 1, 1], [0, 0, 1, 1, 0])
    assert rep.metrics["FF"]["precision"] == pytest.approx(2 / 3)
    assert rep.metrics["FF"]["recall"] == pytest.approx(2 / 3)
    assert rep.metrics["MP"]["recall"] == pytest.approx(1 / 2)
    assert rep.accuracy == pytest.approx(3 / 5)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 1), st.floats(0.01, 0.49), st.floats(0.51, 0.99))
def test_stance_is_monotone_in_p(p, low, high):
    s = classify.stance_from_probability(p, low, high)
    if p <= low:
        assert s is TweetStance.FF
    elif p >= high:
        assert s is TweetStance.MP
    else:
        assert s is TweetStance.UNCLASSIFIED
