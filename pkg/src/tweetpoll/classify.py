"""Hashtag-labelled training data and the tweet stance classifier.

The model is a binary bag-of-words logistic regression: probability 1 means
Macri (M), 0 means Fernandez (F).  Third-party (T) tweets are recognised only
through seed hashtags.
"""
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from tweetpoll import kernels
from tweetpoll.errors import ConfigurationError, DataError
from tweetpoll.io import csv_text

MODEL_FORMAT = "tweetpoll-stance-model"
MODEL_VERSION = 1
LABEL_TO_Y = {"F": 0.0, "M": 1.0}


class TweetStance(str, Enum):
    FF = "FF"
    MP = "MP"
    TP = "TP"
    UNCLASSIFIED = "Unclassified"


@dataclass(frozen=True)
class LabeledTweet:
    tweet: object
    label: str


@dataclass
class TrainingSplit:
    train: list
    test: list
    third: list = field(default_factory=list)
    excluded_conflicts: int = 0


def build_training_set(tweets, seeds, cutoff_date, test_fraction=0.1, seed=0):
    """Label tweets by seed hashtags and split them train/test.

    Only tweets dated strictly before ``cutoff_date`` are used.  A tweet is
    labelled when all its seed hashtags agree; T-labelled tweets are returned
    separately and kept out of both F/M partitions.
    """
    labelled, third, conflicts = [], [], 0
    for t in tweets:
        if t.day >= cutoff_date:
            continue
        camps = {seeds[h] for h in t.hashtags if h in seeds}
        if not camps:
            continue
        if len(camps) > 1:
            conflicts += 1
            continue
        label = camps.pop()
        (third if label == "T" else labelled).append(LabeledTweet(t, label))
    if not labelled:
        raise ConfigurationError("no seed-labelled F/M tweets before the training cutoff")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(labelled))
    n_test = int(round(test_fraction * len(labelled)))
    test = [labelled[i] for i in sorted(order[:n_test])]
    train = [labelled[i] for i in sorted(order[n_test:])]
    return TrainingSplit(train, test, third, conflicts)


def build_vocabulary(token_lists):
    return {tok: i for i, tok in enumerate(sorted({t for toks in token_lists for t in toks}))}


def featurize(token_lists, vocab):
    """Bag-of-words count matrix (CSR); out-of-vocabulary tokens are dropped."""
    indptr, indices, data = [0], [], []
    for toks in token_lists:
        row = {}
        for t in toks:
            j = vocab.get(t)
            if j is not None:
                row[j] = row.get(j, 0) + 1
        for j in sorted(row):
            indices.append(j)
            data.append(float(row[j]))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data, dtype=np.float64), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(token_lists), len(vocab)),
    )


def _tokens_of(item):
    tweet = getattr(item, "tweet", item)
    return tweet.tokens


def _xy(labelled, vocab):
    x = featurize([_tokens_of(lt) for lt in labelled], vocab)
    y = np.array([LABEL_TO_Y[lt.label] for lt in labelled])
    return x, y


def lr_objective(w, b, x, y, lam, rows=None):
    """Mean negative log-likelihood + ``lam/2 * |w|^2`` and its gradient."""
    x = sp.csr_matrix(x)
    rows = np.arange(x.shape[0]) if rows is None else np.asarray(rows)
    loss, gw, gb = kernels.lr_batch(x.indptr.astype(np.int64), x.indices.astype(np.int64), x.data, rows, y, w, b)
    n = rows.size
    loss = loss / n + 0.5 * lam * float(w @ w)
    return loss, gw / n + lam * w, gb / n


@dataclass
class StanceModel:
    vocab: dict
    weights: np.ndarray
    bias: float
    lam: float
    low: float = 0.33
    high: float = 0.66

    def __post_init__(self):
        if not self.low < self.high:
            raise ConfigurationError("low threshold must be below high threshold")
        if not np.all(np.isfinite(self.weights)):
            raise DataError("non-finite model weights")

    def decision(self, token_lists):
        return featurize(token_lists, self.vocab) @ self.weights + self.bias

    def predict_proba(self, token_lists):
        return expit(self.decision(token_lists))

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "vocabulary": sorted(self.vocab, key=self.vocab.get),
            "weights": [float(v) for v in self.weights],
            "bias": float(self.bias),
            "lambda": self.lam,
            "thresholds": [self.low, self.high],
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
            raise DataError("not a tweetpoll stance model (format/version mismatch)")
        vocab = {tok: i for i, tok in enumerate(d["vocabulary"])}
        low, high = d["thresholds"]
        return cls(vocab, np.array(d["weights"], dtype=np.float64), d["bias"], d["lambda"], low, high)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def train_lr(train, lam=1e-4, epochs=20, batch_size=256, rate=0.1, seed=0):
    """Seeded mini-batch gradient descent on the L2-regularised log-loss.

    The step size decays as ``rate / sqrt(t)`` with ``t`` the 1-based update
    count.  Same data and seed give a bit-identical model.
    """
    labels = {lt.label for lt in train}
    if labels != {"F", "M"}:
        raise DataError(f"training data must contain both F and M tweets, got {sorted(labels)}")
    vocab = build_vocabulary(_tokens_of(lt) for lt in train)
    x, y = _xy(train, vocab)
    indptr, indices = x.indptr.astype(np.int64), x.indices.astype(np.int64)
    w = np.zeros(len(vocab))
    b = 0.0
    rng = np.random.default_rng(seed)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, order.size, batch_size):
            rows = order[start:start + batch_size]
            _, gw, gb = kernels.lr_batch(indptr, indices, x.data, rows, y, w, b)
            step += 1
            eta = rate / math.sqrt(step)
            w -= eta * (gw / rows.size + lam * w)
            b -= eta * gb / rows.size
    return StanceModel(vocab, w, float(b), lam)


@dataclass
class NaiveBayesModel:
    """Multinomial naive Bayes with add-one smoothing (F vs M baseline)."""

    vocab: dict
    log_prior: np.ndarray  # [F, M]
    log_lik: np.ndarray  # (2, V)

    def decision(self, token_lists):
        x = featurize(token_lists, self.vocab)
        scores = x @ self.log_lik.T + self.log_prior
        return scores[:, 1] - scores[:, 0]

    def predict_proba(self, token_lists):
        return expit(self.decision(token_lists))


def train_nb(train):
    labels = {lt.label for lt in train}
    if labels != {"F", "M"}:
        raise DataError(f"training data must contain both F and M tweets, got {sorted(labels)}")
    vocab = build_vocabulary(_tokens_of(lt) for lt in train)
    x, y = _xy(train, vocab)
    counts = np.vstack([np.asarray(x[y == c].sum(axis=0)).ravel() for c in (0.0, 1.0)]) + 1.0
    log_lik = np.log(counts) - np.log(counts.sum(axis=1, keepdims=True))
    prior = np.array([np.mean(y == 0.0), np.mean(y == 1.0)])
    return NaiveBayesModel(vocab, np.log(prior), log_lik)


@dataclass
class EvaluationReport:
    confusion: np.ndarray  # rows = true (F, M), cols = predicted (F, M)
    metrics: dict  # {"FF": {"precision":..}, "MP": {...}}
    accuracy: float

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "confusion": {"labels": ["FF", "MP"], "matrix": self.confusion.tolist()},
            "metrics": self.metrics,
        }

    def confusion_csv(self):
        c = self.confusion
        return csv_text(("true\\predicted", "FF", "MP"), [("FF", c[0, 0], c[0, 1]), ("MP", c[1, 0], c[1, 1])])


def _prf(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"precision": precision, "recall": recall, "f1": f1}


def evaluate_predictions(y_true, y_pred):
    y_true = np.asarray(y_true, dtype=int)
    y_pred = np.asarray(y_pred, dtype=int)
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    metrics = {
        "FF": _prf(conf[0, 0], conf[1, 0], conf[0, 1]),
        "MP": _prf(conf[1, 1], conf[0, 1], conf[1, 0]),
    }
    return EvaluationReport(conf, metrics, float(np.trace(conf) / conf.sum()))


def evaluate(model, test):
    """Per-class precision/recall/F1 with the decision boundary at p = 0.5."""
    if not test:
        raise DataError("empty test set")
    p = model.predict_proba([_tokens_of(lt) for lt in test])
    y_true = [int(LABEL_TO_Y[lt.label]) for lt in test]
    return evaluate_predictions(y_true, (p >= 0.5).astype(int))


def stance_from_probability(p, low=0.33, high=0.66):
    if p <= low:
        return TweetStance.FF
    if p >= high:
        return TweetStance.MP
    return TweetStance.UNCLASSIFIED


def _all_third(hashtags, seeds):
    camps = {seeds[h] for h in hashtags if h in seeds}
    return camps == {"T"}


@dataclass(frozen=True)
class ClassifiedTweet:
    tweet_id: str
    user_id: str
    day: object
    stance: TweetStance
    p: float | None


def classify_tweet(model, tweet, seeds):
    if _all_third(tweet.hashtags, seeds):
        return TweetStance.TP, None
    p = float(model.predict_proba([tweet.tokens])[0])
    return stance_from_probability(p, model.low, model.high), p


def classify_corpus(model, tweets, seeds):
    tweets = list(tweets)
    probs = model.predict_proba([t.tokens for t in tweets]) if tweets else np.empty(0)
    out = []
    for t, p in zip(tweets, probs):
        if _all_third(t.hashtags, seeds):
            out.append(ClassifiedTweet(t.tweet_id, t.user_id, t.day, TweetStance.TP, None))
        else:
            p = float(p)
            out.append(ClassifiedTweet(t.tweet_id, t.user_id, t.day, stance_from_probability(p, model.low, model.high), p))
    return out


def classified_csv(rows):
    return csv_text(
        ("tweet_id", "user_id", "day", "stance", "p"),
        [(r.tweet_id, r.user_id, r.day.isoformat(), r.stance.value, "" if r.p is None else repr(r.p)) for r in rows],
    )
