import math
from datetime import date, datetime, timedelta, timezone
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest

from tweetpoll import ingest
from tweetpoll.synth import ElectorateSpec, generate_corpus


def exact_tail(k, ci, cj, n):
    """P[X >= k] as an exact fraction, summing the hypergeometric pmf directly."""
    total = math.comb(n, cj)
    hits = sum(math.comb(ci, x) * math.comb(n - ci, cj - x) for x in range(k, min(ci, cj) + 1))
    return Fraction(hits, total)


def raw(tweet_id, user, text, day=1, client="Twitter for Android", rt=None, hour=12):
    return ingest.RawTweet(
        tweet_id=tweet_id,
        user_id=user,
        timestamp=datetime(2019, 3, day, hour, tzinfo=timezone.utc),
        text=text,
        source_client=client,
        hashtags=ingest.extract_hashtags(text),
        retweet_of_user_id=rt,
        lang="es",
    )


@pytest.fixture(scope="session")
def small_corpus():
    spec = ElectorateSpec(n_users=600, n_days=20, seed=7)
    return generate_corpus(spec)


@pytest.fixture(scope="session")
def stopwords():
    return ingest.load_stopwords()


START = date(2019, 3, 1)


def random_classified(rng, n_users=12, n_days=15, n_tweets=60, stances=("FF", "MP", "TP", "Unclassified")):
    """Chronological stream of (user_id, day, stance) records."""
    days = np.sort(rng.integers(0, n_days, size=n_tweets))
    users = rng.integers(0, n_users, size=n_tweets)
    picks = rng.integers(0, len(stances), size=n_tweets)
    return [
        SimpleNamespace(tweet_id=str(i), user_id=f"u{u:02d}", day=START + timedelta(days=int(d)), stance=stances[s])
        for i, (d, u, s) in enumerate(zip(days, users, picks))
    ]


def random_graph(rng, users, p=0.2):
    from tweetpoll import opinion

    pairs = [(a, b) for i, a in enumerate(users) for b in users[i + 1:] if rng.random() < p]
    return opinion.RetweetGraph.from_edges(pairs, nodes=users)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
