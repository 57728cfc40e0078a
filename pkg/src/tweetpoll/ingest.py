"""Archived tweet stream ingestion: parsing, bot filtering, text standardization."""
import gzip
import json
import logging
import re
import unicodedata
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from importlib import resources
from pathlib import Path

from tweetpoll.errors import ConfigurationError
from tweetpoll.io import csv_text

log = logging.getLogger(__name__)

REQUIRED_FIELDS = ("tweet_id", "user_id", "timestamp", "text", "source_client")

HASHTAG_RE = re.compile(r"#(\w+)")
URL_RE = re.compile(r"(?:https?://|www\.)\S+", re.IGNORECASE)
TOKEN_RE = re.compile(r"[#@]?\w+")
URL_TOKEN = "URL"

DEFAULT_WHITELIST = frozenset(
    {
        "Twitter for iPhone",
        "Twitter for Android",
        "Twitter Web App",
        "Twitter Web Client",
        "Twitter for iPad",
        "TweetDeck",
    }
)


@dataclass(frozen=True)
class RawTweet:
    tweet_id: str
    user_id: str
    timestamp: datetime
    text: str
    source_client: str
    hashtags: tuple
    retweet_of_user_id: str | None = None
    lang: str = ""

    @property
    def day(self) -> date:
        return self.timestamp.date()


@dataclass(frozen=True)
class CleanTweet:
    tweet_id: str
    user_id: str
    day: date
    tokens: tuple
    hashtags: tuple
    retweet_of_user_id: str | None = None

    def to_dict(self):
        return {
            "tweet_id": self.tweet_id,
            "user_id": self.user_id,
            "day": self.day.isoformat(),
            "tokens": list(self.tokens),
            "hashtags": list(self.hashtags),
            "retweet_of_user_id": self.retweet_of_user_id,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            tweet_id=d["tweet_id"],
            user_id=d["user_id"],
            day=date.fromisoformat(d["day"]),
            tokens=tuple(d["tokens"]),
            hashtags=tuple(d["hashtags"]),
            retweet_of_user_id=d.get("retweet_of_user_id"),
        )


@dataclass
class ParseStats:
    lines: int = 0
    parsed: int = 0
    malformed: int = 0
    duplicates: int = 0
    out_of_window: int = 0
    hashtag_mismatch: int = 0

    def merge(self, other):
        return ParseStats(*(getattr(self, f) + getattr(other, f) for f in self.__dataclass_fields__))

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass(frozen=True)
class SourceWhitelist:
    allowed_clients: frozenset

    def __post_init__(self):
        cleaned = frozenset(c.strip() for c in self.allowed_clients if c and c.strip())
        if not cleaned:
            raise ConfigurationError("source whitelist is empty")
        object.__setattr__(self, "allowed_clients", cleaned)

    def __contains__(self, client):
        return client is not None and client.strip() in self.allowed_clients


def default_whitelist():
    return SourceWhitelist(DEFAULT_WHITELIST)


def load_whitelist(path):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return SourceWhitelist(frozenset(lines))


def load_stopwords(path=None):
    """One stopword per line; ``None`` loads the bundled Spanish list."""
    if path is None:
        text = resources.files("tweetpoll").joinpath("data/stopwords_es.txt").read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    words = (_normalize(w.strip()).lower() for w in text.splitlines())
    return frozenset(w for w in words if w and not w.startswith(";"))


def _normalize(text):
    return unicodedata.normalize("NFC", text)


def extract_hashtags(text):
    """Hashtags in order of first appearance, lowercased, without '#'."""
    seen = {}
    for tag in HASHTAG_RE.findall(_normalize(text)):
        seen.setdefault(_normalize(tag.lower()), None)
    return tuple(seen)


def parse_timestamp(value):
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return datetime.fromtimestamp(int(value), tz=timezone.utc)
    if not isinstance(value, str):
        raise ValueError(f"bad timestamp {value!r}")
    s = value.strip()
    if s.isdigit():
        return datetime.fromtimestamp(int(s), tz=timezone.utc)
    try:
        ts = datetime.fromisoformat(s.replace("Z", "+00:00"))
    except ValueError:
        # classic API format: "Wed Oct 10 20:19:24 +0000 2018"
        ts = datetime.strptime(s, "%a %b %d %H:%M:%S %z %Y")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc).replace(microsecond=0)


def _parse_record(rec):
    if not isinstance(rec, dict):
        raise ValueError("record is not an object")
    for name in REQUIRED_FIELDS:
        value = rec.get(name)
        if value is None or (isinstance(value, str) and name != "text" and not value.strip()):
            raise ValueError(f"missing {name}")
    text = rec["text"]
    if not isinstance(text, str):
        raise ValueError("text is not a string")
    extracted = extract_hashtags(text)
    given = rec.get("hashtags")
    mismatch = False
    if given is None:
        tags = extracted
    else:
        if not isinstance(given, list):
            raise ValueError("hashtags is not a list")
        tags = tuple(dict.fromkeys(_normalize(str(t).lstrip("#").lower()) for t in given if str(t).strip("#")))
        mismatch = set(tags) != set(extracted)
    rt = rec.get("retweet_of_user_id")
    tweet = RawTweet(
        tweet_id=str(rec["tweet_id"]),
        user_id=str(rec["user_id"]),
        timestamp=parse_timestamp(rec["timestamp"]),
        text=text,
        source_client=str(rec["source_client"]).strip(),
        hashtags=tags,
        retweet_of_user_id=str(rt) if rt not in (None, "") else None,
        lang=str(rec.get("lang") or ""),
    )
    return tweet, mismatch


def parse_stream(lines, window=None):
    """Parse NDJSON lines into :class:`RawTweet` records.

    Malformed lines, duplicate ids and (when ``window=(start, end)`` dates are
    given) out-of-window timestamps are skipped and tallied in the returned
    :class:`ParseStats`; nothing in the content of a line is fatal.
    """
    stats = ParseStats()
    tweets = []
    seen = set()
    for line in lines:
        if isinstance(line, bytes):
            line = line.decode("utf-8", errors="replace")
        if not line.strip():
            continue
        stats.lines += 1
        try:
            tweet, mismatch = _parse_record(json.loads(line))
        except (ValueError, TypeError, KeyError, OverflowError):
            stats.malformed += 1
            continue
        if tweet.tweet_id in seen:
            stats.duplicates += 1
            continue
        if window is not None and not (window[0] <= tweet.day <= window[1]):
            stats.out_of_window += 1
            continue
        seen.add(tweet.tweet_id)
        stats.hashtag_mismatch += mismatch
        stats.parsed += 1
        tweets.append(tweet)
    if stats.hashtag_mismatch:
        log.warning("%d tweets carry a hashtags field that disagrees with their text", stats.hashtag_mismatch)
    return tweets, stats


def read_stream(path, window=None):
    """Parse an NDJSON file (``.gz`` allowed).  An unreadable file raises ``OSError``."""
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rt", encoding="utf-8", errors="replace") as fh:
        return parse_stream(fh, window=window)


def filter_bots(tweet, wl):
    """True when the tweet was posted from a whitelisted client."""
    return tweet.source_client in wl


def split_bots(tweets, wl):
    kept, bots = [], []
    for t in tweets:
        (kept if filter_bots(t, wl) else bots).append(t)
    return kept, bots


def tokenize(text):
    """Token rules applied by :func:`standardize`, minus stopword removal."""
    text = URL_RE.sub(f" {URL_TOKEN} ", _normalize(text))
    tokens = []
    for tok in TOKEN_RE.findall(text):
        if tok == URL_TOKEN:
            tokens.append(tok)
            continue
        tok = _normalize(tok.lower())
        if tok.startswith("@"):
            tok = tok[1:]
        if tok.strip("#_"):
            tokens.append(tok)
    return tokens


def standardize(tweet, stopwords):
    tokens = tuple(t for t in tokenize(tweet.text) if t not in stopwords)
    return CleanTweet(
        tweet_id=tweet.tweet_id,
        user_id=tweet.user_id,
        day=tweet.day,
        tokens=tokens,
        hashtags=tuple(tweet.hashtags),
        retweet_of_user_id=tweet.retweet_of_user_id,
    )


@dataclass
class DailyStats:
    """Per-day tweet/user/bot tallies.  ``merge`` is associative."""

    tweets: dict = field(default_factory=lambda: defaultdict(int))
    users: dict = field(default_factory=lambda: defaultdict(set))
    bot_tweets: dict = field(default_factory=lambda: defaultdict(int))
    bots: dict = field(default_factory=lambda: defaultdict(set))

    def merge(self, other):
        out = DailyStats()
        for src in (self, other):
            for d, n in src.tweets.items():
                out.tweets[d] += n
            for d, s in src.users.items():
                out.users[d] |= s
            for d, n in src.bot_tweets.items():
                out.bot_tweets[d] += n
            for d, s in src.bots.items():
                out.bots[d] |= s
        return out

    def days(self):
        return sorted(set(self.tweets) | set(self.bot_tweets))

    def rows(self, days=None):
        days = self.days() if days is None else days
        return [
            (
                d.isoformat(),
                self.tweets.get(d, 0),
                len(self.users.get(d, ())),
                self.bot_tweets.get(d, 0),
                len(self.bots.get(d, ())),
            )
            for d in days
        ]

    def totals(self):
        all_users = set().union(*self.users.values()) if self.users else set()
        all_bots = set().union(*self.bots.values()) if self.bots else set()
        return {
            "tweets": sum(self.tweets.values()),
            "users": len(all_users),
            "bot_tweets": sum(self.bot_tweets.values()),
            "bots": len(all_bots),
        }

    def to_csv(self, days=None):
        return csv_text(("date", "tweets", "users", "bot_tweets", "bots"), self.rows(days))


def _day_of(t):
    return t.day


def corpus_stats(tweets, bot_tweets=()):
    stats = DailyStats()
    for t in tweets:
        d = _day_of(t)
        stats.tweets[d] += 1
        stats.users[d].add(t.user_id)
    for t in bot_tweets:
        d = _day_of(t)
        stats.bot_tweets[d] += 1
        stats.bots[d].add(t.user_id)
    return stats


def retweet_edges(tweets):
    """(user, retweeted_user) pairs in input order."""
    return [(t.user_id, t.retweet_of_user_id) for t in tweets if t.retweet_of_user_id]
