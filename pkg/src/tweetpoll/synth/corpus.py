"""Synthetic tweet corpora with a planted electorate.

Each genuine user gets a planted camp (F, M or T) and a loyalty type; their
tweets draw tokens from the camp vocabulary, carry seed hashtags at a
per-camp rate and retweet same-camp users with probability ``homophily_q``.
Bots post from non-whitelisted clients.  The ground truth is returned as a
sidecar so the pipeline's estimates can be scored.
"""
import json
from dataclasses import asdict, dataclass, field, fields
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np

from tweetpoll.errors import ConfigurationError
from tweetpoll.ingest import DEFAULT_WHITELIST
from tweetpoll.io import csv_text, fmt

CAMPS = ("F", "M", "T")
LOYALTY_TYPES = ("ultra_loyal", "loyal", "switcher", "low_activity")

SEED_HASHTAGS = {
    "F": (
        "albertopresidente", "cfk", "sevan", "frentedetodos",
        "albertoycristina", "habraconsecuencias", "fuerzacristina", "hayotrocamino",
    ),
    "M": (
        "sisepuede", "macri", "juntosporelcambio", "yovotomm",
        "cambiemos", "ladamosvuelta", "novuelvenmas", "mm2019",
    ),
    "T": ("lavagna2019", "consensofederal", "espert2019", "despiertaargentina"),
}
NEUTRAL_HASHTAGS = ("argentina", "elecciones2019", "debate2019", "paso2019")
CAMP_WORD_PREFIX = {"F": "fer", "M": "mac", "T": "lav"}
SHARED_WORD_PREFIX = "com"
DEFAULT_BOT_CLIENTS = ("AutoPosterPro 2.1", "dlvr.it", "TweetFarm")


@dataclass
class ElectorateSpec:
    n_users: int = 10_000
    shares: tuple = (0.5, 0.4, 0.1)  # F, M, T among genuine users
    frac_ultra_loyal: float = 0.6
    frac_switchers: float = 0.03
    frac_low_activity: float = 0.02
    switch_window: tuple = (0.5, 0.9)  # switch day as fraction of the period
    switch_from: str | None = None  # force switchers' initial camp
    dissent_rate: float = 0.15  # loyal users' share of off-camp tweets
    tweet_rate: float = 0.3  # mean tweets per user per day
    rate_dispersion: float = 2.0  # gamma shape of per-user rates
    low_activity_rate: float = 0.02
    hashtag_prob: dict = field(default_factory=lambda: {"F": 0.15, "M": 0.15, "T": 0.5})
    neutral_hashtag_prob: float = 0.08
    url_prob: float = 0.1
    tokens_per_tweet: float = 8.0
    vocab_size: int = 300  # camp-specific words per camp
    overlap: float = 0.3  # fraction of a camp vocabulary shared by all camps
    retweet_prob: float = 0.3
    homophily_q: float = 0.9
    bot_fraction: float = 0.1
    bot_rate: float = 1.0
    bot_clients: tuple = DEFAULT_BOT_CLIENTS
    start: date = date(2019, 3, 1)
    n_days: int = 60
    seed: int = 0

    def __post_init__(self):
        self.shares = tuple(float(s) for s in self.shares)
        self.switch_window = tuple(self.switch_window)
        self.bot_clients = tuple(self.bot_clients)
        if isinstance(self.start, str):
            self.start = date.fromisoformat(self.start)

    @property
    def end(self):
        return self.start + timedelta(days=self.n_days - 1)

    def validate(self):
        if len(self.shares) != 3 or abs(sum(self.shares) - 1.0) > 1e-9 or min(self.shares) < 0:
            raise ConfigurationError("shares must be three non-negative fractions summing to 1")
        for name in ("frac_ultra_loyal", "frac_switchers", "frac_low_activity", "dissent_rate",
                     "overlap", "retweet_prob", "homophily_q", "bot_fraction",
                     "neutral_hashtag_prob", "url_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name}={v} outside [0, 1]")
        if self.frac_ultra_loyal + self.frac_switchers + self.frac_low_activity > 1.0 + 1e-12:
            raise ConfigurationError("loyalty fractions exceed 1")
        if self.overlap >= 1.0:
            raise ConfigurationError("overlap must be below 1")
        n_genuine = self.n_users - round(self.bot_fraction * self.n_users)
        if n_genuine <= 0:
            raise ConfigurationError("spec leaves no genuine users to carry the planted shares")
        if self.n_days < 1 or self.tweet_rate < 0 or self.tokens_per_tweet < 1:
            raise ConfigurationError("n_days, tweet_rate and tokens_per_tweet must be positive")
        if self.switch_from is not None and self.switch_from not in CAMPS:
            raise ConfigurationError(f"switch_from must be one of {CAMPS}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["start"] = self.start.isoformat()
        d["shares"] = list(self.shares)
        d["switch_window"] = list(self.switch_window)
        d["bot_clients"] = list(self.bot_clients)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown synth spec keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class TruthRow:
    user_id: str
    camp: str
    loyalty: str


@dataclass
class SynthCorpus:
    spec: ElectorateSpec
    lines: list  # NDJSON records, chronological
    truth: list  # TruthRow per user (bots included, loyalty="bot")
    seeds: dict  # hashtag -> camp

    def planted_shares(self):
        """Realised (F, M, T) fractions over genuine users."""
        camps = [t.camp for t in self.truth if t.loyalty != "bot"]
        n = len(camps)
        return tuple(camps.count(c) / n for c in CAMPS)

    def official_percent(self):
        f, m, t = self.planted_shares()
        return {"FF": 100.0 * f, "MP": 100.0 * m, "TP": 100.0 * t}

    def truth_csv(self):
        return csv_text(("user_id", "camp", "loyalty"), [(t.user_id, t.camp, t.loyalty) for t in self.truth])

    def ndjson(self):
        return "".join(line + "\n" for line in self.lines)

    def official_csv(self):
        o = self.official_percent()
        return csv_text(("camp", "share_percent"), [(c, fmt(o[c], 12)) for c in ("FF", "MP", "TP")])


def allocate_exact(n, shares):
    """Largest-remainder split of ``n`` items by ``shares`` (rescaled to sum 1)."""
    raw = np.asarray(shares, dtype=np.float64) * n / np.sum(shares)
    base = np.floor(raw).astype(np.int64)
    short = n - int(base.sum())
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return base


def _vocabularies(spec):
    n_shared = int(round(spec.overlap / (1.0 - spec.overlap) * spec.vocab_size))
    shared = [f"{SHARED_WORD_PREFIX}{i:03d}" for i in range(n_shared)]
    own = {c: [f"{CAMP_WORD_PREFIX[c]}{i:03d}" for i in range(spec.vocab_size)] for c in CAMPS}
    return own, shared


def _zipf_weights(n, s=1.0):
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


class _TextMaker:
    """Vectorised tweet text for one user's batch of tweets."""

    def __init__(self, spec):
        self.spec = spec
        own, self.shared = _vocabularies(spec)
        # one combined word table: camp words first, then the shared pool
        self.words = {c: np.array(own[c] + self.shared, dtype=object) for c in CAMPS}
        self.own_cdf = np.cumsum(_zipf_weights(spec.vocab_size))
        self.tag_cdf = {c: np.cumsum(_zipf_weights(len(SEED_HASHTAGS[c]))) for c in CAMPS}
        self.shared_frac = len(self.shared) / (len(self.shared) + spec.vocab_size)

    def texts(self, rng, tweet_camps):
        spec = self.spec
        n = len(tweet_camps)
        n_tok = 1 + rng.poisson(spec.tokens_per_tweet - 1.0, size=n)
        total = int(n_tok.sum())
        shared = rng.random(total) < self.shared_frac
        own_idx = np.minimum(np.searchsorted(self.own_cdf, rng.random(total), side="right"), spec.vocab_size - 1)
        idx = np.where(shared, spec.vocab_size + rng.integers(max(len(self.shared), 1), size=total), own_idx)
        u_tag, u_two, u_neutral, u_url = rng.random((4, n))
        neutral = rng.integers(len(NEUTRAL_HASHTAGS), size=n)
        url = rng.integers(16**6, size=n)
        out = []
        ends = np.cumsum(n_tok)
        for i, camp in enumerate(tweet_camps):
            words = list(self.words[camp][idx[ends[i] - n_tok[i]:ends[i]]])
            if u_tag[i] < spec.hashtag_prob.get(camp, 0.0):
                tags = SEED_HASHTAGS[camp]
                first = int(min(np.searchsorted(self.tag_cdf[camp], rng.random(), side="right"), len(tags) - 1))
                words.append("#" + tags[first])
                if u_two[i] < 0.3 and len(tags) > 1:
                    second = (first + 1 + int(rng.integers(len(tags) - 1))) % len(tags)
                    words.append("#" + tags[second])
            if u_neutral[i] < spec.neutral_hashtag_prob:
                words.append("#" + NEUTRAL_HASHTAGS[neutral[i]])
            if u_url[i] < spec.url_prob:
                words.append(f"https://t.co/{url[i]:06x}")
            out.append(" ".join(words))
        return out


def _assign(rng, n, labels, fractions):
    counts = allocate_exact(n, fractions)
    out = np.repeat(np.arange(len(labels)), counts)
    rng.shuffle(out)
    return [labels[i] for i in out]


def generate_corpus(spec):
    """Generate a corpus and its ground truth; identical spec gives identical bytes."""
    spec.validate()
    master = np.random.default_rng(spec.seed)
    n_bots = int(round(spec.bot_fraction * spec.n_users))
    n_gen = spec.n_users - n_bots
    width = len(str(spec.n_users - 1))
    user_ids = [f"u{i:0{width}d}" for i in range(spec.n_users)]
    is_bot = np.zeros(spec.n_users, dtype=bool)
    is_bot[master.permutation(spec.n_users)[:n_bots]] = True

    camps = np.array([""] * spec.n_users, dtype=object)
    camps[~is_bot] = _assign(master, n_gen, CAMPS, spec.shares)
    camps[is_bot] = _assign(master, n_bots, CAMPS, spec.shares) if n_bots else []
    rest = 1.0 - spec.frac_ultra_loyal - spec.frac_switchers - spec.frac_low_activity
    loyalty = np.array(["bot"] * spec.n_users, dtype=object)
    loyalty[~is_bot] = _assign(
        master, n_gen, ("ultra_loyal", "switcher", "low_activity", "loyal"),
        (spec.frac_ultra_loyal, spec.frac_switchers, spec.frac_low_activity, max(rest, 0.0)),
    )
    if spec.switch_from is not None:
        # switchers must end somewhere other than where they start
        loyalty[(loyalty == "switcher") & (camps == spec.switch_from)] = "loyal"

    genuine = np.flatnonzero(~is_bot)
    members = {c: genuine[camps[genuine] == c] for c in CAMPS}
    text_maker = _TextMaker(spec)
    whitelist = sorted(DEFAULT_WHITELIST)
    children = np.random.SeedSequence(spec.seed).spawn(spec.n_users)
    t_start = datetime.combine(spec.start, time(0), tzinfo=timezone.utc)

    records = []
    for u in range(spec.n_users):
        rng = np.random.default_rng(children[u])
        camp = camps[u]
        kind = loyalty[u]
        if kind == "bot":
            rate = spec.bot_rate
            client = spec.bot_clients[rng.integers(len(spec.bot_clients))]
        else:
            client = whitelist[rng.integers(len(whitelist))]
            if kind == "low_activity":
                rate = spec.low_activity_rate
            else:
                shape = spec.rate_dispersion
                rate = rng.gamma(shape, spec.tweet_rate / shape)
        initial = camp
        switch_day = 0
        if kind == "switcher":
            others = [c for c in ("F", "M") if c != camp] or ["F"]
            initial = spec.switch_from or others[rng.integers(len(others))]
            lo = int(spec.switch_window[0] * spec.n_days)
            hi = max(int(spec.switch_window[1] * spec.n_days), lo + 1)
            switch_day = int(rng.integers(lo, hi))
        per_day = rng.poisson(rate, size=spec.n_days)
        days = np.repeat(np.arange(spec.n_days), per_day)
        n = days.size
        if n == 0:
            continue
        tweet_camps = np.where(days >= switch_day, camp, initial).astype(object)
        if kind == "loyal":
            dissent = rng.random(n) < spec.dissent_rate
            options = [c for c in CAMPS if c != camp]
            picks = rng.integers(len(options), size=n)
            tweet_camps[dissent] = [options[j] for j in picks[dissent]]
        texts = text_maker.texts(rng, tweet_camps)
        do_rt, same, pick = rng.random(n) < spec.retweet_prob, rng.random(n) < spec.homophily_q, rng.random(n)
        seconds = rng.integers(86_400, size=n)
        for i in range(n):
            rt = None
            if do_rt[i]:
                pool = members[tweet_camps[i]] if same[i] else genuine
                if pool.size:
                    v = int(pool[int(pick[i] * pool.size)])
                    if v != u:
                        rt = user_ids[v]
            ts = t_start + timedelta(days=int(days[i]), seconds=int(seconds[i]))
            records.append((ts, u, len(records), client, texts[i], rt))

    records.sort(key=lambda r: (r[0], r[1], r[2]))
    lines = []
    id_width = len(str(max(len(records) - 1, 0)))
    for i, (ts, u, _, client, text, rt) in enumerate(records):
        rec = {
            "tweet_id": f"t{i:0{id_width}d}",
            "user_id": user_ids[u],
            "timestamp": ts.strftime("%Y-%m-%dT%H:%M:%SZ"),
            "text": text,
            "source_client": client,
            "lang": "es",
        }
        if rt is not None:
            rec["retweet_of_user_id"] = rt
        lines.append(json.dumps(rec, ensure_ascii=False))
    truth = [TruthRow(user_ids[u], camps[u], loyalty[u]) for u in range(spec.n_users)]
    seeds = {h: c for c in CAMPS for h in SEED_HASHTAGS[c]}
    return SynthCorpus(spec, lines, truth, seeds)


def write_corpus(corpus, out_dir):
    """Write corpus.ndjson, truth.csv, seeds.csv, official.csv and spec.json."""
    from tweetpoll.hashnet import seed_labels_csv
    from tweetpoll.io import atomic_write_text, json_text

    out = Path(out_dir)
    atomic_write_text(out / "corpus.ndjson", corpus.ndjson())
    atomic_write_text(out / "truth.csv", corpus.truth_csv())
    atomic_write_text(out / "seeds.csv", seed_labels_csv(corpus.seeds))
    atomic_write_text(out / "official.csv", corpus.official_csv())
    atomic_write_text(out / "spec.json", json_text(corpus.spec.to_dict()))
    return out
