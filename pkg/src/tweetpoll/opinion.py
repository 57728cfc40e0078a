"""Per-user opinion ledgers, loyalty classes, homophily inference, predictions.

Opinions are stored as small integer codes so whole electorates can be
evaluated with array operations:

    0 FF, 1 MP, 2 TP, 3 Undecided, 4 Unclassified, -1 not yet seen.
"""
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, timedelta
from enum import IntEnum

import numpy as np

from tweetpoll import kernels
from tweetpoll.errors import DataError, DomainError
from tweetpoll.io import csv_text, fmt, read_csv_rows


class UserOpinion(IntEnum):
    ABSENT = -1
    FF = 0
    MP = 1
    TP = 2
    UNDECIDED = 3
    UNCLASSIFIED = 4

    @property
    def label(self):
        return _LABELS[self]


_LABELS = {
    UserOpinion.ABSENT: "Absent",
    UserOpinion.FF: "FF",
    UserOpinion.MP: "MP",
    UserOpinion.TP: "TP",
    UserOpinion.UNDECIDED: "Undecided",
    UserOpinion.UNCLASSIFIED: "Unclassified",
}

FF, MP, TP, UND, UNC, ABSENT = 0, 1, 2, 3, 4, -1
STANCE_CODE = {"FF": FF, "MP": MP, "TP": TP}
MODELS = (0, 1, 2, 3)
ELECTIONS = {"PASO": date(2019, 8, 11), "general": date(2019, 10, 27)}


def _stance_value(s):
    return getattr(s, "value", s)


@dataclass
class UserOpinionLedger:
    """One user's view of the ledger (daily counts and classified history)."""

    user_id: str
    daily: dict  # day -> (n_F, n_M, n_T)
    history: list  # [(day, camp_code)] chronological, classified tweets only
    first_seen: date

    @property
    def n_classified(self):
        return len(self.history)


@dataclass
class LedgerSet:
    users: list
    start: date
    n_days: int
    cum: np.ndarray  # (n_users, n_days + 1, 3) prefix sums over days
    first_seen: np.ndarray  # day index of first tweet (classified or not)
    ev_indptr: np.ndarray  # per-user slices into the event arrays
    ev_day: np.ndarray
    ev_camp: np.ndarray
    ev_cum: np.ndarray  # (n_events + 1, 3) prefix sums over events
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.index = {u: i for i, u in enumerate(self.users)}

    @property
    def n_users(self):
        return len(self.users)

    @property
    def end(self):
        return self.start + timedelta(days=self.n_days - 1)

    def day_index(self, d):
        i = (d - self.start).days
        if not 0 <= i < self.n_days:
            raise DomainError(f"{d} lies outside the collection window {self.start}..{self.end}")
        return i

    def daily_counts(self):
        return np.diff(self.cum, axis=1)

    def ledger(self, user_id):
        u = self.index[user_id]
        daily = {}
        counts = np.diff(self.cum[u], axis=0)
        for t in np.flatnonzero(counts.sum(axis=1)):
            daily[self.start + timedelta(days=int(t))] = tuple(int(c) for c in counts[t])
        lo, hi = self.ev_indptr[u], self.ev_indptr[u + 1]
        history = [(self.start + timedelta(days=int(d)), int(c)) for d, c in zip(self.ev_day[lo:hi], self.ev_camp[lo:hi])]
        return UserOpinionLedger(user_id, daily, history, self.start + timedelta(days=int(self.first_seen[u])))


def accumulate(classified, start, end, users=None):
    """Build ledgers from classified tweets (objects with user_id, day, stance).

    Unclassified tweets only register the user's presence.  Tweets must be
    supplied in chronological order for the last-k logic to see the right
    history; ties within a day keep input order.
    """
    n_days = (end - start).days + 1
    if n_days < 1:
        raise DomainError("collection window is empty")
    rows = []
    seen = {}
    for pos, r in enumerate(classified):
        t = (r.day - start).days
        if not 0 <= t < n_days:
            raise DomainError(f"tweet {getattr(r, 'tweet_id', pos)} on {r.day} outside {start}..{end}")
        code = STANCE_CODE.get(_stance_value(r.stance), -1)
        rows.append((r.user_id, t, code, pos))
        seen[r.user_id] = min(seen.get(r.user_id, t), t)
    names = sorted(set(seen) | set(users or ()))
    index = {u: i for i, u in enumerate(names)}
    n = len(names)

    first_seen = np.full(n, n_days, dtype=np.int64)
    for u, t in seen.items():
        first_seen[index[u]] = t
    ev = sorted((index[u], t, pos, code) for u, t, code, pos in rows if code >= 0)
    ev_user = np.array([e[0] for e in ev], dtype=np.int64)
    ev_day = np.array([e[1] for e in ev], dtype=np.int64)
    ev_camp = np.array([e[3] for e in ev], dtype=np.int64)
    ev_indptr = np.searchsorted(ev_user, np.arange(n + 1)).astype(np.int64)

    daily = np.zeros((n, n_days, 3), dtype=np.int64)
    np.add.at(daily, (ev_user, ev_day, ev_camp), 1)
    cum = np.zeros((n, n_days + 1, 3), dtype=np.int64)
    np.cumsum(daily, axis=1, out=cum[:, 1:])
    onehot = np.zeros((ev_camp.size, 3), dtype=np.int64)
    onehot[np.arange(ev_camp.size), ev_camp] = 1
    ev_cum = np.zeros((ev_camp.size + 1, 3), dtype=np.int64)
    np.cumsum(onehot, axis=0, out=ev_cum[1:])
    return LedgerSet(names, start, n_days, cum, first_seen, ev_indptr, ev_day, ev_camp, ev_cum)


def plurality(counts):
    """Strict plurality camp per row; ties at the top give Undecided, zeros Unclassified."""
    counts = np.asarray(counts)
    top = counts.max(axis=1)
    n_top = (counts == top[:, None]).sum(axis=1)
    codes = counts.argmax(axis=1).astype(np.int64)
    codes[n_top > 1] = UND
    codes[top == 0] = UNC
    return codes


def strict_majority(counts):
    """Camp whose count exceeds the other two combined, else Undecided (Unclassified if empty)."""
    counts = np.asarray(counts)
    total = counts.sum(axis=1)
    winner = (2 * counts > total[:, None]).argmax(axis=1)
    has = (2 * counts > total[:, None]).any(axis=1)
    codes = np.where(has, winner, UND).astype(np.int64)
    codes[total == 0] = UNC
    return codes


def window_counts(ls, d, w):
    if w < 1:
        raise DomainError("window must span at least one day")
    hi = ls.day_index(d) + 1
    lo = max(0, hi - w)
    return ls.cum[:, hi] - ls.cum[:, lo]


def _mask_absent(ls, codes, d):
    codes[ls.first_seen > ls.day_index(d)] = ABSENT
    return codes


def window_opinion(ls, d, w):
    """Opinion codes over days ``d-w+1 .. d`` for every user."""
    return _mask_absent(ls, plurality(window_counts(ls, d, w)), d)


def _t0_index(ls, d, t0):
    if t0 > d:
        raise DomainError("T0 must not be after the evaluation day")
    ls.day_index(d)
    return max(0, (t0 - ls.start).days)


def cumulative_opinion(ls, d, t0):
    """Opinion codes over all classified tweets from ``t0`` to ``d``."""
    w = ls.day_index(d) - _t0_index(ls, d, t0) + 1
    return window_opinion(ls, d, w)


@dataclass
class LoyaltyClasses:
    base: np.ndarray
    recent: np.ndarray
    ultra_loyal: np.ndarray

    def labels(self):
        """Loyalty class name per user ('' for users not yet seen)."""
        names = np.empty(self.base.size, dtype=object)
        for i, (b, r, ul) in enumerate(zip(self.base, self.recent, self.ultra_loyal)):
            if b == ABSENT:
                names[i] = ""
            elif ul:
                names[i] = f"Ultra loyal {_LABELS[UserOpinion(b)]}"
            elif b == UNC:
                names[i] = "Unclassified"
            else:
                names[i] = f"{_LABELS[UserOpinion(b)]}->{_LABELS[UserOpinion(r)]}"
        return names

    def class_counts(self):
        names, counts = np.unique([n for n in self.labels() if n], return_counts=True)
        return dict(zip(names.tolist(), counts.tolist()))


def loyalty_classes(ls, d, t0, k=10):
    """Base (cumulative) opinion, last-k camp and ultra-loyal flag for every user.

    The last-k window runs over the user's classified tweets between ``t0``
    and ``d``; users with fewer than ``k`` use all of them.
    """
    if k < 1:
        raise DomainError("k must be >= 1")
    base = cumulative_opinion(ls, d, t0)
    lo_day = _t0_index(ls, d, t0)
    hi_day = ls.day_index(d)
    n = ls.n_users
    stride = ls.n_days + 1
    key = np.repeat(np.arange(n, dtype=np.int64), np.diff(ls.ev_indptr)) * stride + ls.ev_day
    users = np.arange(n, dtype=np.int64) * stride
    a = np.searchsorted(key, users + lo_day, side="left")
    b = np.searchsorted(key, users + hi_day, side="right")
    total = ls.ev_cum[b] - ls.ev_cum[a]
    recent = strict_majority(ls.ev_cum[b] - ls.ev_cum[np.maximum(a, b - k)])
    ultra = ((total > 0).sum(axis=1) == 1) & (base != ABSENT)
    recent[base == ABSENT] = ABSENT
    return LoyaltyClasses(base, recent, ultra)


def loyalty_class(ls, user_id, d, t0, k=10):
    """Scalar view: (base, recent, ultra_loyal) for one user."""
    lc = loyalty_classes(ls, d, t0, k)
    u = ls.index[user_id]
    return UserOpinion(lc.base[u]), UserOpinion(lc.recent[u]), bool(lc.ultra_loyal[u])


@dataclass
class RetweetGraph:
    """Undirected simple graph over user ids in CSR form."""

    users: list
    indptr: np.ndarray
    indices: np.ndarray
    index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.index = {u: i for i, u in enumerate(self.users)}

    @classmethod
    def from_edges(cls, pairs, exclude=(), nodes=()):
        exclude = set(exclude)
        adj = defaultdict(set)
        for u in nodes:
            if u not in exclude:
                adj[u]
        for a, b in pairs:
            if a == b or a in exclude or b in exclude or a is None or b is None:
                continue
            adj[a].add(b)
            adj[b].add(a)
        users = sorted(adj)
        index = {u: i for i, u in enumerate(users)}
        degree = np.array([len(adj[u]) for u in users], dtype=np.int64)
        indptr = np.concatenate(([0], np.cumsum(degree))).astype(np.int64)
        indices = np.array([index[v] for u in users for v in sorted(adj[u], key=index.get)], dtype=np.int64)
        return cls(users, indptr, indices)

    @property
    def n_edges(self):
        return int(self.indices.size // 2)

    def neighbors(self, user):
        i = self.index.get(user)
        if i is None:
            return []
        return [self.users[j] for j in self.indices[self.indptr[i]:self.indptr[i + 1]]]

    def edge_set(self):
        return {
            frozenset((self.users[i], self.users[j]))
            for i in range(len(self.users))
            for j in self.indices[self.indptr[i]:self.indptr[i + 1]]
        }

    def edges_csv(self):
        rows = sorted(tuple(sorted(e)) for e in self.edge_set())
        return csv_text(("user_a", "user_b"), rows)


def build_retweet_graph(tweets, exclude=(), nodes=()):
    """Retweet graph from tweets carrying ``retweet_of_user_id``; ``exclude`` drops bots."""
    return RetweetGraph.from_edges(
        ((t.user_id, t.retweet_of_user_id) for t in tweets if t.retweet_of_user_id), exclude, nodes
    )


def homophily_votes(graph, labels, targets):
    """Plurality of decided neighbour labels (0/1/2) for each target node."""
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        return np.empty(0, dtype=np.int64)
    votes = kernels.neighbor_votes(graph.indptr, graph.indices, np.asarray(labels, dtype=np.int64), targets)
    codes = plurality(votes)
    codes[codes == UNC] = UND
    return codes


def homophily_label(user, graph, decided_labels):
    """Plurality camp among a user's decided neighbours, Undecided on ties/none.

    ``decided_labels`` maps user id to FF/MP/TP; other users are ignored.
    """
    i = graph.index.get(user)
    if i is None:
        return UserOpinion.UNDECIDED
    labels = np.full(len(graph.users), ABSENT, dtype=np.int64)
    for u, op in decided_labels.items():
        j = graph.index.get(u)
        if j is not None and int(op) in (FF, MP, TP):
            labels[j] = int(op)
    return UserOpinion(int(homophily_votes(graph, labels, [i])[0]))


@dataclass
class PredictionShares:
    day: date
    model_id: int
    ff: float
    mp: float
    third: float
    undecided: float | None = None
    counts: dict = field(default_factory=dict)

    def percent(self):
        return (100.0 * self.ff, 100.0 * self.mp, 100.0 * self.third)

    def to_dict(self):
        return {
            "day": self.day.isoformat(),
            "model": self.model_id,
            "ff": self.ff,
            "mp": self.mp,
            "third": self.third,
            "undecided": self.undecided,
            "counts": self.counts,
        }


def _graph_labels(graph, ls, camp):
    """Ledger-aligned camp codes mapped onto graph nodes (non-camps -> -1)."""
    labels = np.full(len(graph.users), ABSENT, dtype=np.int64)
    for u, i in graph.index.items():
        j = ls.index.get(u)
        if j is not None and camp[j] in (FF, MP, TP):
            labels[i] = camp[j]
    return labels


def _reassign(graph, ls, camp, who, iterate=False, max_passes=50):
    """Homophily pass over ledger users flagged in ``who``; returns new camp codes."""
    camp = camp.copy()
    pending = np.flatnonzero(who)
    for _ in range(max_passes if iterate else 1):
        labels = _graph_labels(graph, ls, camp)
        node = np.array([graph.index.get(ls.users[u], -1) for u in pending], dtype=np.int64)
        inside = node >= 0
        codes = np.full(pending.size, UND, dtype=np.int64)
        codes[inside] = homophily_votes(graph, labels, node[inside])
        changed = codes != camp[pending]
        camp[pending] = codes
        if not changed.any():
            break
    return camp


def model_assignment(model_id, ls, day, t0, k=10, graph=None, iterate=False):
    """Final per-user bucket codes for a model plus the loyalty classes used.

    Models 1-3 return FF/MP/TP/Undecided/Unclassified codes where everything
    outside FF and MP is counted as third party.
    """
    if model_id not in MODELS:
        raise DomainError(f"unknown model {model_id!r}; expected one of {MODELS}")
    lc = loyalty_classes(ls, day, t0, k)
    base = lc.base
    if model_id < 2:
        return base.copy(), lc
    if graph is None:
        raise DomainError(f"model {model_id} needs a retweet graph")
    who = base == UND
    if model_id == 3:
        who |= base == UNC
    # pending users start undecided so they never vote in the first pass
    camp = np.where(who, UND, base)
    return _reassign(graph, ls, camp, who, iterate), lc


def predict(model_id, day, ls, graph=None, t0=None, k=10, iterate=False):
    t0 = ls.start if t0 is None else t0
    camp, lc = model_assignment(model_id, ls, day, t0, k, graph, iterate)
    present = camp != ABSENT
    c = np.bincount(camp[present], minlength=5)
    counts = {
        "FF": int(c[FF]),
        "MP": int(c[MP]),
        "TP": int(c[TP]),
        "Undecided": int(c[UND]),
        "Unclassified": int(c[UNC]),
        "users": int(present.sum()),
    }
    if model_id == 0:
        denom = c[FF] + c[MP] + c[TP]
        if denom == 0:
            raise DataError(f"no decided users on {day}")
        undecided = c[UND] / (denom + c[UND])
        return PredictionShares(day, 0, c[FF] / denom, c[MP] / denom, c[TP] / denom, float(undecided), counts)
    total = int(present.sum())
    if total == 0:
        raise DataError(f"no users on {day}")
    third = total - c[FF] - c[MP]
    return PredictionShares(day, model_id, c[FF] / total, c[MP] / total, third / total, None, counts)


def mae(pred, official):
    """Mean absolute error over (FF, MP, TP) shares, both in percent."""
    if isinstance(pred, PredictionShares):
        pred = pred.percent()
    if isinstance(official, dict):
        official = (official["FF"], official["MP"], official["TP"])
    x = np.asarray(pred, dtype=np.float64)
    y = np.asarray(official, dtype=np.float64)
    if x.shape != (3,) or y.shape != (3,):
        raise DomainError("mae needs two (FF, MP, TP) triples")
    return float(np.abs(x - y).sum() / 3.0)


def load_official(path):
    out = {}
    for row in read_csv_rows(path):
        camp = row["camp"].strip().upper()
        camp = {"F": "FF", "M": "MP", "T": "TP", "THIRD": "TP"}.get(camp, camp)
        out[camp] = float(row["share_percent"])
    missing = {"FF", "MP", "TP"} - set(out)
    if missing:
        raise DataError(f"official results lack {sorted(missing)}")
    return out


def official_csv(official):
    return csv_text(("camp", "share_percent"), [(c, fmt(official[c])) for c in ("FF", "MP", "TP")])


@dataclass
class Sensitivity:
    t0s: list
    shares: np.ndarray  # (n_t0, 3) in percent
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self):
        return {
            "t0": [t.isoformat() for t in self.t0s],
            "shares_percent": self.shares.tolist(),
            "mean_percent": self.mean.tolist(),
            "std_percent": self.std.tolist(),
        }


def t0_sensitivity(model_id, day, t0s, ls, graph=None, k=10, iterate=False):
    """Spread of a model's prediction over alternative measurement origins.

    Reports per-camp mean and population standard deviation in percent.
    """
    t0s = sorted(t0s)
    if len(t0s) < 2:
        raise DomainError("need at least two T0 values")
    if any(t >= day for t in t0s):
        raise DomainError("every T0 must precede the prediction day")
    shares = np.array([predict(model_id, day, ls, graph, t, k, iterate).percent() for t in t0s])
    return Sensitivity(t0s, shares, shares.mean(axis=0), shares.std(axis=0))


SERIES_HEADER = ("date", "model", "ff", "mp", "third", "undecided", "n_users")


def emit_series(model_id, days, ls, graph=None, t0=None, k=10, w=None, iterate=False, elections=None, official=None):
    """Daily prediction rows, followed by one marker row per election date.

    With ``w`` set each day uses only the last ``w`` days (instantaneous
    estimator); otherwise opinions accumulate from ``t0``.
    """
    t0 = ls.start if t0 is None else t0
    rows = []
    for d in days:
        origin = d - timedelta(days=w - 1) if w else t0
        origin = max(origin, ls.start)
        try:
            s = predict(model_id, d, ls, graph, origin, k, iterate)
        except DataError:
            rows.append((d.isoformat(), str(model_id), "", "", "", "", 0))
            continue
        rows.append(
            (
                d.isoformat(),
                str(model_id),
                fmt(s.ff),
                fmt(s.mp),
                fmt(s.third),
                "" if s.undecided is None else fmt(s.undecided),
                s.counts["users"],
            )
        )
    for name, d in sorted((elections or ELECTIONS).items(), key=lambda kv: kv[1]):
        vals = ("", "", "")
        if official and name in official:
            o = official[name]
            vals = tuple(fmt(o[c] / 100.0) for c in ("FF", "MP", "TP"))
        rows.append((d.isoformat(), f"election:{name}", *vals, "", ""))
    return rows


def series_csv(rows):
    return csv_text(SERIES_HEADER, rows)


def day_range(first, last):
    return [first + timedelta(days=i) for i in range((last - first).days + 1)]
