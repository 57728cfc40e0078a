"""Synthetic pre/post election panels built to hit published table rates.

Counts are chosen so that every weighted percentage, rounded half-up to a
whole percent, equals its target.  For a cell with target ``t`` and
denominator ``n`` the count ``c`` must satisfy ``(2t - 1) n <= 200 c <
(2t + 1) n``; rows are filled inside those intervals by largest remainder.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tweetpoll.errors import DataError, InfeasibleTargetError
from tweetpoll.survey import (
    AGE_GROUPS,
    CANDIDATES,
    EDUCATION,
    GENDERS,
    IMAGE_COLUMNS,
    IMAGES,
    PANEL_COLUMNS,
    UNKNOWN,
)
from tweetpoll.synth.corpus import allocate_exact

log = logging.getLogger(__name__)

SECONDARY = ("Lavagna", "Del Cano", "Espert", "Gomez Centurion", "Blank/Null")

# pre-choice -> (AF-CFK, MM-MP, Other, Yes, No); Yes/No is None where undefined
TRANSITION_TARGETS = {
    "AF-CFK": (91, 2, 8, 91, 9),
    "MM-MP": (6, 83, 11, 83, 17),
    "Lavagna": (19, 9, 72, 56, 44),
    "Del Cano": (25, 0, 75, 54, 46),
    "Espert": (19, 14, 67, 53, 47),
    "Gomez Centurion": (10, 8, 83, 69, 31),
    "Blank/Null": (23, 4, 73, 47, 53),
    UNKNOWN: (53, 11, 36, None, None),
}
DISCLOSURE_TOTAL = 82
# axis -> category -> revealed percent
DISCLOSURE_TARGETS = {
    "gender": {"M": 83, "F": 81},
    "age_group": {"16-30": 67, "31-50": 87, "51-65": 90, "65+": 89},
    "education": {"full secondary": 81, "incomplete secondary": 81, "university": 86},
}
# (candidate, group) -> (Positive, Negative, Regular, NS/NC)
IMAGE_TARGETS = {
    ("CFK", "Revealed"): (45, 43, 6, 5),
    ("MM", "Revealed"): (36, 50, 10, 4),
    ("AF", "Revealed"): (45, 39, 7, 8),
    ("CFK", "Not Revealed"): (20, 48, 22, 11),
    ("MM", "Not Revealed"): (26, 39, 21, 14),
    ("AF", "Not Revealed"): (15, 28, 28, 35),  # sums to 106
}
# The AF non-revealer row cannot be hit as printed.  NS/NC is held at 35 and
# the other cells are scaled into the remaining 65 points.
IMAGE_ANCHORS = {("AF", "Not Revealed"): 3}



@dataclass(frozen=True)
class PanelTargets:
    transition: dict = field(default_factory=lambda: dict(TRANSITION_TARGETS))
    disclosure_total: int = DISCLOSURE_TOTAL
    disclosure: dict = field(default_factory=lambda: {a: dict(c) for a, c in DISCLOSURE_TARGETS.items()})
    images: dict = field(default_factory=lambda: dict(IMAGE_TARGETS))
    anchors: dict = field(default_factory=lambda: dict(IMAGE_ANCHORS))


PUBLISHED = PanelTargets()

DEFAULT_ROW_SIZES = {
    "AF-CFK": 1700,
    "MM-MP": 1300,
    "Lavagna": 120,
    "Del Cano": 120,
    "Espert": 120,
    "Gomez Centurion": 120,
    "Blank/Null": 120,
    UNKNOWN: 150,
}
# nominal composition used to size strata; the rates above are what is matched
DEMOGRAPHIC_FRACTIONS = {
    "gender": {"M": 0.48, "F": 0.52},
    "age_group": {"16-30": 0.31, "31-50": 0.34, "51-65": 0.20, "65+": 0.15},
    "education": {"full secondary": 0.40, "incomplete secondary": 0.30, "university": 0.30},
}

CENSUS_STYLE_MARGINS = {
    "age_group": {"16-30": 0.31, "31-50": 0.34, "51-65": 0.20, "65+": 0.15},
    "gender": {"M": 0.48, "F": 0.52},
}
# online/IVR-style sample: thin below 30, peaked at 51-65 women
SKEWED_PYRAMID = {
    ("16-30", "M"): 0.035, ("16-30", "F"): 0.045,
    ("31-50", "M"): 0.13, ("31-50", "F"): 0.17,
    ("51-65", "M"): 0.16, ("51-65", "F"): 0.25,
    ("65+", "M"): 0.09, ("65+", "F"): 0.12,
}


def rate_interval(n, t):
    """Inclusive integer range of counts ``c`` with ``floor(100 c / n + 0.5) == t``."""
    lo = math.ceil((2 * t - 1) * n / 200)
    hi = math.ceil((2 * t + 1) * n / 200) - 1
    return max(lo, 0), min(hi, n)


def _required_n(targets, n, limit=20_000):
    # every cell can be off by under half a point, so the targets must sum to
    # within len/2 of 100 for any n to work
    if abs(sum(targets) - 100) >= len(targets) / 2:
        return None
    for m in range(max(n, 1), limit):
        try:
            allocate_counts(m, targets, _hint=False)
            return m
        except InfeasibleTargetError:
            continue
    return None


def allocate_counts(n, targets, intervals=None, _hint=True):
    """Integer counts summing to ``n`` whose percentages round to ``targets``.

    ``intervals`` optionally narrows each cell's admissible range.  Raises
    :class:`InfeasibleTargetError` (with the smallest workable ``n`` when one
    exists) if no allocation hits every target.
    """
    targets = [int(t) for t in targets]
    bounds = [rate_interval(n, t) for t in targets]
    if intervals is not None:
        bounds = [(max(a, c), min(b, d)) for (a, b), (c, d) in zip(bounds, intervals)]
    lo = np.array([b[0] for b in bounds], dtype=np.int64)
    hi = np.array([b[1] for b in bounds], dtype=np.int64)
    if np.any(lo > hi) or lo.sum() > n or hi.sum() < n:
        need = _required_n(targets, n) if _hint and intervals is None else None
        hint = f"; smallest n that works is {need}" if need else ""
        raise InfeasibleTargetError(f"cannot hit {targets}% with n={n}{hint}", required_n=need)
    nominal = np.array(targets, dtype=np.float64) * n / max(sum(targets), 1)
    counts = np.clip(np.floor(nominal).astype(np.int64), lo, hi)
    while counts.sum() < n:
        room = np.where(counts < hi, nominal - counts, -np.inf)
        counts[int(np.argmax(room))] += 1
    while counts.sum() > n:
        room = np.where(counts > lo, counts - nominal, -np.inf)
        counts[int(np.argmax(room))] -= 1
    return counts


def _yes_interval(n, yes, no):
    a, b = rate_interval(n, yes)
    c, d = rate_interval(n, no)
    return max(a, n - d), min(b, n - c)


@dataclass
class _Row:
    pre: str
    af: int
    mm: int
    other: int
    kept: int | None  # respondents whose post answer equals the pre answer


def _transition_rows(sizes, targets=PUBLISHED):
    rows = {}
    for pre, n in sizes.items():
        af, mm, oth, yes, no = targets.transition[pre]
        if pre in ("AF-CFK", "MM-MP"):
            col = 0 if pre == "AF-CFK" else 1
            box = [(0, n)] * 3
            box[col] = _yes_interval(n, yes, no)
            c = allocate_counts(n, (af, mm, oth), intervals=box)
            rows[pre] = _Row(pre, int(c[0]), int(c[1]), int(c[2]), int(c[col]))
            continue
        try:
            c = allocate_counts(n, (af, mm, oth))
        except InfeasibleTargetError as exc:
            raise InfeasibleTargetError(f"row {pre}: {exc}", required_n=exc.required_n) from None
        kept = None
        if yes is not None:
            lo, hi = _yes_interval(n, yes, no)
            hi = min(hi, int(c[2]))
            if lo > hi:
                raise InfeasibleTargetError(f"row {pre}: kept share {yes}% does not fit inside Other with n={n}")
            kept = min(max(int(round(yes * n / 100)), lo), hi)
        rows[pre] = _Row(pre, int(c[0]), int(c[1]), int(c[2]), kept)
    return rows


def _tune_total(rows, sizes, targets=PUBLISHED):
    """Nudge secondary kept counts so the overall disclosure rounds to target."""
    known = sum(n for pre, n in sizes.items() if pre != UNKNOWN)
    lo, hi = rate_interval(known, targets.disclosure_total)
    kept = sum(r.kept for r in rows.values() if r.kept is not None)
    movable = [r for r in rows.values() if r.pre in SECONDARY]
    for r in movable:
        if lo <= kept <= hi:
            break
        n = sizes[r.pre]
        _, _, _, yes, no = targets.transition[r.pre]
        a, b = _yes_interval(n, yes, no)
        b = min(b, r.other)
        new = min(max(r.kept + (lo - kept if kept < lo else hi - kept), a), b)
        kept += new - r.kept
        r.kept = new
    if not lo <= kept <= hi:
        raise InfeasibleTargetError(
            f"row sizes give {100 * kept / known:.2f}% revealed; total target {targets.disclosure_total}% unreachable"
        )
    return kept, known - kept


def _split_by_rates(n_rev, n_hid, fractions, rates, max_moves=2_000):
    """Per-category (revealed, hidden) counts matching ``rates`` exactly.

    Stratum sizes start at the demographic fractions and move one respondent
    at a time (best move first, no state revisited) until every rate fits.
    """
    cats = list(fractions)
    t = [int(rates[c]) for c in cats]
    nominal_sizes = allocate_exact(n_rev + n_hid, [fractions[c] for c in cats])

    def boxes(sizes):
        box = [_yes_interval(int(n), r, 100 - r) for n, r in zip(sizes, t)]
        return np.array([b[0] for b in box]), np.array([b[1] for b in box])

    def gap(sizes):
        lo, hi = boxes(sizes)
        return int(np.maximum(lo - hi, 0).sum() + max(lo.sum() - n_rev, 0) + max(n_rev - hi.sum(), 0))

    sizes = nominal_sizes.copy()
    seen = {tuple(sizes)}
    for _ in range(max_moves):
        if gap(sizes) == 0:
            break
        best = None
        for i in range(len(cats)):
            for j in range(len(cats)):
                if i == j or sizes[i] <= 1:
                    continue
                cand = sizes.copy()
                cand[i] -= 1
                cand[j] += 1
                if tuple(cand) in seen:
                    continue
                key = (gap(cand), int(np.abs(cand - nominal_sizes).sum()), i, j)
                if best is None or key < best[0]:
                    best = (key, cand)
        if best is None:
            break
        sizes = best[1]
        seen.add(tuple(sizes))
    if gap(sizes):
        raise InfeasibleTargetError(f"cannot split {n_rev}/{n_hid} respondents to rates {rates}")
    lo, hi = boxes(sizes)
    nominal = sizes * np.array(t) / 100.0
    nominal *= n_rev / nominal.sum()
    r = np.clip(np.round(nominal).astype(np.int64), lo, hi)
    while r.sum() < n_rev:
        r[int(np.argmax(np.where(r < hi, nominal - r, -np.inf)))] += 1
    while r.sum() > n_rev:
        r[int(np.argmax(np.where(r > lo, r - nominal, -np.inf)))] -= 1
    return {c: (int(a), int(n - a)) for c, a, n in zip(cats, r, sizes)}


def _image_counts(n, key, spec=PUBLISHED):
    targets = spec.images[key]
    try:
        return allocate_counts(n, targets)
    except InfeasibleTargetError:
        if key not in spec.anchors:
            raise
    anchor = spec.anchors[key]
    rest = [t for i, t in enumerate(targets) if i != anchor]
    scale = (100 - targets[anchor]) / sum(rest)
    scaled = [t * scale for i, t in enumerate(targets) if i != anchor]
    a_lo, a_hi = rate_interval(n, targets[anchor])
    a = min(max(int(round(targets[anchor] * n / 100)), a_lo), a_hi)
    counts = allocate_exact(n - a, scaled)
    log.warning("%s image targets %s sum to %d%%; held %s at %d%% and rescaled the rest",
                key, targets, sum(targets), IMAGES[anchor], targets[anchor])
    return np.insert(counts, anchor, a)


def _labels(counts_by_cat, rng):
    out = np.array([c for c, k in counts_by_cat for _ in range(k)], dtype=object)
    rng.shuffle(out)
    return out


def generate_panel(row_sizes=None, seed=0, targets=PUBLISHED):
    """Panel whose tables reproduce the transition, disclosure and image rates in ``targets``.

    ``row_sizes`` maps each pre-election answer to its respondent count.
    Every respondent has weight 1.
    """
    sizes = dict(DEFAULT_ROW_SIZES if row_sizes is None else row_sizes)
    unknown_rows = set(sizes) - set(targets.transition)
    if unknown_rows:
        raise DataError(f"no targets for rows {sorted(unknown_rows)}")
    rng = np.random.default_rng(seed)
    rows = _transition_rows(sizes, targets)
    if any(r.kept is not None for r in rows.values()):
        n_rev, n_hid = _tune_total(rows, sizes, targets)
    else:
        n_rev = n_hid = 0

    pre, post = [], []
    for cand in CANDIDATES:
        r = rows.get(cand)
        if r is None:
            continue
        fillers = [c for c in SECONDARY + (UNKNOWN,) if c != cand]
        others = [cand] * r.kept if cand in SECONDARY else []
        others += [fillers[i % len(fillers)] for i in range(r.other - len(others))]
        post += ["AF-CFK"] * r.af + ["MM-MP"] * r.mm + others
        pre += [cand] * (r.af + r.mm + r.other)
    df = pd.DataFrame({"pre_choice": pre, "post_choice": post})
    known = (df["pre_choice"] != UNKNOWN).to_numpy()
    rev = known & (df["pre_choice"] == df["post_choice"]).to_numpy()
    hid = known & ~rev
    assert rev.sum() == n_rev and hid.sum() == n_hid
    unk = ~known

    for axis, fractions in DEMOGRAPHIC_FRACTIONS.items():
        col = np.empty(len(df), dtype=object)
        if n_rev + n_hid:
            split = _split_by_rates(n_rev, n_hid, fractions, targets.disclosure[axis])
            col[rev] = _labels([(c, a) for c, (a, _) in split.items()], rng)
            col[hid] = _labels([(c, h) for c, (_, h) in split.items()], rng)
        counts = allocate_exact(int(unk.sum()), list(fractions.values()))
        col[unk] = _labels(zip(fractions, counts), rng)
        df[axis] = col

    for cand, column in IMAGE_COLUMNS.items():
        col = np.empty(len(df), dtype=object)
        for group, mask in (("Revealed", rev), ("Not Revealed", hid)):
            if mask.any():
                col[mask] = _labels(zip(IMAGES, _image_counts(int(mask.sum()), (cand, group), targets)), rng)
        col[unk] = _labels(zip(IMAGES, allocate_exact(int(unk.sum()), [1, 1, 1, 1])), rng)
        df[column] = col

    df = df.iloc[rng.permutation(len(df))].reset_index(drop=True)
    df.insert(0, "respondent_id", [f"r{i:05d}" for i in range(len(df))])
    df["weight"] = 1.0
    return df.loc[:, list(PANEL_COLUMNS)]


def skewed_sample(n=1900, pyramid=None, seed=0, with_choices=True):
    """Respondents drawn to a fixed age x gender pyramid (exact cell counts)."""
    pyramid = SKEWED_PYRAMID if pyramid is None else pyramid
    cells = list(pyramid)
    counts = allocate_exact(n, [pyramid[c] for c in cells])
    rng = np.random.default_rng(seed)
    ages = [a for (a, _), k in zip(cells, counts) for _ in range(k)]
    genders = [g for (_, g), k in zip(cells, counts) for _ in range(k)]
    order = rng.permutation(n)
    df = pd.DataFrame({
        "respondent_id": [f"s{i:05d}" for i in range(n)],
        "age_group": np.array(ages, dtype=object)[order],
        "gender": np.array(genders, dtype=object)[order],
    })
    if with_choices:
        choice = rng.choice(["AF-CFK", "MM-MP", "Lavagna", "Blank/Null"], size=n, p=[0.42, 0.45, 0.08, 0.05])
        df["pre_choice"] = choice
        df["post_choice"] = choice
        df["education"] = rng.choice(EDUCATION, size=n)
        for column in IMAGE_COLUMNS.values():
            df[column] = rng.choice(IMAGES, size=n)
        df["weight"] = 1.0
        df = df.loc[:, list(PANEL_COLUMNS)]
    return df


__all__ = [
    "AGE_GROUPS",
    "CENSUS_STYLE_MARGINS",
    "DEFAULT_ROW_SIZES",
    "PUBLISHED",
    "PanelTargets",
    "GENDERS",
    "allocate_counts",
    "generate_panel",
    "rate_interval",
    "skewed_sample",
]
