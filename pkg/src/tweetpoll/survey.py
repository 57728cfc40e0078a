"""Pollster-side analyses: raking, weighted shares and pre/post panel tables."""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from tweetpoll.errors import DataError

log = logging.getLogger(__name__)

CANDIDATES = (
    "AF-CFK",
    "MM-MP",
    "Lavagna",
    "Del Cano",
    "Espert",
    "Gomez Centurion",
    "Blank/Null",
    "Unknown/Other",
)
MAIN = ("AF-CFK", "MM-MP")
UNKNOWN = "Unknown/Other"
AGE_GROUPS = ("16-30", "31-50", "51-65", "65+")
GENDERS = ("M", "F")
EDUCATION = ("full secondary", "incomplete secondary", "university")
IMAGES = ("Positive", "Negative", "Regular", "NS/NC")
IMAGE_COLUMNS = {"CFK": "image_cfk", "MM": "image_mm", "AF": "image_af"}
REVEALED, HIDDEN = "Revealed", "Not Revealed"

PANEL_COLUMNS = (
    "respondent_id",
    "pre_choice",
    "post_choice",
    "age_group",
    "gender",
    "education",
    "image_cfk",
    "image_mm",
    "image_af",
    "weight",
)
_DOMAINS = {
    "pre_choice": CANDIDATES,
    "post_choice": CANDIDATES,
    "age_group": AGE_GROUPS,
    "gender": GENDERS,
    "education": EDUCATION,
    "image_cfk": IMAGES,
    "image_mm": IMAGES,
    "image_af": IMAGES,
}


def validate_panel(df):
    missing = [c for c in PANEL_COLUMNS if c not in df.columns]
    if missing:
        raise DataError(f"panel lacks columns {missing}")
    for col, allowed in _DOMAINS.items():
        bad = set(df[col].dropna().unique()) - set(allowed)
        if bad:
            raise DataError(f"{col} has values outside {allowed}: {sorted(bad)}")
    if not (df["weight"] > 0).all():
        raise DataError("panel weights must be positive")
    return df


def load_panel(path):
    df = pd.read_csv(path, dtype={"respondent_id": str}, keep_default_na=False)
    if "weight" in df.columns:
        try:
            df["weight"] = pd.to_numeric(df["weight"]).astype(float)
        except ValueError as exc:
            raise DataError(f"panel weights are not numeric ({exc})") from None
    return validate_panel(df)


def panel_csv(df):
    return df.loc[:, list(PANEL_COLUMNS)].to_csv(index=False, lineterminator="\n", float_format="%.10g")


def load_margins(path):
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    margins = {}
    for row in df.itertuples(index=False):
        margins.setdefault(row.axis, {})[row.category] = float(row.fraction)
    check_margins(margins)
    return margins


def check_margins(margins, tol=1e-9):
    for axis, cats in margins.items():
        total = sum(cats.values())
        if abs(total - 1.0) > tol:
            raise DataError(f"margins for {axis!r} sum to {total!r}, not 1")
        if any(v < 0 for v in cats.values()):
            raise DataError(f"negative margin in {axis!r}")


def margins_csv(margins):
    rows = [(a, c, f) for a, cats in margins.items() for c, f in cats.items()]
    return pd.DataFrame(rows, columns=["axis", "category", "fraction"]).to_csv(
        index=False, lineterminator="\n", float_format="%.12g"
    )


@dataclass
class RakingWeights:
    weights: pd.Series  # indexed by respondent_id, mean 1
    iterations: int
    margin_errors: dict
    converged: bool
    dropped: list = field(default_factory=list)

    def to_csv(self):
        out = self.weights.rename("weight").rename_axis("respondent_id").reset_index()
        return out.to_csv(index=False, lineterminator="\n", float_format="%.12g")


def _prepare_margins(sample, margins):
    prepared, dropped = {}, []
    for axis, cats in margins.items():
        if axis not in sample.columns:
            raise DataError(f"sample has no column {axis!r}")
        present = set(sample[axis].unique())
        extra = present - set(cats)
        if extra:
            raise DataError(f"{axis!r} categories {sorted(extra)} have no margin target")
        kept = {c: f for c, f in cats.items() if c in present}
        for c in cats:
            if c not in present:
                log.warning("margin category %s=%s absent from sample; dropped", axis, c)
                dropped.append((axis, c))
        total = sum(kept.values())
        if total <= 0:
            raise DataError(f"no usable margin targets for {axis!r}")
        prepared[axis] = {c: f / total for c, f in kept.items()}
    return prepared, dropped


def rake(sample, margins, tol=1e-6, max_iter=100, base_weights=None):
    """Iterative proportional fitting of respondent weights to target margins.

    Each iteration cycles through the axes, scaling weights by
    ``target / current`` share.  Stops when the largest absolute margin error
    drops below ``tol``; returns ``converged=False`` after ``max_iter``.
    Final weights are normalised to mean 1.
    """
    if len(sample) == 0:
        raise DataError("cannot rake an empty sample")
    margins, dropped = _prepare_margins(sample, margins)
    w = np.ones(len(sample)) if base_weights is None else np.asarray(base_weights, dtype=np.float64).copy()
    axes = []
    for axis, cats in margins.items():
        names = list(cats)
        codes = pd.Categorical(sample[axis], categories=names).codes
        axes.append((axis, codes, np.array([cats[c] for c in names])))

    def errors():
        out = {}
        for axis, codes, target in axes:
            share = np.bincount(codes, weights=w, minlength=target.size) / w.sum()
            out[axis] = float(np.max(np.abs(share - target)))
        return out

    iterations, converged = 0, False
    err = errors()
    while iterations < max_iter:
        iterations += 1
        for _, codes, target in axes:
            share = np.bincount(codes, weights=w, minlength=target.size) / w.sum()
            w = w * (target / share)[codes]
        err = errors()
        if max(err.values(), default=0.0) < tol:
            converged = True
            break
    w = w / w.mean()
    index = pd.Index(sample["respondent_id"].astype(str), name="respondent_id")
    return RakingWeights(pd.Series(w, index=index, name="weight"), iterations, err, converged, dropped)


def _weights(df, weights):
    if weights is None:
        return df["weight"].to_numpy(dtype=np.float64)
    if isinstance(weights, RakingWeights):
        weights = weights.weights
    if isinstance(weights, pd.Series):
        return weights.reindex(df["respondent_id"].astype(str)).to_numpy(dtype=np.float64)
    return np.asarray(weights, dtype=np.float64)


def weighted_shares(df, weights=None, field="pre_choice"):
    """Weighted share of each candidate in ``field``."""
    w = _weights(df, weights)
    s = pd.Series(w, index=df.index).groupby(df[field].to_numpy()).sum()
    return (s / w.sum()).reindex(list(CANDIDATES), fill_value=0.0)


def revealed(df):
    """True where the post-election answer matches the pre-election one.

    Respondents whose pre-election answer was Unknown/Other are NaN: they
    have no stated intention to compare against.
    """
    out = (df["pre_choice"] == df["post_choice"]).astype(object)
    out[df["pre_choice"] == UNKNOWN] = np.nan
    return out


def _post_group(post):
    return np.where(np.isin(post, MAIN), post, "Other")


def transition_table(df, weights=None):
    """Weighted row percentages: pre-election answer vs post-election vote."""
    w = pd.Series(_weights(df, weights), index=df.index)
    group = pd.Series(_post_group(df["post_choice"].to_numpy()), index=df.index)
    rev = revealed(df)
    rows = {}
    for cand in CANDIDATES:
        mask = df["pre_choice"] == cand
        if not mask.any():
            continue
        wr = w[mask]
        total = wr.sum()
        row = {col: 100.0 * wr[group[mask] == col].sum() / total for col in ("AF-CFK", "MM-MP", "Other")}
        if cand == UNKNOWN:
            row["Yes"] = row["No"] = np.nan
        else:
            yes = 100.0 * wr[rev[mask] == True].sum() / total  # noqa: E712
            row["Yes"], row["No"] = yes, 100.0 - yes
        rows[cand] = row
    return pd.DataFrame.from_dict(rows, orient="index", columns=["AF-CFK", "MM-MP", "Other", "Yes", "No"])


DISCLOSURE_AXES = (("gender", GENDERS), ("age_group", AGE_GROUPS), ("education", EDUCATION))


def disclosure_by_demographics(df, weights=None):
    """Revealed / Not Revealed percentages per gender, age and education stratum."""
    w = pd.Series(_weights(df, weights), index=df.index)
    rev = revealed(df)
    known = rev.notna()
    rows, index = [], []
    for axis, cats in DISCLOSURE_AXES:
        for cat in cats:
            mask = known & (df[axis] == cat)
            if not mask.any():
                continue
            share = 100.0 * w[mask & (rev == True)].sum() / w[mask].sum()  # noqa: E712
            rows.append((share, 100.0 - share))
            index.append((axis, cat))
    share = 100.0 * w[known & (rev == True)].sum() / w[known].sum()  # noqa: E712
    rows.append((share, 100.0 - share))
    index.append(("total", "all"))
    return pd.DataFrame(rows, index=pd.MultiIndex.from_tuples(index, names=["axis", "category"]), columns=[REVEALED, HIDDEN])


def image_table(df, weights=None):
    """Weighted image distribution of each candidate within each revelation group."""
    w = pd.Series(_weights(df, weights), index=df.index)
    rev = revealed(df)
    cols = pd.MultiIndex.from_product([(REVEALED, HIDDEN), IMAGES], names=["group", "image"])
    out = pd.DataFrame(index=list(IMAGE_COLUMNS), columns=cols, dtype=float)
    for group, flag in ((REVEALED, True), (HIDDEN, False)):
        mask = rev == flag
        total = w[mask].sum()
        for cand, col in IMAGE_COLUMNS.items():
            for img in IMAGES:
                out.loc[cand, (group, img)] = 100.0 * w[mask & (df[col] == img)].sum() / total if total else np.nan
    return out


def demographic_pyramid(df, weights=None):
    """Weighted count and fraction per (age_group, gender); empty cells give 0 rows."""
    w = pd.Series(_weights(df, weights), index=df.index) if "weight" in df or weights is not None else pd.Series(1.0, index=df.index)
    counts = w.groupby([df["age_group"], df["gender"]]).sum()
    full = pd.MultiIndex.from_product([AGE_GROUPS, GENDERS], names=["age_group", "gender"])
    counts = counts.reindex(full, fill_value=0.0)
    total = counts.sum()
    out = pd.DataFrame({"count": counts, "fraction": counts / total if total else 0.0})
    return out.reset_index()


def round_percent(x):
    """Presentation rounding to whole percent, halves away from zero."""
    if isinstance(x, (pd.DataFrame, pd.Series)):
        return np.floor(x.astype(np.float64) + 0.5)
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def table_csv(table, rounded=True):
    out = table.copy()
    if rounded:
        num = out.select_dtypes("number").columns
        out[num] = round_percent(out[num])
    if isinstance(out.columns, pd.MultiIndex):
        out.columns = [" ".join(c) for c in out.columns]
    keep_index = not isinstance(out.index, pd.RangeIndex)
    return out.to_csv(index=keep_index, lineterminator="\n", float_format="%.10g")
