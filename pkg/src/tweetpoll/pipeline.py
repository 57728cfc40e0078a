"""Pipeline configuration and the stage functions behind the command line.

Every stage reads its inputs from the configured paths or from artifacts
written by earlier stages in ``workdir``, and writes its outputs atomically.
"""
import copy
import json
import logging
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path

from tweetpoll import classify, hashnet, ingest, opinion, survey
from tweetpoll.errors import ConfigurationError, DataError
from tweetpoll.io import atomic_write_text, csv_text, fmt, json_text, read_csv_rows

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    # paths, relative ones resolve against the config file's directory
    "corpus": "corpus.ndjson",
    "stopwords": None,
    "whitelist": None,
    "seeds": "seeds.csv",
    "official": "official.csv",
    "margins": "margins.csv",
    "panel": "panel.csv",
    "workdir": "work",
    # dates
    "collection_start": "2019-03-01",
    "collection_end": "2019-10-27",
    "paso": "2019-08-11",
    "general": "2019-10-27",
    "training_cutoff": "2019-08-01",
    "prediction_day": None,  # None: eve of the general election
    "t0": None,  # None: collection start
    "t0_candidates": ["2019-03-01", "2019-04-01", "2019-05-01", "2019-06-01", "2019-07-01"],
    # parameters
    "w": 14,
    "k": 10,
    "p_cutoff": 1e-7,
    "low_threshold": 0.33,
    "high_threshold": 0.66,
    "lambda": 1e-4,
    "epochs": 20,
    "batch_size": 256,
    "learning_rate": 0.1,
    "test_fraction": 0.1,
    "seed": 0,
    "raking_tol": 1e-6,
    "raking_max_iter": 100,
    "raking_axes": ["age_group", "gender"],
    "threads": None,
    # toggles
    "retweets_count_as_stance": True,
    "homophily_iterate": False,
    "n_counts_all_tweets": True,
}
PATH_KEYS = ("corpus", "stopwords", "whitelist", "seeds", "official", "margins", "panel", "workdir")
DATE_KEYS = ("collection_start", "collection_end", "paso", "general", "training_cutoff", "prediction_day", "t0")


@dataclass
class PipelineConfig:
    values: dict
    base_dir: Path

    def __getitem__(self, key):
        return self.values[key]

    def path(self, key):
        v = self.values[key]
        if v is None:
            return None
        p = Path(v)
        return p if p.is_absolute() else self.base_dir / p

    def date(self, key):
        v = self.values[key]
        return None if v is None else date.fromisoformat(v)

    @property
    def workdir(self):
        return self.path("workdir")

    def artifact(self, name):
        return self.workdir / name

    @property
    def prediction_day(self):
        d = self.date("prediction_day")
        return d if d is not None else self.date("general") - timedelta(days=1)

    @property
    def t0(self):
        d = self.date("t0")
        return d if d is not None else self.date("collection_start")

    def to_json(self):
        return json_text(self.values)


def _check_range(values, key, lo=None, hi=None, integer=False):
    v = values[key]
    if integer and (not isinstance(v, int) or isinstance(v, bool)):
        raise ConfigurationError(f"{key} must be an integer, got {v!r}")
    if not integer and (not isinstance(v, (int, float)) or isinstance(v, bool)):
        raise ConfigurationError(f"{key} must be a number, got {v!r}")
    if (lo is not None and v < lo) or (hi is not None and v > hi):
        raise ConfigurationError(f"{key}={v!r} outside [{lo}, {hi}]")


def validate_config(values):
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigurationError(f"invalid config keys: {', '.join(unknown)}")
    if values["schema_version"] != SCHEMA_VERSION:
        raise ConfigurationError(f"schema_version {values['schema_version']!r} not supported (expected {SCHEMA_VERSION})")
    for key in DATE_KEYS:
        if values[key] is not None:
            try:
                date.fromisoformat(values[key])
            except (TypeError, ValueError):
                raise ConfigurationError(f"{key} is not an ISO date: {values[key]!r}") from None
    for d in values["t0_candidates"]:
        try:
            date.fromisoformat(d)
        except (TypeError, ValueError):
            raise ConfigurationError(f"t0_candidates holds a non-date {d!r}") from None
    start, end = date.fromisoformat(values["collection_start"]), date.fromisoformat(values["collection_end"])
    if start > end:
        raise ConfigurationError("collection_start is after collection_end")
    if date.fromisoformat(values["paso"]) > date.fromisoformat(values["general"]):
        raise ConfigurationError("paso is after general")
    _check_range(values, "w", 1, integer=True)
    _check_range(values, "k", 1, integer=True)
    _check_range(values, "epochs", 1, integer=True)
    _check_range(values, "batch_size", 1, integer=True)
    _check_range(values, "seed", 0, integer=True)
    _check_range(values, "raking_max_iter", 1, integer=True)
    _check_range(values, "p_cutoff", 0.0, 1.0)
    if values["p_cutoff"] <= 0:
        raise ConfigurationError("p_cutoff must be positive")
    _check_range(values, "low_threshold", 0.0, 1.0)
    _check_range(values, "high_threshold", 0.0, 1.0)
    if not values["low_threshold"] < values["high_threshold"]:
        raise ConfigurationError("low_threshold must be below high_threshold")
    _check_range(values, "lambda", 0.0)
    _check_range(values, "learning_rate", 0.0)
    _check_range(values, "test_fraction", 0.0, 0.9)
    _check_range(values, "raking_tol", 0.0)
    if values["threads"] is not None:
        _check_range(values, "threads", 1, integer=True)
    for key in ("retweets_count_as_stance", "homophily_iterate", "n_counts_all_tweets"):
        if not isinstance(values[key], bool):
            raise ConfigurationError(f"{key} must be true or false")
    return values


def load_config(path=None, overrides=None):
    values = copy.deepcopy(DEFAULTS)
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(path)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"{path}: top level must be an object")
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigurationError(f"invalid config keys: {', '.join(unknown)}")
        values.update(loaded)
        base = path.resolve().parent
    values.update(overrides or {})
    return PipelineConfig(validate_config(values), base)


def _require(path):
    if path is None or not Path(path).exists():
        raise FileNotFoundError(path)
    return Path(path)


# ---- ingest


def load_clean(cfg):
    path = _require(cfg.artifact("clean.ndjson"))
    with open(path, encoding="utf-8") as fh:
        return [ingest.CleanTweet.from_dict(json.loads(line)) for line in fh if line.strip()]


def run_ingest(cfg):
    window = (cfg.date("collection_start"), cfg.date("collection_end"))
    raw, stats = ingest.read_stream(_require(cfg.path("corpus")), window=window)
    wl = ingest.load_whitelist(cfg.path("whitelist")) if cfg["whitelist"] else ingest.default_whitelist()
    stopwords = ingest.load_stopwords(_require(cfg.path("stopwords")) if cfg["stopwords"] else None)
    kept, bots = ingest.split_bots(raw, wl)
    kept.sort(key=lambda t: t.timestamp)
    clean = [ingest.standardize(t, stopwords) for t in kept]
    atomic_write_text(cfg.artifact("clean.ndjson"), "".join(json.dumps(c.to_dict(), ensure_ascii=False) + "\n" for c in clean))
    days = opinion.day_range(*window)
    atomic_write_text(cfg.artifact("daily_stats.csv"), ingest.corpus_stats(kept, bots).to_csv(days))
    summary = dict(stats.to_dict(), kept=len(kept), bot_tweets=len(bots))
    atomic_write_text(cfg.artifact("ingest.json"), json_text(summary))
    return summary


# ---- hashnet


def run_hashnet(cfg):
    clean = load_clean(cfg)
    seeds = hashnet.load_seed_labels(_require(cfg.path("seeds")))
    counts = hashnet.count_cooccurrences(clean, count_all_tweets=cfg["n_counts_all_tweets"])
    net = hashnet.validate_network(counts, threshold=cfg["p_cutoff"])
    report = hashnet.label_consistency_report(net, seeds)
    atomic_write_text(cfg.artifact("hashnet_edges.csv"), net.edges_csv())
    atomic_write_text(cfg.artifact("hashnet_vertices.csv"), net.vertices_csv(seeds))
    atomic_write_text(cfg.artifact("hashtag_frequencies.csv"), hashnet.frequencies_csv(hashnet.hashtag_frequencies(clean)))
    atomic_write_text(cfg.artifact("seed_consistency.csv"), report.to_csv())
    summary = {
        "N": counts.N,
        "hashtags": len(counts.occ),
        "pairs": len(counts.pair),
        "validated_edges": len(net.edges),
        "cross_camp_edges": len(report.cross_edges),
        "cross_camp_fraction": report.cross_fraction,
    }
    atomic_write_text(cfg.artifact("hashnet.json"), json_text(summary))
    return summary


# ---- classification


def run_build_training(cfg):
    clean = load_clean(cfg)
    seeds = hashnet.load_seed_labels(_require(cfg.path("seeds")))
    split = classify.build_training_set(clean, seeds, cfg.date("training_cutoff"), cfg["test_fraction"], cfg["seed"])
    rows = [(lt.tweet.tweet_id, lt.label, part) for part, items in (("train", split.train), ("test", split.test), ("third", split.third)) for lt in items]
    atomic_write_text(cfg.artifact("training_split.csv"), csv_text(("tweet_id", "label", "partition"), rows))
    summary = {"train": len(split.train), "test": len(split.test), "third": len(split.third), "excluded_conflicts": split.excluded_conflicts}
    atomic_write_text(cfg.artifact("training.json"), json_text(summary))
    return summary


def load_split(cfg, clean=None):
    clean = load_clean(cfg) if clean is None else clean
    by_id = {t.tweet_id: t for t in clean}
    split = classify.TrainingSplit([], [], [])
    for row in read_csv_rows(_require(cfg.artifact("training_split.csv"))):
        t = by_id.get(row["tweet_id"])
        if t is None:
            raise DataError(f"training tweet {row['tweet_id']} not in the cleaned corpus")
        getattr(split, row["partition"]).append(classify.LabeledTweet(t, row["label"]))
    return split


def run_train(cfg):
    split = load_split(cfg)
    model = classify.train_lr(split.train, cfg["lambda"], cfg["epochs"], cfg["batch_size"], cfg["learning_rate"], cfg["seed"])
    model.low, model.high = cfg["low_threshold"], cfg["high_threshold"]
    atomic_write_text(cfg.artifact("model.json"), model.to_json())
    out = {"train": len(split.train), "test": len(split.test)}
    if split.test:
        ev = classify.evaluate(model, split.test)
        nb = classify.evaluate(classify.train_nb(split.train), split.test)
        atomic_write_text(cfg.artifact("confusion.csv"), ev.confusion_csv())
        out.update(logistic_regression=ev.to_dict(), naive_bayes=nb.to_dict())
    atomic_write_text(cfg.artifact("evaluation.json"), json_text(out))
    return out


def load_model(cfg):
    return classify.StanceModel.from_json(_require(cfg.artifact("model.json")).read_text(encoding="utf-8"))


def run_classify(cfg):
    clean = load_clean(cfg)
    model = load_model(cfg)
    seeds = hashnet.load_seed_labels(_require(cfg.path("seeds")))
    rows = classify.classify_corpus(model, clean, seeds)
    atomic_write_text(cfg.artifact("classified.csv"), classify.classified_csv(rows))
    counts = {s.value: 0 for s in classify.TweetStance}
    for r in rows:
        counts[r.stance.value] += 1
    return counts


def load_classified(cfg):
    out = []
    for row in read_csv_rows(_require(cfg.artifact("classified.csv"))):
        out.append(
            classify.ClassifiedTweet(
                row["tweet_id"], row["user_id"], date.fromisoformat(row["day"]), classify.TweetStance(row["stance"]), float(row["p"]) if row["p"] else None
            )
        )
    return out


# ---- opinion and prediction


def _stance_rows(cfg, classified):
    if cfg["retweets_count_as_stance"]:
        return classified
    retweets = {t.tweet_id for t in load_clean(cfg) if t.retweet_of_user_id}
    return [
        classify.ClassifiedTweet(r.tweet_id, r.user_id, r.day, classify.TweetStance.UNCLASSIFIED, r.p) if r.tweet_id in retweets else r
        for r in classified
    ]


def load_ledgers(cfg):
    classified = _stance_rows(cfg, load_classified(cfg))
    return opinion.accumulate(classified, cfg.date("collection_start"), cfg.date("collection_end"))


def load_graph(cfg):
    pairs = [(r["user_a"], r["user_b"]) for r in read_csv_rows(_require(cfg.artifact("retweet_graph.csv")))]
    return opinion.RetweetGraph.from_edges(pairs)


def run_opinion(cfg):
    ls = load_ledgers(cfg)
    graph = opinion.build_retweet_graph(load_clean(cfg))
    atomic_write_text(cfg.artifact("retweet_graph.csv"), graph.edges_csv())
    day = cfg.prediction_day
    inst = opinion.window_opinion(ls, day, cfg["w"])
    lc = opinion.loyalty_classes(ls, day, cfg.t0, cfg["k"])
    labels = lc.labels()
    name = {int(k): k.label for k in opinion.UserOpinion}
    rows = [
        (u, name[int(inst[i])], name[int(lc.base[i])], name[int(lc.recent[i])], labels[i])
        for i, u in enumerate(ls.users)
        if lc.base[i] != opinion.ABSENT
    ]
    atomic_write_text(
        cfg.artifact("opinions.csv"),
        csv_text(("user_id", "instantaneous", "cumulative", "recent", "loyalty_class"), rows),
    )
    summary = {"day": day.isoformat(), "users": len(rows), "loyalty_classes": lc.class_counts(), "retweet_edges": graph.n_edges}
    atomic_write_text(cfg.artifact("opinion.json"), json_text(summary))
    return summary


def prediction_record(cfg, model_id, day, ls, graph, official=None):
    s = opinion.predict(model_id, day, ls, graph, cfg.t0, cfg["k"], cfg["homophily_iterate"])
    ff, mp, third = s.percent()
    rec = {"day": day.isoformat(), "model": model_id, "ff": ff, "mp": mp, "third": third, "undecided": s.undecided, "counts": s.counts}
    rec["mae"] = opinion.mae(s, official) if official else None
    t0s = [date.fromisoformat(d) for d in cfg["t0_candidates"]]
    t0s = [t for t in t0s if t < day and t >= ls.start]
    if len(t0s) >= 2:
        sens = opinion.t0_sensitivity(model_id, day, t0s, ls, graph, cfg["k"], cfg["homophily_iterate"])
        rec["t0_std"] = dict(zip(("ff", "mp", "third"), sens.std.tolist()))
        rec["t0_mean"] = dict(zip(("ff", "mp", "third"), sens.mean.tolist()))
    else:
        rec["t0_std"] = None
    return rec


def _official(cfg):
    p = cfg.path("official")
    return opinion.load_official(p) if p is not None and p.exists() else None


def run_predict(cfg, model_ids=opinion.MODELS, day=None):
    ls = load_ledgers(cfg)
    graph = load_graph(cfg)
    day = cfg.prediction_day if day is None else day
    official = _official(cfg)
    out = {}
    for m in model_ids:
        rec = prediction_record(cfg, m, day, ls, graph, official)
        atomic_write_text(cfg.artifact(f"prediction_model{m}.json"), json_text(rec))
        out[m] = rec
    return out


def series_rows(cfg, ls, graph, official=None):
    days = opinion.day_range(ls.start, min(ls.end, cfg.prediction_day))
    elections = {"PASO": cfg.date("paso"), "general": cfg.date("general")}
    marks = {"general": official} if official else None
    rows = opinion.emit_series(0, days, ls, graph, cfg.t0, cfg["k"], cfg["w"], cfg["homophily_iterate"], elections, marks)
    for m in (1, 2, 3):
        rows += [r for r in opinion.emit_series(m, days, ls, graph, cfg.t0, cfg["k"], None, cfg["homophily_iterate"], elections) if not r[1].startswith("election:")]
    return rows


# ---- survey


def load_panel(cfg, weights=None):
    panel = survey.load_panel(_require(cfg.path("panel")))
    if weights is not None:
        w = {r["respondent_id"]: float(r["weight"]) for r in read_csv_rows(_require(weights))}
        missing = set(panel["respondent_id"]) - set(w)
        if missing:
            raise DataError(f"weights file lacks {len(missing)} respondents")
        panel["weight"] = panel["respondent_id"].map(w)
    return panel


def survey_tables(panel):
    return {
        "survey_transition.csv": survey.table_csv(survey.transition_table(panel)),
        "survey_disclosure.csv": survey.table_csv(survey.disclosure_by_demographics(panel)),
        "survey_images.csv": survey.table_csv(survey.image_table(panel)),
        "survey_shares.csv": survey.table_csv(
            survey.weighted_shares(panel).rename("pre_share").to_frame().assign(post_share=survey.weighted_shares(panel, field="post_choice")) * 100.0,
            rounded=False,
        ),
        "survey_pyramid.csv": survey.demographic_pyramid(panel).to_csv(index=False, lineterminator="\n", float_format="%.10g"),
    }


def run_survey(cfg, weights=None):
    tables = survey_tables(load_panel(cfg, weights))
    for name, text in tables.items():
        atomic_write_text(cfg.artifact(name), text)
    return sorted(tables)


def run_rake(cfg):
    panel = load_panel(cfg)
    margins = survey.load_margins(_require(cfg.path("margins")))
    axes = cfg["raking_axes"]
    missing = [a for a in axes if a not in margins]
    if missing:
        raise DataError(f"margins file lacks axes {missing}")
    result = survey.rake(panel, {a: margins[a] for a in axes}, cfg["raking_tol"], cfg["raking_max_iter"])
    atomic_write_text(cfg.artifact("raking_weights.csv"), result.to_csv())
    summary = {
        "iterations": result.iterations,
        "converged": result.converged,
        "margin_errors": result.margin_errors,
        "dropped": [list(d) for d in result.dropped],
    }
    atomic_write_text(cfg.artifact("raking.json"), json_text(summary))
    return summary


# ---- report


def _csv_float(x):
    return "" if x is None else fmt(x)


def run_report(cfg, run_all=False):
    """Assemble the report bundle under ``workdir/report``; returns the summary dict."""
    if run_all:
        run_ingest(cfg)
        run_hashnet(cfg)
        run_build_training(cfg)
        run_train(cfg)
        run_classify(cfg)
        run_opinion(cfg)
    ls = load_ledgers(cfg)
    graph = load_graph(cfg)
    official = _official(cfg)
    day = cfg.prediction_day
    out_dir = cfg.artifact("report")
    preds = [prediction_record(cfg, m, day, ls, graph, official) for m in opinion.MODELS]
    summary = {"day": day.isoformat(), "official": official, "predictions": preds}

    atomic_write_text(
        out_dir / "predictions.csv",
        csv_text(
            ("model", "ff", "mp", "third", "undecided", "mae", "std_ff", "std_mp", "std_third"),
            [
                (
                    p["model"], fmt(p["ff"]), fmt(p["mp"]), fmt(p["third"]), _csv_float(p["undecided"]), _csv_float(p["mae"]),
                    *((_csv_float(p["t0_std"][c]) for c in ("ff", "mp", "third")) if p["t0_std"] else ("", "", "")),
                )
                for p in preds
            ],
        ),
    )
    atomic_write_text(out_dir / "series.csv", opinion.series_csv(series_rows(cfg, ls, graph, official)))
    for name in ("evaluation.json", "hashnet.json", "ingest.json", "opinion.json"):
        p = cfg.artifact(name)
        if p.exists():
            summary[name.removesuffix(".json")] = json.loads(p.read_text(encoding="utf-8"))
    panel_path = cfg.path("panel")
    if panel_path is not None and panel_path.exists():
        panel = load_panel(cfg)
        for name, text in survey_tables(panel).items():
            atomic_write_text(out_dir / name, text)
        margins_path = cfg.path("margins")
        if margins_path is not None and margins_path.exists():
            summary["raking"] = run_rake(cfg)
    atomic_write_text(out_dir / "report.json", json_text(summary))
    return summary
