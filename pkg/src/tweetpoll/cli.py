"""Command-line entry point: ``tweetpoll <subcommand> [--config FILE]``.

Exit codes: 0 success, 2 configuration error, 3 missing input, 4 data error.
"""
import argparse
import json
import logging
import sys
from datetime import date, timedelta
from pathlib import Path

from tweetpoll import _accel, pipeline
from tweetpoll.errors import ConfigurationError, DataError, DomainError
from tweetpoll.io import atomic_write_text, json_text

EXIT_OK, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA = 0, 2, 3, 4

log = logging.getLogger("tweetpoll")


def _parse_override(text):
    key, sep, raw = text.partition("=")
    if not sep:
        raise ConfigurationError(f"--set expects KEY=VALUE, got {text!r}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _cmd_synth(cfg, args):
    from tweetpoll.survey import margins_csv, panel_csv
    from tweetpoll.synth import ElectorateSpec, generate_corpus, generate_panel, write_corpus
    from tweetpoll.synth.panel import CENSUS_STYLE_MARGINS

    spec = ElectorateSpec.load(args.spec) if args.spec else ElectorateSpec()
    if args.users is not None:
        spec.n_users = args.users
    if args.seed is not None:
        spec.seed = args.seed
    out = Path(args.out)
    corpus = generate_corpus(spec)
    write_corpus(corpus, out)
    atomic_write_text(out / "panel.csv", panel_csv(generate_panel(seed=spec.seed)))
    atomic_write_text(out / "margins.csv", margins_csv(CENSUS_STYLE_MARGINS))
    end = spec.end
    config = {
        "schema_version": pipeline.SCHEMA_VERSION,
        "corpus": "corpus.ndjson",
        "seeds": "seeds.csv",
        "official": "official.csv",
        "panel": "panel.csv",
        "margins": "margins.csv",
        "workdir": "work",
        "collection_start": spec.start.isoformat(),
        "collection_end": end.isoformat(),
        "training_cutoff": (end + timedelta(days=1)).isoformat(),
        "prediction_day": end.isoformat(),
        "t0_candidates": [(spec.start + timedelta(days=i)).isoformat() for i in range(0, spec.n_days // 2, 7)],
        "seed": spec.seed,
    }
    atomic_write_text(out / "config.json", json_text(config))
    return {"tweets": len(corpus.lines), "users": spec.n_users, "out": str(out), "planted_percent": corpus.official_percent()}


def _cmd_predict(cfg, args):
    models = pipeline.opinion.MODELS if args.model is None else (args.model,)
    day = date.fromisoformat(args.day) if args.day else None
    out = pipeline.run_predict(cfg, models, day)
    return out[models[0]] if len(models) == 1 else {str(k): v for k, v in out.items()}


COMMANDS = {
    "ingest": lambda cfg, args: pipeline.run_ingest(cfg),
    "hashnet": lambda cfg, args: pipeline.run_hashnet(cfg),
    "build-training": lambda cfg, args: pipeline.run_build_training(cfg),
    "train": lambda cfg, args: pipeline.run_train(cfg),
    "classify": lambda cfg, args: pipeline.run_classify(cfg),
    "opinion": lambda cfg, args: pipeline.run_opinion(cfg),
    "predict": _cmd_predict,
    "survey": lambda cfg, args: pipeline.run_survey(cfg, args.weights),
    "rake": lambda cfg, args: pipeline.run_rake(cfg),
    "synth": _cmd_synth,
    "report": lambda cfg, args: pipeline.run_report(cfg, args.run_all),
}


HELP = {
    "ingest": "clean the raw NDJSON corpus and drop bot clients",
    "hashnet": "validate hashtag co-occurrences and check the seed labels",
    "build-training": "label tweets from seed hashtags and split train/test",
    "train": "fit the stance classifier and evaluate it against naive Bayes",
    "classify": "assign FF / MP / TP / Unclassified to every tweet",
    "opinion": "build per-user opinion ledgers and the retweet graph",
    "predict": "vote shares for one model (or all) on one day",
    "survey": "panel tables: transitions, disclosure, images, pyramid",
    "rake": "fit respondent weights to the census margins",
    "synth": "write a synthetic corpus, panel and matching config",
    "report": "assemble the JSON+CSV report bundle",
}


def _common(suppress):
    # subcommands repeat the global options; SUPPRESS keeps a value given
    # before the subcommand from being reset to the default
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", "-c", default=d(None), help="JSON config file (defaults are built in)")
    common.add_argument("--set", action="append", default=d([]), metavar="KEY=VALUE", help="override one config key")
    common.add_argument("--threads", type=int, default=d(None), help="bound the worker thread pool")
    common.add_argument("--print-config", action="store_true", default=d(False), help="print the resolved config and exit")
    common.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return common


def build_parser():
    common = _common(False)
    parser = argparse.ArgumentParser(
        prog="tweetpoll",
        description="Vote-share estimation from archived tweets, plus panel-survey analysis.",
        epilog="exit codes: 0 ok, 2 config error, 3 missing input, 4 data error",
        parents=[common],
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[_common(True)], help=HELP[name], description=HELP[name])
        if name == "predict":
            p.add_argument("--model", type=int, choices=pipeline.opinion.MODELS)
            p.add_argument("--day", help="prediction day (ISO date)")
        elif name == "survey":
            p.add_argument("--weights", help="respondent weights CSV (e.g. from `rake`)")
        elif name == "synth":
            p.add_argument("--spec", help="electorate spec JSON")
            p.add_argument("--out", default="synth", help="output directory")
            p.add_argument("--users", type=int)
            p.add_argument("--seed", type=int)
        elif name == "report":
            p.add_argument("--run-all", action="store_true", help="run every upstream stage first")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = dict(_parse_override(s) for s in args.set)
        if args.threads is not None:
            overrides["threads"] = args.threads
        cfg = pipeline.load_config(args.config, overrides)
        if args.print_config:
            sys.stdout.write(cfg.to_json())
            return EXIT_OK
        if args.command is None:
            parser.print_usage(sys.stderr)
            return EXIT_CONFIG
        _accel.set_threads(cfg["threads"])
        result = COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        print(f"tweetpoll: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename is not None else (exc.args[0] if exc.args else "?")
        print(f"tweetpoll: missing input: {missing}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, DomainError) as exc:
        print(f"tweetpoll: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    sys.stdout.write(json_text(result))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
