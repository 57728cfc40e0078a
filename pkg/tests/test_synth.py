import json
from collections import Counter
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweetpoll import ingest, opinion, survey
from tweetpoll.errors import ConfigurationError, InfeasibleTargetError
from tweetpoll.synth import ElectorateSpec, allocate_counts, generate_corpus, generate_panel
from tweetpoll.synth.panel import PUBLISHED, PanelTargets, rate_interval


def test_same_seed_same_bytes():
    spec = ElectorateSpec(n_users=200, n_days=10, seed=11)
    a, b = generate_corpus(spec), generate_corpus(ElectorateSpec(n_users=200, n_days=10, seed=11))
    assert a.ndjson() == b.ndjson() and a.truth_csv() == b.truth_csv()
    assert generate_corpus(ElectorateSpec(n_users=200, n_days=10, seed=12)).ndjson() != a.ndjson()


def test_all_ultra_loyal_ff_only_uses_ff_words():
    spec = ElectorateSpec(
        n_users=150, n_days=10, shares=(1.0, 0.0, 0.0), frac_ultra_loyal=1.0, frac_switchers=0.0, frac_low_activity=0.0
    )
    c = generate_corpus(spec)
    tweets, _ = ingest.parse_stream(c.lines)
    kept, _ = ingest.split_bots(tweets, ingest.default_whitelist())
    words = {w for t in kept for w in ingest.tokenize(t.text)}
    assert any(w.startswith("fer") for w in words)
    assert not any(w.startswith(("mac", "lav")) for w in words)


def test_sidecar_frequencies_match_shares():
    spec = ElectorateSpec(n_users=10_000, n_days=1, tweet_rate=0.001, bot_rate=0.001)
    c = generate_corpus(spec)
    f, m, t = c.planted_shares()
    assert abs(f - 0.5) <= 0.005 and abs(m - 0.4) <= 0.005 and abs(t - 0.1) <= 0.005
    assert Counter(r.loyalty for r in c.truth)["bot"] == 1000
    assert c.truth_csv().splitlines()[0] == "user_id,camp,loyalty"


def test_records_are_valid_ingest_input(small_corpus):
    tweets, stats = ingest.parse_stream(small_corpus.lines)
    assert stats.malformed == 0 and stats.duplicates == 0 and stats.hashtag_mismatch == 0
    assert [t.timestamp for t in tweets] == sorted(t.timestamp for t in tweets)
    assert {json.loads(small_corpus.lines[0])["lang"]} == {"es"}


def test_switchers_change_camp_words():
    spec = ElectorateSpec(
        n_users=80, n_days=40, bot_fraction=0.0, frac_ultra_loyal=0.0, frac_switchers=1.0,
        frac_low_activity=0.0, shares=(0.0, 1.0, 0.0), switch_from="F", tweet_rate=2.0,
    )
    c = generate_corpus(spec)
    tweets, _ = ingest.parse_stream(c.lines)
    early = {w for t in tweets if t.day < spec.start + timedelta(days=20) for w in ingest.tokenize(t.text)}
    late = {w for t in tweets if t.day >= spec.start + timedelta(days=36) for w in ingest.tokenize(t.text)}
    assert not any(w.startswith("mac") for w in early)
    assert not any(w.startswith("fer") for w in late)


@pytest.mark.parametrize(
    "kw",
    [
        {"n_users": 1, "bot_fraction": 1.0},
        {"shares": (0.5, 0.5, 0.5)},
        {"frac_ultra_loyal": 0.9, "frac_switchers": 0.2},
        {"overlap": 1.0},
        {"homophily_q": 1.5},
    ],
)
def test_infeasible_specs_are_rejected(kw):
    with pytest.raises(ConfigurationError):
        generate_corpus(ElectorateSpec(**kw))


def test_spec_json_round_trip(tmp_path):
    spec = ElectorateSpec(n_users=42, switch_from="F")
    p = tmp_path / "s.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert ElectorateSpec.load(p) == spec
    with pytest.raises(ConfigurationError):
        ElectorateSpec.from_dict({"n_users": 5, "colour": "red"})


def test_oracle_labels_recover_planted_shares(small_corpus):
    """Label tweets by their planted vocabulary and check Model 0 against the sidecar."""
    tweets, _ = ingest.parse_stream(small_corpus.lines)
    kept, _ = ingest.split_bots(tweets, ingest.default_whitelist())
    prefix = {"fer": "FF", "mac": "MP", "lav": "TP"}

    class Row:
        def __init__(self, t):
            votes = Counter(prefix[w[:3]] for w in ingest.tokenize(t.text) if w[:3] in prefix)
            top = votes.most_common(2)
            self.user_id, self.day = t.user_id, t.day
            self.stance = top[0][0] if top and (len(top) == 1 or top[0][1] > top[1][1]) else "Unclassified"

    spec = small_corpus.spec
    ls = opinion.accumulate([Row(t) for t in kept], spec.start, spec.end)
    s = opinion.predict(0, spec.end, ls)
    truth = {r.user_id: r.camp for r in small_corpus.truth if r.loyalty != "bot"}
    present = [u for u in ls.users]
    n = len(present)
    for camp, got in zip("FMT", (s.ff, s.mp, s.third)):
        planted = small_corpus.planted_shares()["FMT".index(camp)]
        assert abs(got - planted) < 3 * np.sqrt(planted * (1 - planted) / n) + 0.01
    assert set(present) <= set(truth)


def test_panel_reproduces_published_tables():
    df = generate_panel()
    t = survey.round_percent(survey.transition_table(df))
    assert t.loc["AF-CFK"].tolist() == [91, 2, 8, 91, 9]
    assert t.loc["MM-MP"].tolist() == [6, 83, 11, 83, 17]
    assert t.loc["Lavagna"].tolist() == [19, 9, 72, 56, 44]
    d = survey.round_percent(survey.disclosure_by_demographics(df))
    assert d.loc[("total", "all")].tolist() == [82, 18]
    assert d.loc[("age_group", "16-30")].tolist() == [67, 33]
    assert d.loc[("gender", "F")].tolist() == [81, 19]
    img = survey.round_percent(survey.image_table(df))
    assert img.loc["CFK", "Revealed"].tolist() == [45, 43, 6, 5]
    assert img.loc["AF", "Not Revealed"]["NS/NC"] == 35
    assert (df["weight"] == 1.0).all()


def test_panel_is_deterministic():
    assert generate_panel(seed=3).equals(generate_panel(seed=3))


def test_af_cfk_row_at_n_1000():
    targets = PanelTargets(
        disclosure_total=91,
        disclosure={axis: {c: 91 for c in cats} for axis, cats in PUBLISHED.disclosure.items()},
        images={key: (50, 50, 0, 0) for key in PUBLISHED.images},
    )
    df = generate_panel({"AF-CFK": 1000}, targets=targets)
    assert len(df) == 1000
    t = survey.round_percent(survey.transition_table(df))
    assert t.loc["AF-CFK"].tolist() == [91, 2, 8, 91, 9]
    d = survey.round_percent(survey.disclosure_by_demographics(df))
    assert (d["Revealed"] == 91).all()


def test_degenerate_row_is_all_truthful():
    targets = PanelTargets(
        transition={"AF-CFK": (100, 0, 0, 100, 0), "Unknown/Other": (53, 11, 36, None, None)},
        disclosure_total=100,
        disclosure={axis: {c: 100 for c in cats} for axis, cats in PUBLISHED.disclosure.items()},
        images={key: (25, 25, 25, 25) for key in PUBLISHED.images},
    )
    df = generate_panel({"AF-CFK": 200, "Unknown/Other": 100}, targets=targets)
    rows = df[df["pre_choice"] == "AF-CFK"]
    assert len(rows) == 200 and (rows["post_choice"] == "AF-CFK").all()
    t = survey.transition_table(df)
    assert t.loc["AF-CFK", "Yes"] == 100.0


def test_small_rows_give_required_n_hint():
    with pytest.raises(InfeasibleTargetError) as err:
        allocate_counts(100, (10, 8, 83))
    assert err.value.required_n is not None and err.value.required_n > 100
    allocate_counts(err.value.required_n, (10, 8, 83))


def test_rate_interval_edges():
    assert rate_interval(1000, 91) == (905, 914)
    assert rate_interval(200, 0) == (0, 0)
    assert rate_interval(200, 100) == (199, 200)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 60), min_size=2, max_size=6), st.integers(1, 3000))
def test_allocation_hits_every_target_or_explains(targets, n):
    targets = targets[:-1] + [max(0, 100 - sum(targets[:-1]) + targets[-1] % 3 - 1)]
    try:
        counts = allocate_counts(n, targets)
    except InfeasibleTargetError:
        return
    assert counts.sum() == n
    np.testing.assert_array_equal(survey.round_percent(100.0 * counts / n), targets)
