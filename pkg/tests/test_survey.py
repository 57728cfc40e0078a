import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tweetpoll import survey
from tweetpoll.errors import DataError
from tweetpoll.synth.panel import CENSUS_STYLE_MARGINS, skewed_sample


def panel(rows):
    """rows: (pre, post, age, gender) tuples; other fields filled with defaults."""
    df = pd.DataFrame(rows, columns=["pre_choice", "post_choice", "age_group", "gender"])
    df.insert(0, "respondent_id", [f"r{i}" for i in range(len(df))])
    df["education"] = "university"
    for c in survey.IMAGE_COLUMNS.values():
        df[c] = "Regular"
    df["weight"] = 1.0
    return df.loc[:, list(survey.PANEL_COLUMNS)]


def test_single_axis_closed_form():
    df = panel([("AF-CFK", "AF-CFK", "16-30", "M")] * 7 + [("AF-CFK", "AF-CFK", "16-30", "F")] * 3)
    res = survey.rake(df, {"gender": {"M": 0.5, "F": 0.5}})
    assert res.converged and res.iterations == 1
    raw = np.array([5 / 7] * 7 + [5 / 3] * 3)
    np.testing.assert_allclose(res.weights.to_numpy(), raw / raw.mean(), rtol=1e-12)


def test_matching_sample_is_a_fixpoint():
    df = panel([("AF-CFK", "AF-CFK", "16-30", "M"), ("AF-CFK", "AF-CFK", "16-30", "F")])
    res = survey.rake(df, {"gender": {"M": 0.5, "F": 0.5}})
    assert res.iterations == 1
    np.testing.assert_array_equal(res.weights.to_numpy(), [1.0, 1.0])


def test_two_axis_skewed_sample_converges():
    df = skewed_sample(1900, seed=0)
    res = survey.rake(df, CENSUS_STYLE_MARGINS, tol=1e-6, max_iter=100)
    assert res.converged and res.iterations <= 100
    for axis, targets in CENSUS_STYLE_MARGINS.items():
        got = res.weights.groupby(df[axis].to_numpy()).sum() / res.weights.sum()
        for cat, t in targets.items():
            assert abs(got[cat] - t) < 1e-6
    assert np.all(res.weights > 0)
    assert res.weights.mean() == pytest.approx(1.0)


def test_raking_twice_is_idempotent():
    df = skewed_sample(500, seed=1)
    first = survey.rake(df, CENSUS_STYLE_MARGINS)
    second = survey.rake(df, CENSUS_STYLE_MARGINS, base_weights=first.weights.to_numpy())
    np.testing.assert_allclose(second.weights.to_numpy(), first.weights.to_numpy(), rtol=1e-5)


def test_missing_category_dropped_with_warning(caplog):
    df = panel([("AF-CFK", "AF-CFK", "16-30", "M"), ("AF-CFK", "AF-CFK", "31-50", "M")])
    res = survey.rake(df, {"age_group": {"16-30": 0.25, "31-50": 0.25, "65+": 0.5}})
    assert res.dropped == [("age_group", "65+")]
    np.testing.assert_allclose(res.weights.to_numpy(), [1.0, 1.0])
    assert "absent" in caplog.text


def test_rake_errors():
    with pytest.raises(DataError):
        survey.rake(panel([]), {"gender": {"M": 1.0}})
    with pytest.raises(DataError):
        survey.rake(panel([("AF-CFK", "AF-CFK", "16-30", "M")]), {"education": {"x": 1.0}, "nope": {"a": 1.0}})


def test_nonconvergence_is_reported():
    df = skewed_sample(400, seed=2)
    res = survey.rake(df, CENSUS_STYLE_MARGINS, tol=1e-15, max_iter=2)
    assert not res.converged and res.iterations == 2


def test_weighted_shares():
    df = panel([("AF-CFK", "AF-CFK", "16-30", "M"), ("MM-MP", "MM-MP", "16-30", "F")])
    s = survey.weighted_shares(df)
    assert s["AF-CFK"] == 0.5 and s["Lavagna"] == 0.0
    s = survey.weighted_shares(df, weights=np.array([1e-4, 1.0]))
    assert s["MM-MP"] == pytest.approx(1.0, abs=1e-3)


def test_transition_table_identity_panel():
    df = panel([(c, c, "16-30", "M") for c in survey.CANDIDATES[:-1]])
    t = survey.transition_table(df)
    assert (t["Yes"] == 100).all() and (t["No"] == 0).all()
    assert t.loc["AF-CFK", "AF-CFK"] == 100 and t.loc["Lavagna", "Other"] == 100


def test_unknown_pre_choice_is_excluded_from_disclosure():
    df = panel([("Unknown/Other", "AF-CFK", "16-30", "M"), ("AF-CFK", "AF-CFK", "16-30", "M")])
    rev = survey.revealed(df)
    assert pd.isna(rev.iloc[0]) and rev.iloc[1] == True  # noqa: E712
    d = survey.disclosure_by_demographics(df)
    assert d.loc[("total", "all"), "Revealed"] == 100
    t = survey.transition_table(df)
    assert np.isnan(t.loc["Unknown/Other", "Yes"])


def test_image_table_uniform_images():
    rows = []
    for img in survey.IMAGES:
        for rev in (True, False):
            rows.append(("AF-CFK", "AF-CFK" if rev else "MM-MP", "16-30", "M", img))
    df = panel([r[:4] for r in rows])
    for c in survey.IMAGE_COLUMNS.values():
        df[c] = [r[4] for r in rows]
    t = survey.image_table(df)
    assert (t == 25.0).all().all()


def test_pyramid_has_every_cell_and_peak():
    df = skewed_sample(1000, seed=0, with_choices=False)
    pyr = survey.demographic_pyramid(df)
    assert len(pyr) == 8 and pyr["fraction"].sum() == pytest.approx(1.0)
    peak = pyr.loc[pyr["count"].idxmax()]
    counts = df.groupby(["age_group", "gender"]).size()
    assert (peak["age_group"], peak["gender"]) == counts.idxmax()
    empty = survey.demographic_pyramid(df[df["age_group"] != "65+"])
    assert (empty.loc[empty["age_group"] == "65+", "count"] == 0).all()


def test_round_percent_is_half_up():
    np.testing.assert_array_equal(survey.round_percent([0.5, 1.5, 2.5, 82.49]), [1, 2, 3, 82])


def test_panel_validation(tmp_path):
    df = panel([("AF-CFK", "AF-CFK", "16-30", "M")])
    p = tmp_path / "p.csv"
    p.write_text(survey.panel_csv(df))
    assert survey.load_panel(p).equals(df)
    df.loc[0, "gender"] = "X"
    with pytest.raises(DataError):
        survey.validate_panel(df)


def test_margins_round_trip(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(survey.margins_csv(CENSUS_STYLE_MARGINS))
    assert survey.load_margins(p) == CENSUS_STYLE_MARGINS
    p.write_text("axis,category,fraction\ngender,M,0.4\ngender,F,0.4\n")
    with pytest.raises(DataError):
        survey.load_margins(p)


@st.composite
def weighted_panels(draw):
    n = draw(st.integers(5, 40))
    pre = draw(st.lists(st.sampled_from(survey.CANDIDATES[:-1]), min_size=n, max_size=n))
    post = draw(st.lists(st.sampled_from(survey.CANDIDATES), min_size=n, max_size=n))
    age = draw(st.lists(st.sampled_from(survey.AGE_GROUPS), min_size=n, max_size=n))
    w = draw(st.lists(st.floats(0.1, 10), min_size=n, max_size=n))
    df = panel(list(zip(pre, post, age, ["M"] * n)))
    df["weight"] = w
    return df


@settings(max_examples=80, deadline=None)
@given(weighted_panels())
def test_table_invariants(df):
    t = survey.transition_table(df)
    np.testing.assert_allclose(t[["AF-CFK", "MM-MP", "Other"]].sum(axis=1), 100.0, atol=0.05)
    d = survey.disclosure_by_demographics(df)
    rev = survey.revealed(df)
    w = df["weight"]
    for axis in ("age_group",):
        part = d.loc[axis]
        share = w.groupby(df[axis]).sum().reindex(part.index)
        mean = (part["Revealed"] * share).sum() / share.sum()
        assert mean == pytest.approx(d.loc[("total", "all"), "Revealed"], abs=1e-9)
    assert rev.notna().all()
