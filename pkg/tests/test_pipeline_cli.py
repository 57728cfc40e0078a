import json

import numpy as np
import pandas as pd
import pytest

from tweetpoll import cli, pipeline, survey


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(out), "--users", "1500", "--seed", "1"]) == 0
    return out


def test_print_config_shows_defaults(capsys):
    code, out, _ = run(["--print-config", "--set", "w=21"], capsys)
    assert code == 0
    cfg = json.loads(out)
    assert cfg["w"] == 21 and cfg["k"] == pipeline.DEFAULTS["k"]


def test_invalid_key_is_named(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"window": 7, "k": 10}))
    code, _, err = run(["-c", str(path), "ingest"], capsys)
    assert code == cli.EXIT_CONFIG
    assert "window" in err


def test_bad_value_is_config_error(capsys):
    code, _, err = run(["--set", "low_threshold=0.9", "ingest"], capsys)
    assert code == cli.EXIT_CONFIG
    assert "threshold" in err


def test_missing_input_reports_path(tmp_path, capsys):
    code, _, err = run(["--set", f"corpus={tmp_path / 'nowhere.ndjson'}", "--set", f"workdir={tmp_path}", "ingest"], capsys)
    assert code == cli.EXIT_MISSING
    assert "nowhere.ndjson" in err


def test_missing_config_file(tmp_path, capsys):
    code, _, err = run(["-c", str(tmp_path / "absent.json"), "ingest"], capsys)
    assert code == cli.EXIT_MISSING
    assert "absent.json" in err


def test_data_error_exit(tmp_path, capsys):
    (tmp_path / "panel.csv").write_text("respondent_id,pre_choice\n1,AF-CFK\n")
    code, _, err = run(["--set", f"panel={tmp_path / 'panel.csv'}", "--set", f"workdir={tmp_path}", "survey"], capsys)
    assert code == cli.EXIT_DATA
    assert "columns" in err


def test_rake_on_matching_sample_keeps_unit_weights(synth_dir, tmp_path, capsys):
    panel = survey.load_panel(synth_dir / "panel.csv")
    margins = {
        axis: panel[axis].value_counts(normalize=True).to_dict() for axis in ("age_group", "gender")
    }
    (tmp_path / "margins.csv").write_text(survey.margins_csv(margins))
    code, out, _ = run(
        [
            "--set", f"panel={synth_dir / 'panel.csv'}",
            "--set", f"margins={tmp_path / 'margins.csv'}",
            "--set", f"workdir={tmp_path}",
            "rake",
        ],
        capsys,
    )
    assert code == 0
    w = pd.read_csv(tmp_path / "raking_weights.csv")["weight"].to_numpy()
    np.testing.assert_allclose(w, 1.0, atol=1e-9)
    assert json.loads(out)["iterations"] == 1


def _bundle(directory):
    return {p.name: p.read_bytes() for p in sorted((directory / "work" / "report").iterdir())}


@pytest.fixture(scope="module")
def report(synth_dir):
    assert cli.main(["-c", str(synth_dir / "config.json"), "report", "--run-all"]) == 0
    return _bundle(synth_dir)


def test_report_bundle_contents(report):
    assert {"predictions.csv", "series.csv", "report.json", "survey_transition.csv"} <= set(report)
    summary = json.loads(report["report.json"])
    preds = {p["model"]: p for p in summary["predictions"]}
    assert set(preds) == {0, 1, 2, 3}
    # the planted electorate is recovered closely at this size
    assert preds[0]["mae"] < 1.0
    assert preds[3]["mae"] < 1.0
    assert summary["raking"]["converged"]


def test_report_is_byte_identical_on_rerun(report, synth_dir, tmp_path):
    config = json.loads((synth_dir / "config.json").read_text())
    for key in ("corpus", "seeds", "official", "panel", "margins"):
        config[key] = str(synth_dir / config[key])
    config["workdir"] = str(tmp_path / "work")
    (tmp_path / "config.json").write_text(json.dumps(config))
    assert cli.main(["-c", str(tmp_path / "config.json"), "--threads", "2", "report", "--run-all"]) == 0
    assert _bundle(tmp_path) == report


def test_stages_run_individually(synth_dir, report, capsys):
    cfg = ["-c", str(synth_dir / "config.json")]
    code, out, _ = run(cfg + ["predict", "--model", "2"], capsys)
    assert code == 0
    rec = json.loads(out)
    assert rec["model"] == 2
    assert abs(rec["ff"] + rec["mp"] + rec["third"] - 100) < 1e-9


def test_no_command_is_usage_error(capsys):
    code, _, err = run([], capsys)
    assert code == cli.EXIT_CONFIG
    assert "usage" in err
