import json

import pytest

from ptelicit.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.yaml"
    p.write_text(
        "agent:\n  kind: synthetic_pt\n  params: {sigma: 0.67, lam: 2.63, gamma: 0.685}\n"
        "marker_agent:\n  kind: synthetic_marker\n  sharpness: 1.0\n"
        "  marker_probs: {almost certain: 0.95, likely: 0.8, probable: 0.7, uncertain: 0.5,\n"
        "                 unlikely: 0.25, doubtful: 0.2, very unlikely: 0.1}\n"
        "run:\n  transcripts: false\n"
    )
    return p


def test_stage_verbs(tmp_path, capsys, config):
    out = tmp_path / "run"
    common = ("--config", config, "--samples", 32, "--replicates", 0, "--seed", 2, "--out", out)
    code, text, _ = run(capsys, "stage1", *common)
    assert code == 0 and json.loads(text)["bootstrap"]["master_seed"] == 2
    code, text, err = run(capsys, "stage2", *common)
    assert code == 0, err
    assert abs(json.loads(text)["likely"]["p_mapping"] - 80) < 5
    code, text, _ = run(capsys, "round", *common, "--round", "2")
    assert code == 0 and json.loads(text)["round"] == "round2"
    code, text, _ = run(capsys, "report", out)
    assert code == 0 and "round2" in text
    assert (out / "report" / "rounds.csv").exists()


def test_fit_verb(tmp_path, capsys, config):
    out = tmp_path / "run"
    run(capsys, "stage1", "--config", config, "--samples", 16, "--replicates", 0, "--out", out)
    dest = tmp_path / "refit.json"
    code, _, _ = run(capsys, "fit", out / "stage1/counts.csv", "--probs",
                     out / "stage1/probabilities.json", "--replicates", 0, "--out", dest)
    assert code == 0
    assert json.loads(dest.read_text()) == json.loads((out / "stage1/report.json").read_text())


def test_fit_bad_input_json_error(tmp_path, capsys):
    p = tmp_path / "c.csv"
    p.write_text("series,index,k_count,n_samples\nS1,1,9,4\n")
    code, _, err = run(capsys, "fit", p)
    assert code == 1
    e = json.loads(err)
    assert e["error"] == "InputParseError" and e["row"] == 2


def test_missing_file_json_error(tmp_path, capsys):
    code, _, err = run(capsys, "fit", tmp_path / "nope.csv")
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"


def test_usage_error(capsys):
    with pytest.raises(SystemExit) as ei:
        main(["round", "--config", "x.yaml"])
    assert ei.value.code == 2
    assert json.loads(capsys.readouterr().err)["error"] == "UsageError"


def test_simulate(tmp_path, capsys):
    code, text, err = run(capsys, "simulate", "--samples", 16, "--replicates", 0,
                          "--stages", "stage1", "stage2", "--no-transcripts", "--out", tmp_path / "s")
    assert code == 0, err
    assert "marker mapping" in text and "baseline" in text


def test_report_missing_run(tmp_path, capsys):
    code, _, err = run(capsys, "report", tmp_path)
    assert code == 1 and "manifest.json" in json.loads(err)["message"]


def test_console_entry_point(tmp_path):
    import subprocess
    import sys
    r = subprocess.run([sys.executable, "-m", "ptelicit.cli", "fit", str(tmp_path / "x.csv")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and json.loads(r.stderr)["error"] == "FileNotFoundError"
