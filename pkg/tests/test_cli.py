import json

import pytest

from demodiff.cli import main
from demodiff.synth import default_models


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--n-subjects", "30", "--seed", "4", "--outlier-fraction",
                 "0.05", "--embeddings", "--dim", "16", "--n-distractors", "20"]) == 0
    return out


def _args(d, *names):
    out = []
    for n in names:
        flag = {"embeddings.jsonl": "--embeddings"}.get(n, "--" + n.split(".")[0])
        out += [flag, str(d / n)]
    return out


def test_synth_writes_files(synth_dir):
    names = {p.name for p in synth_dir.iterdir()}
    assert {"subjects.csv", "scores.csv", "quality.csv", "embeddings.jsonl", "provenance.json"} <= names
    prov = json.loads((synth_dir / "provenance.json").read_text())
    assert prov["scores"]["seed"] == 4 and prov["embeddings"]["dim"] == 16


def test_verify_to_stdout(synth_dir, capsys):
    code = main(["verify", *_args(synth_dir, "scores.csv", "subjects.csv", "quality.csv"),
                 "--target-fmr", "0.01", "--bootstrap-m", "10"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "verify" and report["threshold"]["source"] == "target_fmr"
    assert len(report["tests"]) == 6


def test_verify_all_formats(synth_dir, tmp_path, capsys):
    out = tmp_path / "r"
    code = main(["verify", *_args(synth_dir, "scores.csv", "subjects.csv"), "--threshold", "0.7",
                 "--format", "all", "--out", str(out), "--flip-mode", "bootstrap_welch"])
    assert code == 0
    assert (out / "report.json").exists() and (out / "report.md").exists()
    # re-emitting through the report command gives the same JSON
    assert main(["report", str(out / "report.json")]) == 0
    assert capsys.readouterr().out.endswith((out / "report.json").read_text())


def test_verify_summaries(tmp_path, capsys):
    path = tmp_path / "s.csv"
    path.write_text("group,mean,std,m\nWM,0.95,0.01,10\nWF,0.90,0.01,10\nBM,0.93,0.02,10\n"
                    "BF,0.91,0.02,10\n")
    assert main(["verify", "--summaries", str(path), "--pairs", "WF:WM,BF:BM"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "summaries"
    assert [t["pair"] for t in report["tests"]] == [["WF", "WM"], ["BF", "BM"]]
    assert report["tests"][0]["result"]["reject"] is True


def test_ident_and_calibrate(synth_dir, capsys):
    assert main(["ident", *_args(synth_dir, "embeddings.jsonl", "subjects.csv"), "--target-fnir", "0.2",
                 "--ref-group", "WM", "--sweep-points", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["kind"] == "ident" and len(report["identification"]["sweep"]) == 4 * 5
    assert main(["calibrate", *_args(synth_dir, "embeddings.jsonl", "subjects.csv"), "--target-fnir",
                 "0.2", "--ref-group", "WM"]) == 0
    cal = json.loads(capsys.readouterr().out)
    assert cal["threshold"] == report["threshold"]["value"]
    assert main(["calibrate", *_args(synth_dir, "scores.csv", "subjects.csv"), "--target-fmr",
                 "0.01"]) == 0
    assert json.loads(capsys.readouterr().out)["achieved_fmr"] <= 0.01


def test_sensitivity_and_quality(synth_dir, capsys):
    assert main(["sensitivity", *_args(synth_dir, "scores.csv", "subjects.csv"), "--threshold", "0.75",
                 "--mode", "both"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert {f["mode"] for f in report["diagnostics"]["flips"]} == {"point_z", "bootstrap_welch"}
    assert main(["quality", *_args(synth_dir, "quality.csv", "subjects.csv", "scores.csv"),
                 "--equal-n", "50"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert all(s["n_samples"] in (50, 100) for s in report["diagnostics"]["quality"]["summaries"])


def test_report_schema(capsys):
    assert main(["report", "--schema"]) == 0
    assert json.loads(capsys.readouterr().out)["properties"]["schema_version"]


@pytest.mark.parametrize("argv", [
    [],
    ["verify", "--threshold", "0.5", "--target-fmr", "0.01"],
    ["verify", "--threshold", "0.5"],
    ["nonsense"],
    ["report"],
])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1


def test_data_errors_exit_2(synth_dir, tmp_path):
    assert main(["verify", "--scores", str(tmp_path / "none.csv"), "--subjects",
                 str(synth_dir / "subjects.csv"), "--threshold", "0.5"]) == 2
    bad = tmp_path / "scores.csv"
    bad.write_text("probe_subject,probe_sample,gallery_subject,gallery_sample,score\nX,x1,X,x0,0.9\n")
    assert main(["verify", "--scores", str(bad), "--subjects", str(synth_dir / "subjects.csv"),
                 "--threshold", "0.5"]) == 2


def test_unreachable_fnir_exits_3(tmp_path):
    models = tmp_path / "models.json"
    models.write_text(json.dumps([m.as_dict() for m in default_models(30, embedding_noise=4.0)]))
    out = tmp_path / "d"
    assert main(["synth", "--out", str(out), "--models", str(models), "--embeddings", "--dim", "8"]) == 0
    assert main(["calibrate", *_args(out, "embeddings.jsonl", "subjects.csv"), "--target-fnir", "0",
                 "--ref-group", "WM", "--rank", "1"]) == 3
