import json
import socket
import subprocess
import sys
import time
import urllib.error
import urllib.request

import pytest

from repotopics.cli import main


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "cfg.json").write_text(json.dumps({"min_text_freq": 2, "min_name_freq": 2, "min_support": 1,
                                               "max_iters": 150}))
    assert main(["synth", "--out", str(root / "c.jsonl"), "--topics-out", str(root / "t.json"),
                 "--n-repos", "150", "--n-topics", "8", "--seed", "5"]) == 0
    assert main(["prepare", "--input", str(root / "c.jsonl"), "--topics", str(root / "t.json"),
                 "--out", str(root / "data"), "--config", str(root / "cfg.json"), "--seed", "42"]) == 0
    assert main(["train", "--kind", "logistic", "--data", str(root / "data"), "--model-dir", str(root / "m")]) == 0
    return root


def test_prepare_is_deterministic(workspace):
    args = ["prepare", "--input", str(workspace / "c.jsonl"), "--topics", str(workspace / "t.json"),
            "--config", str(workspace / "cfg.json"), "--seed", "42"]
    assert main(args + ["--out", str(workspace / "again")]) == 0
    for name in ("docs.jsonl", "labels.jsonl", "splits.json", "subtopics.tsv", "stats.json"):
        assert (workspace / "again" / name).read_bytes() == (workspace / "data" / name).read_bytes()


def test_evaluate_prints_report_json(workspace, capsys):
    capsys.readouterr()
    assert main(["evaluate", "--model-dir", str(workspace / "m"), "--data", str(workspace / "data"),
                 "--timing-samples", "5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [r["n"] for r in report["at_n"]] == [1, 3, 5, 8]
    assert 0 <= report["lrap"] <= 1 and report["predict_seconds_per_row"] > 0


def test_predict_prints_n_lines(workspace, capsys):
    first = json.loads((workspace / "c.jsonl").read_text().splitlines()[0])
    del first["stars"]
    (workspace / "repo.json").write_text(json.dumps(first))
    capsys.readouterr()
    assert main(["predict", "--model-dir", str(workspace / "m"), "--repo-file", str(workspace / "repo.json"),
                 "--n", "5"]) == 0
    lines = capsys.readouterr().out.strip().split("\n")
    assert len(lines) == 5
    assert all(line.split("\t")[0].startswith("topic-") for line in lines)


def test_ablate_writes_csv(workspace):
    plan = [{"name": "readme", "sources": ["readme"]}, {"name": "all"}]
    (workspace / "plan.json").write_text(json.dumps(plan))
    assert main(["ablate", "--data", str(workspace / "data"), "--plan", str(workspace / "plan.json"),
                 "--out", str(workspace / "ablation.csv")]) == 0
    lines = (workspace / "ablation.csv").read_text().strip().split("\n")
    assert lines[0].endswith("R@5,P@5,F1@5,S@5,S@1,LRAP") and len(lines) == 3


@pytest.mark.parametrize("argv", [[], ["bogus"], ["train", "--data", "x"], ["predict", "--model-dir", "m"],
                                  ["train", "--data", "d", "--model-dir", "m", "--kind", "svm"]])
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_invalid_config_is_usage_error(workspace, tmp_path):
    (tmp_path / "bad.json").write_text(json.dumps({"kind": "svm"}))
    assert main(["train", "--data", str(workspace / "data"), "--model-dir", str(tmp_path / "m"),
                 "--config", str(tmp_path / "bad.json")]) == 1


def test_data_errors(workspace, tmp_path):
    (tmp_path / "bad.jsonl").write_text('{"full_name": "a/b", "stars": "ten"}\n')
    assert main(["prepare", "--input", str(tmp_path / "bad.jsonl"), "--topics", str(workspace / "t.json"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["train", "--data", str(tmp_path / "missing"), "--model-dir", str(tmp_path / "m")]) == 2


def test_model_errors(workspace, tmp_path):
    assert main(["evaluate", "--model-dir", str(tmp_path / "none"), "--data", str(workspace / "data")]) == 3
    manifest = json.loads((workspace / "m" / "manifest.json").read_text())
    (tmp_path / "m2").mkdir()
    manifest["format_version"] = 2
    (tmp_path / "m2" / "manifest.json").write_text(json.dumps(manifest))
    assert main(["predict", "--model-dir", str(tmp_path / "m2"), "--repo-file", "x.json"]) == 3


def _free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_serve_subcommand(workspace):
    port = _free_port()
    proc = subprocess.Popen([sys.executable, "-m", "repotopics.cli", "serve", "--model-dir",
                             str(workspace / "m"), "--listen", f"127.0.0.1:{port}"],
                            stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    try:
        deadline = time.time() + 20
        while True:
            try:
                with urllib.request.urlopen(f"http://127.0.0.1:{port}/healthz", timeout=2) as resp:
                    assert json.loads(resp.read())["status"] == "ok"
                    break
            except (urllib.error.URLError, ConnectionError):
                if time.time() > deadline:
                    raise
                time.sleep(0.1)
        req = urllib.request.Request(f"http://127.0.0.1:{port}/api/v1/predict",
                                     data=json.dumps({"readme": "hello", "n": 2}).encode(), method="POST")
        with urllib.request.urlopen(req, timeout=5) as resp:
            assert len(json.loads(resp.read())["recommendations"]) == 2
        try:
            urllib.request.urlopen(f"http://127.0.0.1:{port}/api/v1/predict-repo?full_name=a/b", timeout=5)
        except urllib.error.HTTPError as exc:
            assert exc.code == 501
        else:
            pytest.fail("fetch should be disabled by default")
    finally:
        proc.terminate()
        proc.wait(timeout=10)
