import json

import pytest

from mcsnet.cli import main
from mcsnet.graph import load_dataset, load_labels


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    d = root / "d"
    assert main(["gen-data", "--out", str(d), "--num-sources", "10", "--corpus-count", "8",
                 "--query-count", "6", "--min-nodes", "5", "--max-nodes", "7"]) == 0
    assert main(["label", "--data", str(d), "--workers", "1"]) == 0
    assert main(["train", "--data", str(d), "--out", str(root / "run"), "--epochs", "2",
                 "--batch-size", "16", "--dtype", "float64"]) == 0
    return root


def test_generated_files(data):
    d = data / "d"
    assert len(load_dataset(d / "corpus.txt")) == 8 and len(load_dataset(d / "queries.txt")) == 6
    assert len(load_labels(d / "labels.txt")) == 48
    man = json.loads((d / "manifest_gen-data.json").read_text())
    assert man["command"] == "gen-data" and man["seed"] == 0


def test_train_outputs(data):
    run = data / "run"
    doc = json.loads((run / "checkpoint.json").read_text())
    assert doc["meta"]["model"]["kind"] == "lmces" and doc["meta"]["dtype"] == "float64"
    assert set(doc["meta"]["split"]) == {"train", "val", "test"}
    assert (run / "history.tsv").read_text().splitlines()[0] == "epoch\ttrain_mse\tval_mse"
    assert (run / "manifest_train.json").exists()


def test_eval_checkpoint(data, capsys):
    assert main(["eval", "--data", str(data / "d"), "--checkpoint", str(data / "run" / "checkpoint.json"),
                 "--out", str(data / "ev")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0].startswith("mse\t")
    assert (data / "ev" / "report.tsv").exists() and (data / "ev" / "scores.tsv").exists()


def test_eval_oracle_is_perfect(data, capsys):
    assert main(["eval", "--data", str(data / "d"), "--target", "mces", "--split", "all",
                 "--out", str(data / "orc")]) == 0
    lines = dict(line.split("\t", 1) for line in capsys.readouterr().out.splitlines())
    assert lines["mse"].split("\t")[0] == "0"
    assert lines["ktau"].split("\t")[0] == "1"


def test_retrieve_and_explain(data, capsys):
    ck = str(data / "run" / "checkpoint.json")
    assert main(["retrieve", "--data", str(data / "d"), "--checkpoint", ck, "--query-id", "q0",
                 "--k", "3", "--out", str(data / "rt")]) == 0
    rows = (data / "rt" / "ranking_q0.tsv").read_text().splitlines()
    assert [r.split("\t")[1] for r in rows] == ["1", "2", "3"]
    scores = [float(r.split("\t")[3]) for r in rows]
    assert scores == sorted(scores, reverse=True)
    assert main(["explain", "--data", str(data / "d"), "--checkpoint", ck, "--query-id", "q0",
                 "--corpus-id", "c0", "--out", str(data / "ex")]) == 0
    text = (data / "ex" / "alignment_q0_c0.tsv").read_text().splitlines()
    assert text[0].startswith("q0\tc0\t") and text[1].startswith("matched_edges")


def test_float32_default(data):
    assert main(["train", "--data", str(data / "d"), "--out", str(data / "run32"), "--epochs", "1",
                 "--model", "baseline"]) == 0
    doc = json.loads((data / "run32" / "checkpoint.json").read_text())
    assert doc["meta"]["dtype"] == "float32"
    assert main(["eval", "--data", str(data / "d"), "--checkpoint", str(data / "run32" / "checkpoint.json"),
                 "--out", str(data / "ev32")]) == 0
    assert main(["explain", "--data", str(data / "d"), "--checkpoint", str(data / "run32" / "checkpoint.json"),
                 "--query-id", "q0", "--corpus-id", "c0", "--out", str(data / "ex32")]) == 2


def test_config_file(data, tmp_path):
    cfg = tmp_path / "train.cfg"
    cfg.write_text("# small run\nmodel = baseline\nepochs = 1\nbatch-size = 32\ndtype = float64\n")
    assert main(["train", "--config", str(cfg), "--data", str(data / "d"), "--out", str(tmp_path / "r"),
                 "--epochs", "2"]) == 0
    doc = json.loads((tmp_path / "r" / "checkpoint.json").read_text())
    assert doc["meta"]["model"]["kind"] == "baseline" and doc["meta"]["train"]["max_epochs"] == 2
    cfg.write_text("colour = red\n")
    assert main(["train", "--config", str(cfg), "--data", str(data / "d"), "--out", str(tmp_path / "r")]) == 4


def test_data_dir_from_environment(data, monkeypatch, tmp_path):
    monkeypatch.setenv("MCSNET_DATA", str(data / "d"))
    assert main(["eval", "--target", "mccs", "--split", "all", "--out", str(tmp_path / "o")]) == 0


def test_error_codes(data, tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(tmp_path / "x")]) == 3
    assert capsys.readouterr().err.startswith("error\tMissingFileError\t")
    assert main(["train", "--model", "gnn", "--out", "x"]) == 2
    assert main(["eval", "--data", str(data / "d"), "--out", str(tmp_path / "e")]) == 2
    assert main(["label", "--data", str(data / "d"), "--out", str(tmp_path / "l.txt"), "--budget", "1",
                 "--workers", "1"]) == 5
    assert main(["retrieve", "--data", str(data / "d"), "--checkpoint", str(data / "run" / "checkpoint.json"),
                 "--query-id", "zz", "--out", str(tmp_path / "r")]) == 4
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "queries.txt").write_text("q0\tthree\t0-1\n")
    (bad / "corpus.txt").write_text("c0\t2\t0-1\n")
    assert main(["label", "--data", str(bad), "--workers", "1"]) == 4


def test_verify_gossip_passes(tmp_path, capsys):
    assert main(["verify", "--suite", "gossip", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    assert (tmp_path / "verify.tsv").exists() and (tmp_path / "manifest_verify.json").exists()


def test_verify_exit_code_matches_report(tmp_path, capsys):
    rc = main(["verify", "--suite", "sinkhorn", "--quick", "--out", str(tmp_path)])
    lines = capsys.readouterr().out.splitlines()
    assert rc == (7 if any(line.startswith("FAIL") for line in lines) else 0)
