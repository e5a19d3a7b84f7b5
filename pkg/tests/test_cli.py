import csv
import functools

import numpy as np
import pytest

from ginet import cli
from ginet.config import load_config
from ginet.gradcheck import run_suite
from ginet.io import read_netpbm, save_checkpoint
from ginet.model import init_params

FAST = ["--set", "train.total_iters=12", "--set", "train.eval_interval=6",
        "--set", "train.log_interval=3"]


def read_metrics(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert cli.main(["train", "--out", str(out), *FAST]) == 0
    return out


def test_train_outputs(trained):
    rows = read_metrics(trained / "metrics.csv")
    assert [int(r["iter"]) for r in rows] == [0, 3, 5, 6, 9, 11]
    assert rows[-1]["miou"] != "" and rows[0]["miou"] == ""
    assert (trained / "final.ckpt").read_bytes()[:4] == b"GINT"


def test_lambda_zero_override(tmp_path):
    assert cli.main(["train", "--out", str(tmp_path), *FAST, "--set", "lambda=0"]) == 0
    assert all(float(r["loss_sc"]) == 0.0 for r in read_metrics(tmp_path / "metrics.csv"))


def test_eval_matches_final_row_and_is_stable(trained, tmp_path, capsys):
    ck = str(trained / "final.ckpt")
    assert cli.main(["eval", "--checkpoint", ck, "--out", str(tmp_path)]) == 0
    first = capsys.readouterr().out
    assert cli.main(["eval", "--checkpoint", ck, "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out == first
    final = read_metrics(trained / "metrics.csv")[-1]
    with open(tmp_path / "eval.csv") as fh:
        ev = {r[0]: r[1] for r in csv.reader(fh)}
    assert float(ev["miou"]) == float(final["miou"])


def test_missing_and_invalid_config(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "none.cfg")]) == 2
    assert cli.main(["train", "--out", str(tmp_path), "--set", "model.node_dim=7"]) == 2
    assert "node_dim" in capsys.readouterr().err
    assert cli.main(["frobnicate"]) == 2


def test_corrupted_checkpoint(trained, tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    raw = bytearray((trained / "final.ckpt").read_bytes())
    raw[:4] = b"XXXX"
    bad.write_bytes(bytes(raw))
    assert cli.main(["eval", "--checkpoint", str(bad)]) == 2
    assert "bad.ckpt" in capsys.readouterr().err
    assert cli.main(["eval", "--checkpoint", str(tmp_path / "absent.ckpt")]) == 2


def test_checkpoint_class_mismatch(trained):
    assert cli.main(["eval", "--checkpoint", str(trained / "final.ckpt"),
                     "--set", "data.classes=sky,grass,road,ball"]) == 2


def test_non_finite_exit_code(tmp_path):
    with np.errstate(all="ignore"):
            assert cli.main(["train", "--out", str(tmp_path), *FAST, "--set", "train.base_lr=1e30"]) == 3


def test_inspect_projection_untrained(tmp_path):
    cfg = load_config()
    ck = tmp_path / "init.ckpt"
    save_checkpoint(ck, cfg.model, init_params(cfg.model, 0))
    out = tmp_path / "maps"
    assert cli.main(["inspect-projection", "--checkpoint", str(ck), "--out", str(out)]) == 0
    pgms = sorted(p.name for p in out.glob("*.pgm"))
    assert pgms == [f"node_{i:03d}.pgm" for i in range(8)]
    assert len(list(out.glob("*.ppm"))) == 1
    heat = read_netpbm(out / "node_000.pgm").astype(float)
    assert heat.shape == (8, 8) and heat.max() / max(heat.min(), 1) < 4
    assert cli.main(["inspect-projection", "--checkpoint", str(ck), "--sample", "99"]) == 2


def test_gradcheck_negative_control(monkeypatch, capsys):
    monkeypatch.setattr(cli, "run_suite", functools.partial(run_suite, only={"sc_loss", "relu"}))
    assert cli.main(["gradcheck"]) == 0
    assert capsys.readouterr().out.count("[PASS]") == 6
    assert cli.main(["gradcheck", "--inject-fault", "sc_loss"]) == 1
    assert "sc_loss" in capsys.readouterr().err
    assert cli.main(["gradcheck", "--inject-fault", "nonexistent"]) == 2


def test_sweep_small(tmp_path):
    assert cli.main(["sweep", "--out", str(tmp_path), "--set", "train.total_iters=2",
                     "--lambdas", "0,0.5"]) == 0
    names = sorted(p.name for p in (tmp_path / "sweep").iterdir())
    assert names == ["metrics_lambda_0.0.csv", "metrics_lambda_0.5.csv"]


def test_embeddings_flag(tmp_path):
    vec = tmp_path / "v.txt"
    vec.write_text("sky " + " ".join(["0.5"] * 50) + "\n")
    assert cli.main(["train", "--out", str(tmp_path), *FAST, "--embeddings", str(vec)]) == 0
    assert np.isfinite(float(read_metrics(tmp_path / "metrics.csv")[-1]["loss_total"]))
    bad = tmp_path / "bad.txt"
    bad.write_text("sky 1 2\n")
    assert cli.main(["train", "--out", str(tmp_path), *FAST, "--embeddings", str(bad)]) == 2
