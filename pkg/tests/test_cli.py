import csv

import numpy as np
import pytest

from metricprior.cli import main
from metricprior.mesh import load_off
from metricprior.model import load_checkpoint

DATA = ["--subjects", "2", "--poses", "2", "--resolution", "4"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "run.cfg"
    cfg.write_text("warmup_iters = 3\ntotal_iters = 5\nlatent_dim = 8\npoint_layers = 8,8\n"
                   "head_layers = 8\ndecoder_layers = 8\nlandmarks = 10\nlearning_rate = 0.001\n")
    assert main(["gen-data", "--out", str(root / "data"), *DATA]) == 0
    assert main(["train", "--config", str(cfg), "--data", str(root / "data"), "--out", str(root / "ckpt")]) == 0
    return root


def test_gen_data_files(workspace):
    assert sorted(p.name for p in (workspace / "data").glob("*.off")) == ["0_0.off", "0_1.off", "1_0.off", "1_1.off"]


def test_train_outputs(workspace):
    for name in ("checkpoint.ckpt", "trace.csv", "train.cfg"):
        assert (workspace / "ckpt" / name).exists()
    assert load_checkpoint(workspace / "ckpt" / "checkpoint.ckpt").config.latent_dim == 8


def test_encode_decode_round_trip(workspace, tmp_path):
    ck = str(workspace / "ckpt" / "checkpoint.ckpt")
    mesh = str(workspace / "data" / "0_1.off")
    assert main(["encode", mesh, "--ckpt", ck, "--out", str(tmp_path / "z.csv")]) == 0
    z = np.loadtxt(tmp_path / "z.csv", delimiter=",")
    assert z.shape == (8,)
    assert main(["decode", str(tmp_path / "z.csv"), "--ckpt", ck, "--template", mesh,
                 "--out", str(tmp_path / "d.off")]) == 0
    assert load_off(tmp_path / "d.off").n_vertices == 34


def test_latent_commands(workspace, tmp_path):
    ck = str(workspace / "ckpt" / "checkpoint.ckpt")
    a, b, c = (str(workspace / "data" / f) for f in ("0_0.off", "1_1.off", "0_1.off"))
    assert main(["interpolate", a, b, "--steps", "3", "--ckpt", ck, "--out", str(tmp_path / "path")]) == 0
    assert len(list((tmp_path / "path").glob("*.off"))) == 3
    assert main(["swap", a, b, "--ckpt", ck, "--out", str(tmp_path / "s.off")]) == 0
    assert main(["analogy", a, b, c, "--ckpt", ck, "--out", str(tmp_path / "an.off")]) == 0


def test_complete(workspace, tmp_path):
    ck = str(workspace / "ckpt" / "checkpoint.ckpt")
    X = load_off(workspace / "data" / "1_0.off").vertices
    np.savetxt(tmp_path / "part.csv", X[X[:, 0] > np.median(X[:, 0])], delimiter=",")
    assert main(["complete", str(tmp_path / "part.csv"), "--ckpt", ck, "--iters", "5", "--data",
                 str(workspace / "data"), "--out", str(tmp_path / "c.off")]) == 0


def test_eval(workspace, tmp_path):
    ck = str(workspace / "ckpt" / "checkpoint.ckpt")
    assert main(["eval", "--ckpt", ck, "--data", str(workspace / "data"), "--out", str(tmp_path / "r.csv")]) == 0
    rows = list(csv.reader(open(tmp_path / "r.csv")))
    assert rows[0] == ["metric", "value"]
    assert {r[0] for r in rows[1:]} == {"interpolation_error", "interpolation_error_decoded", "disentanglement_error"}


def test_geodesic_single_and_all(workspace, tmp_path, capsys):
    mesh = str(workspace / "data" / "0_0.off")
    assert main(["geodesic", mesh, "--source", "2", "--colored", str(tmp_path / "g.off")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "vertex,distance"
    assert out[3].startswith("2,0.0")
    assert (tmp_path / "g.off").read_text().startswith("COFF")
    assert main(["geodesic", mesh, "--all", "--out", str(tmp_path / "D.csv")]) == 0
    D = np.loadtxt(tmp_path / "D.csv", delimiter=",")
    assert D.shape == (34, 34)


def test_fit_metric(workspace, tmp_path):
    a, b = (str(workspace / "data" / f) for f in ("0_0.off", "0_1.off"))
    assert main(["fit-metric", a, "--target", b, "--iters", "3", "--out", str(tmp_path / "f.off")]) == 0


def test_exit_code_validation(tmp_path):
    (tmp_path / "bad.off").write_text("OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n")
    assert main(["geodesic", str(tmp_path / "bad.off"), "--source", "0"]) == 2
    assert main(["geodesic", str(tmp_path / "missing.off"), "--all"]) == 2
    assert main(["eval", "--data", "synthetic"]) == 2  # no --ckpt


def test_exit_code_unknown_config_key(tmp_path):
    (tmp_path / "c.cfg").write_text("no_such_key = 1\n")
    assert main(["show-config", "--config", str(tmp_path / "c.cfg")]) == 2


def test_exit_code_numerical(workspace, tmp_path):
    cfg = tmp_path / "boom.cfg"
    cfg.write_text("warmup_iters = 1\ntotal_iters = 40\nlatent_dim = 8\npoint_layers = 8\nhead_layers = 8\n"
                   "decoder_layers = 8\nlearning_rate = 1e30\n")
    assert main(["train", "--config", str(cfg), "--data", str(workspace / "data"), "--out", str(tmp_path / "o")]) == 3
    assert (tmp_path / "o" / "last_good.ckpt").exists()


def test_show_config_seed_override(capsys):
    assert main(["show-config", "--seed", "11"]) == 0
    assert "seed = 11" in capsys.readouterr().out


def test_check_grad(capsys):
    assert main(["check-grad", "--seeds", "1"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 9 and all(line.startswith("PASS") for line in lines)
