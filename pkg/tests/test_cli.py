import csv
import logging

import numpy as np
import pytest

from lumina.checkpoint import checkpoint_load, checkpoint_save
from lumina.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main, read_config
from lumina.data import load_pairs, read_png, to_tensor, to_uint8, write_png
from lumina.networks import ModelParams, enhance


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("LUMINA_THREADS", "1")


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic pairs plus a briefly trained model shared by the CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--count", "2", "--seed", "1", "--size", "24", "--out", str(root / "pairs")]) == 0
    assert main(["train", "--data", str(root / "pairs"), "--out", str(root / "run"),
                 "--epochs", "1", "--crop", "16", "--seed", "2"]) == 0
    return root


def test_exit_codes_distinct():
    assert len({EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_MODEL}) == 4


def test_train_without_data_is_usage_error(capsys, tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == EXIT_USAGE
    err = capsys.readouterr().err
    assert "usage: lumina train" in err and "--data" in err


def test_no_command_and_bad_flag(capsys):
    assert main([]) == EXIT_USAGE
    assert main(["train", "--bogus"]) == EXIT_USAGE
    assert main(["enhance", "--disable", "edge"]) == EXIT_USAGE


def test_synth_outputs(tmp_path, caplog):
    out = tmp_path / "s"
    assert main(["synth", "--count", "4", "--seed", "7", "--size", "20", "--out", str(out)]) == EXIT_OK
    assert sorted(p.name for p in out.iterdir() if p.is_dir()) == [f"pair000{k}" for k in range(4)]
    with caplog.at_level(logging.WARNING):
        assert len(load_pairs(out)) == 4
    assert not caplog.records
    conf = read_config(out / "manifest.txt")
    assert conf["command"] == "synth" and conf["seed"] == "7" and conf["count"] == "4"


def test_synth_same_seed_same_bytes(tmp_path):
    for name in ("a", "b"):
        assert main(["synth", "--count", "2", "--seed", "3", "--size", "20", "--out", str(tmp_path / name)]) == 0
    for f in sorted((tmp_path / "a").rglob("*.png")):
        assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_synth_from_base_dir(tmp_path, rng):
    base = tmp_path / "base"
    base.mkdir()
    write_png(base / "one.png", rng.uniform(size=(20, 22, 3)))
    assert main(["synth", "--base", str(base), "--count", "2", "--out", str(tmp_path / "o")]) == 0
    assert load_pairs(tmp_path / "o")[0].I1.shape == (1, 3, 20, 22)
    assert main(["synth", "--base", str(tmp_path / "nothing"), "--out", str(tmp_path / "o2")]) == EXIT_DATA


def test_train_outputs(workdir):
    run = workdir / "run"
    params = checkpoint_load(run / "model.lumn")
    assert len(params) == len(ModelParams.init(0))
    log = (run / "loss_log.tsv").read_text().splitlines()
    assert log[0].startswith("step\tlr\tL_p") and len(log) == 3
    conf = read_config(run / "manifest.txt")
    assert conf["command"] == "train"
    assert conf["lam"] == "0.2" and conf["epochs"] == "1" and conf["weights"] == "5.0,1.0,1.0,0.1"


def test_manifest_replay_is_byte_identical(workdir, tmp_path):
    assert main(["train", "--config", str(workdir / "run" / "manifest.txt"), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "r" / "model.lumn").read_bytes() == (workdir / "run" / "model.lumn").read_bytes()
    assert (tmp_path / "r" / "loss_log.tsv").read_bytes() == (workdir / "run" / "loss_log.tsv").read_bytes()


def test_config_precedence(workdir, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text(f"# settings\ndata={workdir / 'pairs'}\nepochs=2\ncrop=12\nlr=0.001\n")
    assert main(["train", "--config", str(cfg), "--epochs", "1", "--out", str(tmp_path / "o")]) == 0
    conf = read_config(tmp_path / "o" / "manifest.txt")
    assert conf["epochs"] == "1"      # flag beats file
    assert conf["crop"] == "12"       # file beats default
    assert conf["lr"] == "0.001"
    assert conf["seed"] == "0"        # default


def test_profile_lol(workdir, tmp_path):
    assert main(["train", "--data", str(workdir / "pairs"), "--out", str(tmp_path / "o"),
                 "--epochs", "1", "--crop", "12", "--profile", "lol"]) == 0
    assert read_config(tmp_path / "o" / "manifest.txt")["lam"] == "0.1"


def test_train_bad_config_values(workdir, tmp_path):
    args = ["train", "--data", str(workdir / "pairs"), "--out", str(tmp_path / "o")]
    assert main(args + ["--lambda", "0"]) == EXIT_USAGE
    assert main(args + ["--weights", "1,2"]) == EXIT_USAGE
    assert main(args + ["--crop", "999"]) == EXIT_USAGE
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == EXIT_DATA


def test_enhance_file(workdir, tmp_path):
    src = workdir / "pairs" / "pair0000" / "a.png"
    model = str(workdir / "run" / "model.lumn")
    out1, out2 = tmp_path / "e1.png", tmp_path / "e2.png"
    assert main(["enhance", "--model", model, "--input", str(src), "--output", str(out1)]) == 0
    assert main(["enhance", "--model", model, "--input", str(src), "--output", str(out2)]) == 0
    assert read_png(out1).shape == read_png(src).shape
    assert out1.read_bytes() == out2.read_bytes()
    assert read_config(tmp_path / "e1.manifest.txt")["command"] == "enhance"


def test_enhance_full_ablation_rendering(workdir, tmp_path):
    src = workdir / "pairs" / "pair0001" / "b.png"
    model = workdir / "run" / "model.lumn"
    out = tmp_path / "x.png"
    assert main(["enhance", "--model", str(model), "--input", str(src), "--output", str(out),
                 "--disable", "oec", "--disable", "cg", "--disable", "ce"]) == 0
    d = enhance(checkpoint_load(model), to_tensor(read_png(src)), 0.2, {"oec", "cg", "ce"})
    expected = to_uint8(np.clip(d.L.data * d.R.data, 0, 1)[0].transpose(1, 2, 0))
    got = np.round(read_png(out) * 255).astype(np.uint8)
    np.testing.assert_array_equal(got, expected)


def test_enhance_dir_with_bad_file(workdir, tmp_path):
    inp = tmp_path / "in"
    inp.mkdir()
    for n in ("a", "b"):
        (inp / f"{n}.png").write_bytes((workdir / "pairs" / "pair0000" / f"{n}.png").read_bytes())
    (inp / "c.png").write_bytes(b"garbage")
    rc = main(["enhance", "--model", str(workdir / "run" / "model.lumn"), "--input", str(inp),
               "--output", str(tmp_path / "out"), "--dump-intermediates"])
    assert rc == EXIT_DATA
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert "a.png" in names and "b.png" in names and "c.png" not in names
    for part in ("i", "R", "L", "R_f", "L_f"):
        assert f"a_{part}.png" in names
    assert read_png(tmp_path / "out" / "a_L.png").shape[2] == 3


def test_decompose_writes_intermediates(workdir, tmp_path):
    assert main(["decompose", "--model", str(workdir / "run" / "model.lumn"),
                 "--input", str(workdir / "pairs" / "pair0000" / "a.png"), "--output", str(tmp_path)]) == 0
    assert {p.name for p in tmp_path.glob("a_*.png")} == {f"a_{n}.png" for n in ("i", "R", "L", "R_f", "L_f")}


def test_enhance_model_errors(workdir, tmp_path):
    src = str(workdir / "pairs" / "pair0000" / "a.png")
    bad = tmp_path / "bad.lumn"
    bad.write_bytes(b"LUMX" + b"\0" * 20)
    assert main(["enhance", "--model", str(bad), "--input", src, "--output", str(tmp_path / "o.png")]) == EXIT_MODEL
    assert main(["enhance", "--model", str(tmp_path / "none"), "--input", src,
                 "--output", str(tmp_path / "o.png")]) == EXIT_MODEL
    blob = (workdir / "run" / "model.lumn").read_bytes().replace(b"ce.head.bias", b"ce.tail.bias", 1)
    mismatch = tmp_path / "mismatch.lumn"
    mismatch.write_bytes(blob)
    assert main(["enhance", "--model", str(mismatch), "--input", src,
                 "--output", str(tmp_path / "o.png")]) == EXIT_MODEL


def test_evaluate_identical(tmp_path, rng, capsys):
    for d in ("e", "r"):
        (tmp_path / d).mkdir()
    for k in range(3):
        img = rng.uniform(size=(16, 16, 3))
        write_png(tmp_path / "e" / f"{k}.png", img)
        write_png(tmp_path / "r" / f"{k}.png", img)
    rep = tmp_path / "rep" / "report"
    assert main(["evaluate", "--enhanced", str(tmp_path / "e"), "--reference", str(tmp_path / "r"),
                 "--report", str(rep)]) == 0
    text = (tmp_path / "rep" / "report.txt").read_text()
    assert "mean\t100.0000\t1.000000" in text
    rows = list(csv.DictReader(open(tmp_path / "rep" / "report.csv")))
    assert len(rows) == 3 and all(float(r["ssim"]) == pytest.approx(1.0) for r in rows)


def test_evaluate_fixture_means(tmp_path, rng):
    for d in ("e", "r"):
        (tmp_path / d).mkdir()
    for k in range(3):
        img = rng.uniform(size=(14, 14, 3))
        write_png(tmp_path / "e" / f"{k}.png", img)
        write_png(tmp_path / "r" / f"{k}.png", np.clip(img + 0.05 * rng.normal(size=img.shape), 0, 1))
    assert main(["evaluate", "--enhanced", str(tmp_path / "e"), "--reference", str(tmp_path / "r"),
                 "--report", str(tmp_path / "rep")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "rep.csv")))
    mean_line = [l for l in (tmp_path / "rep.txt").read_text().splitlines() if l.startswith("mean")][0]
    _, mp, ms = mean_line.split("\t")
    assert float(mp) == pytest.approx(np.mean([float(r["psnr_db"]) for r in rows]), abs=1e-4)
    assert float(ms) == pytest.approx(np.mean([float(r["ssim"]) for r in rows]), abs=1e-6)


def test_evaluate_empty_reference(tmp_path, rng):
    (tmp_path / "e").mkdir()
    (tmp_path / "r").mkdir()
    write_png(tmp_path / "e" / "a.png", rng.uniform(size=(12, 12, 3)))
    rc = main(["evaluate", "--enhanced", str(tmp_path / "e"), "--reference", str(tmp_path / "r"),
               "--report", str(tmp_path / "rep")])
    assert rc not in (EXIT_OK, EXIT_USAGE)
    assert "warning" in (tmp_path / "rep.txt").read_text()
    assert main(["evaluate", "--enhanced", str(tmp_path / "e"), "--reference", str(tmp_path / "zz"),
                 "--report", str(tmp_path / "rep")]) == EXIT_DATA


def test_manifest_replay_enhance(workdir, tmp_path):
    src = workdir / "pairs" / "pair0000" / "b.png"
    assert main(["enhance", "--model", str(workdir / "run" / "model.lumn"), "--input", str(src),
                 "--output", str(tmp_path / "o.png"), "--lambda", "0.5", "--disable", "cg"]) == 0
    conf = read_config(tmp_path / "o.manifest.txt")
    assert conf["disable"] == "cg" and conf["lam"] == "0.5"
    assert main(["enhance", "--config", str(tmp_path / "o.manifest.txt"), "--output", str(tmp_path / "p.png")]) == 0
    assert (tmp_path / "o.png").read_bytes() == (tmp_path / "p.png").read_bytes()


def test_checkpoint_written_by_cli_loads(workdir, tmp_path):
    p = checkpoint_load(workdir / "run" / "model.lumn")
    checkpoint_save(p, tmp_path / "again.lumn")
    assert (tmp_path / "again.lumn").read_bytes() == (workdir / "run" / "model.lumn").read_bytes()
