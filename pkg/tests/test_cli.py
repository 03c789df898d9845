import json
import shutil
import subprocess

import numpy as np
import pytest
from PIL import Image

from conftest import write_pairs
from hwmnet.cli import EXIT_INVALID, EXIT_IO, EXIT_OK, run, selfcheck
from hwmnet.checkpoint import load_checkpoint

TRAIN_ARGS = ["--desk", "--iters", "3", "--batch", "1", "--patch", "32", "--width", "8"]


@pytest.fixture
def trained(pair_root, tmp_path):
    out = tmp_path / "run"
    assert run(["train", "--data", str(pair_root), "--out", str(out), *TRAIN_ARGS]) == EXIT_OK
    return out


def test_train_outputs(trained):
    for name in ("last.hwmn", "loss.csv", "loss_curve.png"):
        assert (trained / name).stat().st_size > 0
    assert len((trained / "loss.csv").read_text().splitlines()) == 4
    assert load_checkpoint(trained / "last.hwmn").iteration == 3
    with Image.open(trained / "loss_curve.png") as im:
        assert im.format == "PNG"


def test_train_with_eval_and_resume(pair_root, tmp_path):
    args = ["train", "--data", str(pair_root), *TRAIN_ARGS, "--iters", "6"]
    out = tmp_path / "r"
    assert run(args + ["--out", str(out), "--eval-data", str(pair_root), "--eval-every", "3"]) == EXIT_OK
    rows = (out / "eval.csv").read_text().splitlines()
    assert rows[0] == "iteration,psnr_db,ssim" and [r.split(",")[0] for r in rows[1:]] == ["3", "6"]
    # Interrupt after 3 iterations, then resume to 6: identical weights.
    half = tmp_path / "half"
    assert run(["train", "--data", str(pair_root), *TRAIN_ARGS, "--iters", "6", "--out", str(half),
                "--checkpoint-every", "3"]) == EXIT_OK
    resumed = tmp_path / "resumed"
    assert run(args + ["--out", str(resumed), "--resume", str(half / "ckpt_0000003.hwmn")]) == EXIT_OK
    a, b = load_checkpoint(out / "last.hwmn"), load_checkpoint(resumed / "last.hwmn")
    assert a.iteration == b.iteration == 6
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_infer_then_eval(trained, pair_root, tmp_path, capsys):
    enhanced = tmp_path / "enh"
    assert run(["infer", "--weights", str(trained / "last.hwmn"), "--input", str(pair_root / "low"),
                "--output", str(enhanced)]) == EXIT_OK
    assert sorted(p.name for p in enhanced.iterdir()) == ["000.png", "001.png", "002.png"]
    capsys.readouterr()
    assert run(["eval", "--low", str(enhanced), "--gt", str(pair_root / "high"), "--out", str(tmp_path / "m")]) == 0
    direct = capsys.readouterr().out
    assert run(["eval", "--weights", str(trained / "last.hwmn"), "--low", str(pair_root / "low"),
                "--gt", str(pair_root / "high")]) == EXIT_OK
    assert capsys.readouterr().out == direct
    assert (tmp_path / "m" / "metrics.csv").read_text().startswith("image,psnr_db,ssim")
    assert (tmp_path / "m" / "metrics.png").exists() and (tmp_path / "m" / "metrics.txt").exists()


def test_eval_identical_dirs(pair_root, tmp_path):
    assert run(["eval", "--low", str(pair_root / "high"), "--gt", str(pair_root / "high"),
                "--out", str(tmp_path)]) == EXIT_OK
    last = (tmp_path / "metrics.csv").read_text().splitlines()[-1]
    assert last == "mean,100.000000,1.000000"


def test_eval_center_crop(pair_root, capsys):
    assert run(["eval", "--low", str(pair_root / "low"), "--gt", str(pair_root / "high"),
                "--center-crop", "32"]) == EXIT_OK
    assert "mean" in capsys.readouterr().out


def test_flops(tmp_path, capsys):
    assert run(["flops", "--out", str(tmp_path)]) == EXIT_OK
    text = capsys.readouterr().out
    assert "0.3624 T" in text and "ratio" in text and "parameters 6062916" in text
    assert (tmp_path / "flops.csv").exists() and (tmp_path / "flops.png").exists()


def test_flops_from_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"network": {"levels": 3, "base_width": 16}}))
    assert run(["flops", "--config", str(cfg), "--height", "64", "--width", "64"]) == EXIT_OK
    assert "ratio" not in capsys.readouterr().out


def test_selfcheck():
    results = selfcheck(0)
    assert results and all(ok for _, ok, _ in results)
    assert run(["selfcheck"]) == EXIT_OK


def test_gradcheck_quick(capsys):
    assert run(["gradcheck", "--quick"]) == EXIT_OK
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("argv", [[], ["bogus"], ["flops", "--nope"], ["train", "--data", "x"],
                                  ["flops", "--height", "ten"]])
def test_usage_errors(argv):
    assert run(argv) == EXIT_INVALID


def test_validation_errors(pair_root, tmp_path):
    assert run(["flops", "--net-width", "7"]) == EXIT_INVALID
    assert run(["train", "--data", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert run(["train", "--data", str(pair_root), "--out", str(tmp_path / "o"), *TRAIN_ARGS,
                "--patch", "30"]) == EXIT_INVALID


def test_io_errors(tmp_path, pair_root):
    assert run(["infer", "--weights", str(tmp_path / "none.hwmn"), "--input", str(pair_root / "low"),
                "--output", str(tmp_path / "o")]) == EXIT_IO
    (tmp_path / "bad.hwmn").write_bytes(b"JUNKJUNK")
    assert run(["infer", "--weights", str(tmp_path / "bad.hwmn"), "--input", str(pair_root / "low"),
                "--output", str(tmp_path / "o")]) == EXIT_IO
    (tmp_path / "bad.json").write_text("{not json")
    assert run(["flops", "--config", str(tmp_path / "bad.json")]) == EXIT_IO
    assert run(["flops", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


def test_grey_input_rejected(trained, tmp_path):
    Image.fromarray(np.zeros((16, 16), np.uint8)).save(tmp_path / "g.png")
    assert run(["infer", "--weights", str(trained / "last.hwmn"), "--input", str(tmp_path / "g.png"),
                "--output", str(tmp_path / "o")]) == EXIT_IO


def test_config_mismatch_rejected(trained, pair_root, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"network": {"levels": 4, "base_width": 96}}))
    assert run(["infer", "--weights", str(trained / "last.hwmn"), "--input", str(pair_root / "low"),
                "--output", str(tmp_path / "o"), "--config", str(cfg)]) == EXIT_INVALID


@pytest.mark.skipif(shutil.which("hwmnet") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["hwmnet", "flops", "--height", "64", "--width", "64"], capture_output=True, text=True)
    assert proc.returncode == 0 and "total" in proc.stdout
    assert subprocess.run(["hwmnet", "nope"], capture_output=True).returncode == 1
