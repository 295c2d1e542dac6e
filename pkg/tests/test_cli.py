import json
import subprocess
import sys

import pytest

from iristraverse import cli
from iristraverse.imageio import read_pgm

from test_harness import white_weights


def run(*args):
    return cli.main([str(a) for a in args])


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_generate(tmp_path, capsys):
    assert run("generate", "--out", tmp_path, "--seed", 5, "--resolution", "80x60") == cli.EXIT_OK
    img = read_pgm(tmp_path / "seed_5.pgm")
    assert img.shape == (60, 80)
    assert (tmp_path / "seed_5_mask.pgm").exists()
    info = json.loads((tmp_path / "seed_5.json").read_text())
    assert info["seed"] == 5 and len(info["latent"]) == 32
    assert set(info["params"]) >= {"r_pupil", "r_iris", "aperture"}
    assert json.loads(capsys.readouterr().out)["seed"] == 5


def test_generate_png(tmp_path):
    cfg = write(tmp_path, '[output]\nformat = "png"\n')
    assert run("generate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "seed_0.png").exists()


def test_traverse(tmp_path, capsys):
    cfg = write(tmp_path, '[[attributes]]\nkind = "iris_radius"\nrelative = 0.9\n')
    assert run("traverse", "--config", cfg, "--out", tmp_path / "t", "--seed", 2) == cli.EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["status"] == "converged"
    assert (tmp_path / "t" / "trajectory.jsonl").exists()


def test_invert_from_image(tmp_path):
    assert run("generate", "--out", tmp_path, "--seed", 77) == 0
    cfg = write(tmp_path, f'[invert]\nimage = "{tmp_path / "seed_77.pgm"}"\ntolerance = 1e-3\n')
    assert run("invert", "--config", cfg, "--out", tmp_path / "inv") == cli.EXIT_OK
    summary = json.loads((tmp_path / "inv" / "latent.json").read_text())
    assert summary["status"] == "converged" and summary["mse"] < 1e-3
    assert (tmp_path / "inv" / "reconstruction.pgm").exists()


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "[decoder]\nbogus = 1\n")
    assert run("generate", "--config", cfg) == cli.EXIT_CONFIG
    assert "bogus" in capsys.readouterr().err
    assert run("generate", "--config", tmp_path / "missing.toml") == cli.EXIT_CONFIG
    assert run("generate", "--resolution", "huge", "--out", tmp_path) == cli.EXIT_CONFIG
    assert run("traverse", "--out", tmp_path) == cli.EXIT_CONFIG  # no attributes listed


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as info:
        run("fly")
    assert info.value.code == 2


def test_io_error_exit_code(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("generate", "--out", blocker / "sub") == cli.EXIT_IO
    assert "file" in capsys.readouterr().err


def test_divergence_exit_code(tmp_path):
    weights = white_weights(tmp_path)
    cfg = write(tmp_path, f"""
[decoder]
kind = "conv"
weights = "{weights}"

[matrix]
seeds = [0]
attributes = ["pupil_radius"]
directions = ["increase"]
target_count = 1
identity_arms = [false]
""")
    assert run("matrix", "--config", cfg, "--out", tmp_path / "m") == cli.EXIT_DIVERGED
    assert (tmp_path / "m" / "scores.csv").exists()


def test_matrix_and_space_compare(tmp_path, capsys):
    cfg = write(tmp_path, """
[matrix]
seeds = [0]
attributes = ["pupil_radius"]
directions = ["decrease"]
target_count = 1
save_artifacts = false

[space_compare]
seeds = [0]
directions = ["decrease"]
target_count = 1
save_artifacts = false
""")
    assert run("matrix", "--config", cfg, "--out", tmp_path / "m", "--workers", 1) == 0
    assert run("space-compare", "--config", cfg, "--out", tmp_path / "s") == 0
    assert (tmp_path / "s" / "space_compare.csv").read_text().count("\n") == 3


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "iristraverse.cli", "generate", "--out", str(tmp_path),
                           "--resolution", "64x48"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "seed_0.pgm").exists()
