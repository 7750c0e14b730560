import subprocess
import sys
from pathlib import Path

import pytest

from mecsim.cli import main
from mecsim.experiment import read_csv

DESK = """
[world]
K = 3
M = 2
Z = 2
[train]
Mt = 3
epi = 4
epc = 2
hidden = [8, 8]
[experiment]
eval_episodes = 3
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "desk.toml"
    p.write_text(DESK)
    return p


def test_selftest_exit_zero(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") >= 4


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "mecsim", "--help"], capture_output=True, text=True)
    assert done.returncode == 0 and "validate-config" in done.stdout


def test_validate_config(cfg_path, tmp_path, capsys):
    assert main(["validate-config", "--config", str(cfg_path)]) == 0
    assert main(["validate-config", "--config", str(cfg_path), "--dump"]) == 0
    dumped = capsys.readouterr().out
    assert "K = 3" in dumped and "[propulsion]" in dumped
    bad = tmp_path / "bad.toml"
    bad.write_text("[world]\n\nomega = -1\n")
    assert main(["validate-config", "--config", str(bad)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_train_then_evaluate_reproduces_metrics(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--seed", "4", "--out", str(out)]) == 0
    trained = read_csv(out / "episodes.csv")
    assert len(read_csv(out / "train_log.csv")) == 3
    ev = tmp_path / "ev"
    assert main(["evaluate", "--config", str(cfg_path), "--seed", "4", "--out", str(ev),
                 "--checkpoint", str(out / "checkpoints" / "seed4_p0.ckpt")]) == 0
    assert read_csv(ev / "evaluate.csv") == trained


def test_corrupt_checkpoint(cfg_path, tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(cfg_path), "--seed", "0", "--out", str(out)]) == 0
    ckpt = out / "checkpoints" / "seed0_p0.ckpt"
    data = bytearray(ckpt.read_bytes())
    data[-5] ^= 0xFF
    ckpt.write_bytes(bytes(data))
    capsys.readouterr()
    code = main(["evaluate", "--config", str(cfg_path), "--out", str(tmp_path / "e"),
                 "--checkpoint", str(ckpt)])
    assert code != 0
    assert "corrupt" in capsys.readouterr().err
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"hello world")
    assert main(["evaluate", "--config", str(cfg_path), "--checkpoint", str(junk)]) != 0
    assert "not a checkpoint" in capsys.readouterr().err


def test_evaluate_greedy_without_checkpoint(cfg_path, tmp_path):
    assert main(["evaluate", "--config", str(cfg_path), "--policy", "greedy", "--seed", "1",
                 "--out", str(tmp_path)]) == 0
    assert len(read_csv(tmp_path / "evaluate.csv")) == 3
    assert main(["evaluate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 2


def test_sweep_command(tmp_path):
    p = tmp_path / "s.toml"
    p.write_text(DESK.replace("[experiment]", '[experiment]\nseeds = [0, 1]\npolicy = "greedy"\n'
                              'sweep = "eps_c"\nsweep_values = [0.0, 40.0]'))
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "summary.csv")) == 2


def test_missing_config_is_reported(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.toml")]) == 2
    assert "nope.toml" in capsys.readouterr().err


def test_shipped_desk_config_validates():
    path = Path(__file__).resolve().parent.parent / "configs" / "desk.toml"
    assert main(["validate-config", "--config", str(path)]) == 0
