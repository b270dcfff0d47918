import csv

import pytest

from dockrl import neural
from dockrl.cli import main

TINY = """
phase_budgets = 6, 6, 6, 6
phase_min_episodes = none
lr_end = none
validate_every = 0
window = 3
batch_size = 8
capacity = 500
max_steps = 25
phase_thresholds = -1e9, -1e9, -1e9, -1e9
"""


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "tiny.cfg"
    cfg.write_text(TINY)
    out = root / "run"
    assert main(["train", "--config", str(cfg), "--seed", "1", "--out", str(out)]) == 0
    return cfg, out


def test_train_outputs(trained):
    _, out = trained
    for k in range(1, 5):
        neural.load_params(out / f"phase{k}.ckpt")
    with open(out / "training_log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["episode", "phase", "return", "epsilon", "loss_mean", "steps", "outcome"]
    assert [int(r["phase"]) for r in rows] == [1] * 3 + [2] * 3 + [3] * 3 + [4] * 3


def test_eval_outputs_and_noise_zero_note(trained, capsys):
    cfg, out = trained
    ev = out / "eval0"
    code = main(["eval", "--checkpoint", str(out / "phase4.ckpt"), "--config", str(cfg), "--noise", "0",
                 "--seed", "0", "--out", str(ev)])
    text = capsys.readouterr().out
    assert "45 unique runs" in text
    results = list(csv.DictReader(open(ev / "results.csv")))
    assert len(results) == 45
    assert code == (0 if all(r["outcome"] == "goal" for r in results) else 1)
    assert (ev / "trajectories.csv").exists()
    assert "Mean Abs. Error" in (ev / "summary.txt").read_text()


def test_eval_noisy_grid(trained):
    cfg, out = trained
    ev = out / "eval1"
    code = main(["eval", "--checkpoint", str(out / "phase4.ckpt"), "--config", str(cfg), "--noise", "1",
                 "--seed", "0", "--out", str(ev)])
    results = list(csv.DictReader(open(ev / "results.csv")))
    assert len(results) == 90
    assert code in (0, 1)


def test_train_abort_exit_code(tmp_path):
    cfg = tmp_path / "hard.cfg"
    cfg.write_text(TINY.replace("-1e9, -1e9, -1e9, -1e9", "1e9, 1e9, 1e9, 1e9"))
    assert main(["train", "--config", str(cfg), "--seed", "0", "--out", str(tmp_path / "o")]) == 1
    assert (tmp_path / "o" / "training_log.csv").exists()


def test_render_writes_ppm(tmp_path):
    out = tmp_path / "v.ppm"
    assert main(["render", "--pose", "0.0,0.5,0", "--out", str(out)]) == 0
    assert out.read_bytes().startswith(b"P6\n1280 960\n255\n")


def test_bad_arguments(tmp_path):
    with pytest.raises(SystemExit):
        main(["render", "--pose", "1,2"])
    assert main(["render", "--pose", "0,0.5,0", "--dt", "-1", "--out", str(tmp_path / "x.ppm")]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"), "--out", str(tmp_path)]) == 2
