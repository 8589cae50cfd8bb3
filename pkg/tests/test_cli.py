import os

import numpy as np
import pytest

from jumbo import cli
from jumbo.nn import load_model

CONFIG = """\
[benchmark]
name = fig3-grid

[pretrain]
learning_rate = 3e-3
epochs = 40
batch_size = 64

[run]
strategies = jumbo, gp-ucb
budget = 4
seeds = 0-1

[output]
dir = {out}
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(CONFIG.format(out=tmp_path / "out"))
    return p


def read_dir(d):
    return {f: (d / f).read_bytes() for f in sorted(os.listdir(d))}


def test_help_exits_zero(capsys):
    for argv in (["--help"], ["pretrain", "--help"], ["run", "--help"], ["report", "--help"],
                 ["theory", "lemma1", "--help"], ["theory", "mig", "--help"]):
        assert cli.main(argv) == 0
    out = capsys.readouterr().out
    for flag in ("--config", "--model", "--out", "--seeds", "--budget", "--strategy", "--l-alpha",
                 "--epochs", "--delta", "--trials", "--n"):
        assert flag in out


def test_no_command_is_usage_error():
    assert cli.main([]) == 2
    assert cli.main(["theory"]) == 2
    assert cli.main(["theory", "bogus"]) == 2


def test_pretrain_writes_model_and_loss(cfg, tmp_path, capsys):
    assert cli.main(["pretrain", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    m = load_model(out / "model.jmb")
    assert m.latent_dim == 4
    lines = (out / "pretrain_loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_mse,val_mse" and len(lines) == len(m.history) + 1
    assert "aux: mse" in capsys.readouterr().out


def test_pretrain_epochs_zero_is_initialisation(cfg, tmp_path):
    from jumbo.nn import init_model
    assert cli.main(["pretrain", "--config", str(cfg), "--epochs", "0"]) == 0
    m = load_model(tmp_path / "out" / "model.jmb")
    ref = init_model(m.config, 1, ["aux"])
    for name in ref.params:
        np.testing.assert_array_equal(m.params[name], ref.params[name])


def test_missing_dataset_path(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[benchmark]\nname = /nowhere/table.csv\n")
    assert cli.main(["pretrain", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    assert "/nowhere/table.csv" in capsys.readouterr().err


def test_bad_config(tmp_path, capsys):
    p = tmp_path / "c.ini"
    p.write_text("[run]\nbudget = lots\n")
    assert cli.main(["run", "--config", str(p)]) == 2
    p.write_text("[mystery]\nx = 1\n")
    assert cli.main(["run", "--config", str(p)]) == 2
    assert cli.main(["run", "--config", str(tmp_path / "missing.ini")]) == 2
    assert "missing.ini" in capsys.readouterr().err


def test_seed_parsing():
    assert cli.parse_seeds("0-3") == [0, 1, 2, 3]
    assert cli.parse_seeds("1,4, 7-8") == [1, 4, 7, 8]
    for bad in ("", "a", "1,1", "0-2,2", "-3"):
        with pytest.raises(cli.UsageError):
            cli.parse_seeds(bad)


def test_gp_ucb_needs_no_model(cfg, tmp_path):
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb"]) == 0
    assert sorted(os.listdir(tmp_path / "out" / "traces")) == [
        "trace_gp-ucb_seed0.csv", "trace_gp-ucb_seed0.json",
        "trace_gp-ucb_seed1.csv", "trace_gp-ucb_seed1.json"]


def test_jumbo_without_model(cfg, capsys):
    assert cli.main(["run", "--config", str(cfg)]) == 2
    assert "requires a pretrained model" in capsys.readouterr().err


def test_run_and_report_are_deterministic(cfg, tmp_path):
    out = tmp_path / "out"
    assert cli.main(["pretrain", "--config", str(cfg)]) == 0
    model_bytes = (out / "model.jmb").read_bytes()
    loss_bytes = (out / "pretrain_loss.csv").read_bytes()
    args = ["run", "--config", str(cfg), "--model", str(out / "model.jmb")]
    assert cli.main(args) == 0
    assert cli.main(["report", str(out / "traces")]) == 0
    first = read_dir(out / "traces")
    assert cli.main(["pretrain", "--config", str(cfg)]) == 0
    assert (out / "model.jmb").read_bytes() == model_bytes
    assert (out / "pretrain_loss.csv").read_bytes() == loss_bytes
    assert cli.main(args) == 0
    assert cli.main(["report", str(out / "traces")]) == 0
    assert read_dir(out / "traces") == first
    assert not [f for f in os.listdir(out / "traces") if f.endswith(".tmp")]


def test_flags_override_config(cfg, tmp_path):
    out = tmp_path / "elsewhere"
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb", "--seeds", "5",
                     "--budget", "3", "--out", str(out)]) == 0
    lines = (out / "traces" / "trace_gp-ucb_seed5.csv").read_text().splitlines()
    assert len(lines) == 4


def test_l_alpha_flag(cfg, tmp_path):
    assert cli.main(["pretrain", "--config", str(cfg)]) == 0
    model = str(tmp_path / "out" / "model.jmb")
    assert cli.main(["run", "--config", str(cfg), "--model", model, "--strategy", "jumbo",
                     "--l-alpha", "0.05", "--seeds", "0"]) == 0
    assert (tmp_path / "out" / "traces" / "trace_jumbo-0.05_seed0.csv").exists()


def test_report_single_trace(cfg, tmp_path):
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb", "--seeds", "0"]) == 0
    d = tmp_path / "out" / "traces"
    assert cli.main(["report", str(d)]) == 0
    agg = np.genfromtxt(d / "aggregate.csv", delimiter=",", names=True)
    trace = np.genfromtxt(d / "trace_gp-ucb_seed0.csv", delimiter=",", names=True)
    np.testing.assert_array_equal(agg["gpucb_median"], trace["simple_regret"])
    np.testing.assert_array_equal(agg["gpucb_stderr"], 0.0)


def test_report_identical_seeds_zero_stderr(cfg, tmp_path):
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb", "--seeds", "0"]) == 0
    d = tmp_path / "out" / "traces"
    for ext in ("csv", "json"):
        (d / f"trace_gp-ucb_seed9.{ext}").write_bytes((d / f"trace_gp-ucb_seed0.{ext}").read_bytes())
    assert cli.main(["report", str(d)]) == 0
    agg = np.genfromtxt(d / "aggregate.csv", delimiter=",", names=True)
    np.testing.assert_array_equal(agg["gpucb_stderr"], 0.0)


def test_report_mixed_strategies(cfg, tmp_path):
    assert cli.main(["pretrain", "--config", str(cfg)]) == 0
    assert cli.main(["run", "--config", str(cfg), "--model", str(tmp_path / "out" / "model.jmb")]) == 0
    d = tmp_path / "out" / "traces"
    assert cli.main(["report", str(d)]) == 0
    header = (d / "aggregate.csv").read_text().splitlines()[0]
    assert header == "t,gp-ucb_median,gp-ucb_stderr,jumbo-0.1_median,jumbo-0.1_stderr"
    summary = (d / "summary.csv").read_text().splitlines()
    assert summary[0] == "strategy,seeds,final_median,final_stderr" and len(summary) == 3


def test_report_empty_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert cli.main(["report", str(tmp_path / "empty")]) == 2


def test_theory_mig(tmp_path, capsys):
    assert cli.main(["theory", "mig", "--n", "0", "--out", str(tmp_path)]) == 0
    assert "after 0 points: 0 nats" in capsys.readouterr().out
    assert cli.main(["theory", "mig", "--n", "3", "--candidates", "8", "--out", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out


def test_theory_coverage(tmp_path, capsys):
    assert cli.main(["theory", "lemma1", "--delta", "0.1", "--trials", "200", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "tolerance 0.1349" in out
    first = (tmp_path / "theory_lemma1.json").read_bytes()
    assert cli.main(["theory", "lemma1", "--delta", "0.1", "--trials", "200", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "theory_lemma1.json").read_bytes() == first


def test_theory_coverage_full_needs_model(tmp_path):
    assert cli.main(["theory", "lemma1", "--mode", "full", "--out", str(tmp_path)]) == 2


def test_threads_env(cfg, tmp_path, monkeypatch):
    monkeypatch.setenv("JUMBO_THREADS", "2")
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb"]) == 0
    monkeypatch.setenv("JUMBO_THREADS", "many")
    assert cli.main(["run", "--config", str(cfg), "--strategy", "gp-ucb"]) == 2
