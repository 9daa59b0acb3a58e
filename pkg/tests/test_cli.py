import io
import subprocess
import sys

import pytest

from chrono_rnn.cli import (
    CSV_HEADER, UsageError, emit_csv, emit_summary_csv, main, parse_args, read_csv,
)
from chrono_rnn.train import MetricsLog, MetricsRecord, TrainConfig, run_experiment

TINY = ["--task", "warp", "--seq-len", "15", "--hidden", "6", "--batch", "4",
        "--train-samples", "8", "--eval-samples", "4", "--epochs", "1", "--eval-every", "1"]


def test_example_config():
    argv = "train --task copy --T 100 --arch lstm --init chrono --t-max 150 --hidden 128 --seed 7".split()
    command, opts, cfg = parse_args(argv)
    assert command == "train"
    assert (cfg.task, cfg.T, cfg.arch, cfg.init, cfg.t_max, cfg.hidden, cfg.seed) == (
        "copy", 100, "lstm", "chrono", 150.0, 128, 7)
    assert cfg.t_max == 1.5 * cfg.T


def test_no_flags_defaults():
    _, opts, cfg = parse_args(["train"])
    assert cfg == TrainConfig().resolved()
    assert opts["runs"] == 5 and opts["out"] is None


@pytest.mark.parametrize("argv", [
    ["train", "--T", "0"], ["train", "--init", "chrono", "--arch", "rnn"], ["train", "--bogus"],
    ["train", "--hidden", "x"], ["nope"], ["export-data"], ["baseline", "--task", "warp"],
])
def test_usage_errors_exit_1(argv, capsys):
    with pytest.raises(SystemExit) as ex:
        code = main(argv)
        raise SystemExit(code)
    assert ex.value.code == 1


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as ex:
        main(["train", "--help"])
    assert ex.value.code == 0
    assert "--max-warp" in capsys.readouterr().out


def test_csv_header_only(tmp_path):
    path = tmp_path / "m.csv"
    emit_csv(MetricsLog(), path)
    assert path.read_bytes() == (",".join(CSV_HEADER) + "\n").encode()


def test_csv_two_lines_and_round_trip(tmp_path):
    log = MetricsLog()
    log.append(MetricsRecord(0, 2.302585092994046, 2.302585092994046, 0.1, 0.001, 0.0))
    path = tmp_path / "m.csv"
    emit_csv(log, path)
    text = path.read_text(encoding="utf-8")
    assert text.endswith("\n") and len(text.splitlines()) == 2
    assert text.splitlines()[1] == "0,2.3025850929940459,2.3025850929940459,0.10000000000000001,0.001,0"
    assert read_csv(path).records == log.records


def test_csv_reemit_byte_identical_and_exact(tmp_path):
    log = run_experiment(parse_args(["train"] + TINY)[2])
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_csv(log, a)
    emit_csv(read_csv(a), b)
    assert a.read_bytes() == b.read_bytes()
    assert read_csv(a).records == log.records


def test_summary_csv_format():
    buf = io.StringIO()
    emit_summary_csv([(0, "eval_loss", 1.0, 0.5, 1.5)], buf)
    assert buf.getvalue() == "iteration,metric,mean,min,max\n0,eval_loss,1,0.5,1.5\n"


@pytest.mark.parametrize("argv,expected", [
    (["--task", "copy", "--T", "500"], "closed_form=0.039989"),
    (["--task", "adding"], "closed_form=0.166667"),
    (["--task", "copy", "--T", "2000"], "closed_form=0.010294"),
])
def test_baseline_prints(argv, expected, capsys):
    assert main(["baseline", "--samples", "2000"] + argv) == 0
    out = capsys.readouterr().out
    assert expected in out and "monte_carlo=" in out and "samples=2000" in out


def test_config_file_precedence(tmp_path):
    conf = tmp_path / "run.conf"
    conf.write_text("# example\ntask = copy\nT = 40\nhidden = 16  # inline\nseed=3\n", encoding="utf-8")
    _, _, cfg = parse_args(["train", "--config", str(conf), "--hidden", "32"])
    assert (cfg.task, cfg.T, cfg.hidden, cfg.seed) == ("copy", 40, 32, 3)


def test_config_file_unknown_key(tmp_path):
    conf = tmp_path / "bad.conf"
    conf.write_text("colour = red\n", encoding="utf-8")
    with pytest.raises(UsageError):
        parse_args(["train", "--config", str(conf)])
    assert main(["train", "--config", str(conf)]) == 1
    assert main(["train", "--config", str(tmp_path / "missing.conf")]) == 1


def test_train_writes_csv(tmp_path):
    out = tmp_path / "run.csv"
    assert main(["train", "--out", str(out)] + TINY) == 0
    log = read_csv(out)
    assert [r.iteration for r in log] == [0, 1, 2]


def test_train_unwritable_path_exits_2(tmp_path):
    assert main(["train", "--out", str(tmp_path / "no" / "dir.csv")] + TINY) == 2


def test_multirun_files(tmp_path):
    out = tmp_path / "mr.csv"
    assert main(["multirun", "--runs", "2", "--seed", "4", "--out", str(out)] + TINY) == 0
    assert (tmp_path / "mr.seed4.csv").exists() and (tmp_path / "mr.seed5.csv").exists()
    summary = (tmp_path / "mr.summary.csv").read_text(encoding="utf-8").splitlines()
    assert summary[0] == "iteration,metric,mean,min,max" and len(summary) == 1 + 3 * 4


def test_gradcheck_command(capsys):
    assert main(["gradcheck", "--arch", "lstm"]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 1 and out[0].startswith("lstm") and out[0].endswith("ok")


def test_export_data(tmp_path):
    path = tmp_path / "d.tsv"
    assert main(["export-data", "--task", "copy", "--T", "5", "--train-samples", "3",
                 "--export", str(path)]) == 0
    assert len(path.read_text(encoding="utf-8").splitlines()) == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "chrono_rnn", "baseline", "--task", "adding",
                          "--samples", "100"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.166667" in res.stdout
