import subprocess
import sys

import pytest

from paracont.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGNATION, main, parse_config_file, parse_seeds, parse_sets
from paracont.errors import ConfigError
from paracont.trajlog import TrajectoryLog


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 6
    assert [ln.split()[0] for ln in lines][:3] == ["affine-mimo", "nonaffine-siso", "cubic-siso"]


def test_unknown_example_lists_registry(capsys):
    assert main(["run", "--example", "nope"]) == EXIT_CONFIG
    out = capsys.readouterr()
    assert "unknown example" in out.err
    assert "ident-nl-discrete" in out.out


def test_bad_usage_is_config_error():
    assert main(["run", "--jobs", "many"]) == EXIT_CONFIG


def test_run_writes_csv(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code = main(["run", "--example", "ident-linear", "--set", "t_end=0.5", "--out", str(out)])
    assert code == EXIT_OK
    log = TrajectoryLog.read_csv(out)
    assert log.columns[:3] == ["t", "x1", "u1"]
    assert len(log) == 501
    assert "engine=ident-linear" in capsys.readouterr().out


def test_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# short run\nexample = ident-linear\nt_end = 0.2\nnoise = 0\n")
    out = tmp_path / "a.csv"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    assert len(TrajectoryLog.read_csv(out)) == 201


def test_unknown_parameter(capsys):
    assert main(["run", "--example", "cubic-siso", "--set", "gain=3"]) == EXIT_CONFIG
    assert "unknown parameter" in capsys.readouterr().err


def test_stagnation_exit_code():
    assert main(["run", "--example", "affine-mimo", "--set", "alpha=1e-4"]) == EXIT_STAGNATION


def test_seed_sweep_in_parallel(tmp_path):
    out = tmp_path / "s.csv"
    args = ["run", "--example", "ident-linear", "--set", "t_end=0.3", "--seeds", "1-3", "--jobs", "2", "--out", str(out)]
    assert main(args) == EXIT_OK
    texts = [(tmp_path / f"s_seed{s}.csv").read_text() for s in (1, 2, 3)]
    assert len(set(texts)) == 3


def test_plot(tmp_path):
    csv = tmp_path / "r.csv"
    assert main(["run", "--example", "cubic-siso", "--set", "t_end=2", "--out", str(csv)]) == EXIT_OK
    svg = tmp_path / "r.svg"
    assert main(["plot", str(csv), "--columns", "y1,lambda", "--out", str(svg)]) == EXIT_OK
    text = svg.read_text()
    assert text.lstrip().startswith("<?xml") and "<svg" in text
    again = tmp_path / "r2.svg"
    main(["plot", str(csv), "--columns", "y1,lambda", "--out", str(again)])
    assert again.read_bytes() == svg.read_bytes()


def test_plot_errors(tmp_path, capsys):
    csv = tmp_path / "r.csv"
    csv.write_text("t,x1\n0,1\n")
    assert main(["plot", str(csv), "--columns", "y9", "--out", str(tmp_path / "p.svg")]) == EXIT_CONFIG
    empty = tmp_path / "e.csv"
    empty.write_text("t,x1\n")
    assert main(["plot", str(empty), "--columns", "x1", "--out", str(tmp_path / "p.svg")]) == EXIT_CONFIG
    assert main(["plot", str(tmp_path / "missing.csv"), "--columns", "x1", "--out", str(tmp_path / "p.svg")]) == EXIT_CONFIG


def test_run_with_plot(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["run", "--example", "cubic-siso", "--set", "t_end=2", "--out", str(out), "--plot"]) == EXIT_OK
    assert (tmp_path / "d.svg").exists()


class TestParsers:
    def test_seeds(self):
        assert parse_seeds("1-3,7") == [1, 2, 3, 7]
        with pytest.raises(ConfigError):
            parse_seeds("a-b")

    def test_sets(self):
        assert parse_sets(["a=1", "b = x=y"]) == {"a": "1", "b": "x=y"}
        with pytest.raises(ConfigError):
            parse_sets(["novalue"])

    def test_config_file_errors(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("just words\n")
        with pytest.raises(ConfigError):
            parse_config_file(str(bad))
        with pytest.raises(ConfigError):
            parse_config_file(str(tmp_path / "missing.cfg"))


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "paracont", "list"], capture_output=True, text=True, check=False)
    assert res.returncode == 0
    assert "affine-mimo" in res.stdout
