import numpy as np
import pytest

from difftopo import cli
from difftopo.autodiff import tape as tape_mod
from difftopo.cli import RunConfig, UsageError, main, parse_args, read_config
from difftopo.io import read_csv, read_pgm


def test_paper_settings_parse():
    cmd, cfg = parse_args("run --problem mbb --nx 48 --ny 24 --volfrac 0.3 --penalty 3 "
                          "--iters 100 --method neural --seed 7 --out r/".split())
    assert cmd == "run"
    assert (cfg.problem, cfg.nx, cfg.ny, cfg.volfrac, cfg.penalty) == ("mbb", 48, 24, 0.3, 3.0)
    assert (cfg.iters, cfg.method, cfg.seed, cfg.out) == (100, "neural", 7, "r/")
    assert cfg.lr == 0.01 and cfg.w == 0.01 and cfg.target is None


def test_defaults():
    _, cfg = parse_args(["run"])
    assert cfg == RunConfig()


@pytest.mark.parametrize("argv", [
    "run --volfrac 1.5", "run --volfrac 0", "run --nx 50 --method neural", "run --iters 0",
    "run --problem arch", "run --method annealing", "run --lr -1", "run --nx abc",
    "run --problem inverter --method simp", "run --target -100", "run --rmin 0.5",
])
def test_invalid_values(argv):
    with pytest.raises(UsageError):
        parse_args(argv.split())


def test_invalid_values_exit_one(capsys):
    assert main(["run", "--volfrac", "1.5"]) == 1
    assert "volfrac" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["frobnicate"]) == 1


def test_flag_beats_config_file(tmp_path):
    cfg_file = tmp_path / "c.cfg"
    cfg_file.write_text("# run settings\nvolfrac = 0.4\nnx = 16\nny=8\nmethod = simp\n")
    _, cfg = parse_args(["run", "--config", str(cfg_file), "--volfrac", "0.3"])
    assert cfg.volfrac == 0.3
    assert (cfg.nx, cfg.ny, cfg.method) == (16, 8, "simp")


def test_config_unknown_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("volume = 0.3\n")
    with pytest.raises(UsageError, match="unknown key"):
        read_config(p)


def test_config_bad_lines(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("nx 12\n")
    with pytest.raises(UsageError, match="key = value"):
        read_config(p)
    p.write_text("nx = twelve\n")
    with pytest.raises(UsageError, match="nx"):
        read_config(p)
    with pytest.raises(UsageError):
        read_config(tmp_path / "nope.cfg")


def test_config_types(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("target = -100\nfigures = false\nproblem = inverter\n")
    assert read_config(p) == {"target": -100.0, "figures": False, "problem": "inverter"}


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "r"
    code = main(["run", "--problem", "cantilever", "--nx", "16", "--ny", "8", "--iters", "4",
                 "--out", str(out)])
    assert code == 0
    for name in ("density.pgm", "history.csv", "density.png", "convergence.png"):
        assert (out / name).stat().st_size > 0
    rows = read_csv(out / "history.csv")
    assert len(rows) == 4 and all(r["seconds"] >= 0 for r in rows)
    assert read_pgm(out / "density.pgm").shape == (8, 16)
    assert "displacement" in capsys.readouterr().out


def test_run_without_figures(tmp_path):
    out = tmp_path / "r"
    assert main(["run", "--method", "simp", "--nx", "12", "--ny", "6", "--iters", "2",
                 "--no-figures", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["density.pgm", "history.csv"]


def test_repeat_runs_identical(tmp_path):
    def once(d):
        assert main(["run", "--nx", "16", "--ny", "8", "--iters", "5", "--seed", "2",
                     "--no-timing", "--no-figures", "--out", str(d)]) == 0
        return (d / "history.csv").read_bytes(), (d / "density.pgm").read_bytes()
    assert once(tmp_path / "a") == once(tmp_path / "b")


def test_numerical_failure_exit_two(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise FloatingPointError("non-finite objective at iteration 0")
    monkeypatch.setattr(cli, "run_neural", boom)
    assert main(["run", "--nx", "8", "--ny", "8", "--iters", "1", "--out", str(tmp_path)]) == 2


def test_compare_writes_grid(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--problems", "mbb", "--volfracs", "0.4", "--nx", "16", "--ny", "8",
                 "--iters", "3", "--out", str(out)]) == 0
    lines = (out / "compare.csv").read_text().splitlines()
    assert lines[0] == "problem,volfrac,neural,simp,ratio"
    assert len(lines) == 2 and lines[1].startswith("mbb,0.4,")
    assert (out / "compare.png").stat().st_size > 0


def test_compare_rejects_inverter():
    assert main(["compare", "--problems", "inverter", "--iters", "1"]) == 1


def test_gradcheck_passes(capsys):
    assert main(["gradcheck"]) == 0
    report = capsys.readouterr().out
    for op in tape_mod.registered_ops():
        assert op in report
    assert "end_to_end[mbb]" in report and "end_to_end[inverter]" in report


def test_gradcheck_catches_corrupted_tanh(monkeypatch, capsys):
    monkeypatch.setitem(tape_mod._PULLBACKS, "tanh",
                        lambda g, s: (g * (1.0 - s["y"] ** 2) * 1.01,)
                        if "y" in s else (g * 1.01,))
    assert main(["gradcheck"]) != 0
    assert "tanh" in capsys.readouterr().err


def test_gradcheck_scale_validated():
    assert main(["gradcheck", "--scale", "0"]) == 1
