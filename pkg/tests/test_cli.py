import json
import pathlib

import numpy as np
import pytest

from reduced_lab.cli import SCHEMAS, build_parser, main
from reduced_lab.config import load_config, parse_measure_spec, parse_nl_spec, parse_schedule

ROOT = pathlib.Path(__file__).resolve().parents[1]


@pytest.fixture
def repo(monkeypatch):
    monkeypatch.chdir(ROOT)
    return ROOT


def _rows(path):
    lines = [l for l in pathlib.Path(path).read_text().splitlines() if not l.startswith("#")]
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


def _schema_ok(path):
    text = pathlib.Path(path).read_text().splitlines()
    declared = text[0].removeprefix("# schema: ")
    header, rows = _rows(path)
    return ",".join(header) == declared and all(len(r) == len(header) for r in rows)


def test_run_solve_fixture(repo, tmp_path):
    out = tmp_path / "solve.csv"
    assert main(["run", "configs/fix1_cubic_solve.ini", "--out", str(out)]) == 0
    header, rows = _rows(out)
    assert float(rows[0][header.index("u")]) == pytest.approx(1.0, abs=1e-10)
    assert _schema_ok(out)
    assert "exit=0" in (tmp_path / "solve.csv.log").read_text()


def test_missing_measure_exits_2(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[space]\nd = 1\nh = 1\nextent = -1, 1\n[nonlinearity]\nfamily = power\n[task]\ntask = solve\n")
    out = tmp_path / "bad.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 2
    log = (tmp_path / "bad.csv.log").read_text()
    block = json.loads(log[log.index("{"):log.rindex("}") + 1])
    assert block["error"]["exit_code"] == 2 and "measure" in block["error"]["message"]


def test_unreadable_config_logs_next_to_it(tmp_path):
    cfg = tmp_path / "none.ini"
    assert main(["run", str(cfg)]) == 2
    assert (tmp_path / "none.ini.log").exists()


def test_solver_failure_exits_3(repo, tmp_path, monkeypatch):
    import reduced_lab.cli as cli
    from reduced_lab.errors import SolverError

    def failing(*args, **kw):
        raise SolverError("monotone iteration cap exceeded", np.zeros(1), 0.5, 7)

    monkeypatch.setattr(cli, "solve", failing)
    out = tmp_path / "s.csv"
    code = main(["solve", "--form", "configs/fix1_form.csv", "--nonlinearity", "power:p=3",
                 "--measure", "atoms=0:3:concentrated", "--out", str(out)])
    assert code == 3
    log = (tmp_path / "s.csv.log").read_text()
    block = json.loads(log[log.index("{"):log.rindex("}") + 1])
    assert block["error"]["exit_code"] == 3 and block["error"]["iterations"] == 7


def test_suite_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["suite", "--seed", "42", "--instances", "4", "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes() and _schema_ok(a)
    c = tmp_path / "c.csv"
    assert main(["suite", "--seed", "42", "--instances", "4", "--kind", "solver", "--out", str(c)]) == 0
    assert _schema_ok(c)


def test_capacity_and_reduce_commands(repo, tmp_path):
    out = tmp_path / "cap.csv"
    assert main(["capacity", "--form", "configs/fix2_form.csv", "--set", "0", "--out", str(out)]) == 0
    header, rows = _rows(out)
    assert [float(r[1]) for r in rows] == pytest.approx([1.0, 0.5], abs=1e-10) and _schema_ok(out)
    red = tmp_path / "red.csv"
    assert main(["reduce", "--form", "configs/fix1_form.csv", "--nl", "power:p=3",
                 "--measure", "atoms=0:3:concentrated", "--schedule", "1:2:8", "--out", str(red)]) == 0
    assert _schema_ok(red)


@pytest.mark.parametrize("name", ["fix1_cubic_reduce.ini", "fix2_capacity.ini"])
def test_shipped_configs_run(repo, tmp_path, name):
    out = tmp_path / "o.csv"
    assert main(["run", f"configs/{name}", "--out", str(out)]) == 0
    assert _schema_ok(out)


def test_study_subcommand_checks_task(repo, tmp_path):
    assert main(["study", "configs/fix1_cubic_solve.ini", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["equiv", "configs/study_local.ini", "--out", str(tmp_path / "x.csv")]) == 2


def test_help_lists_schemas(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    text = capsys.readouterr().out
    assert "node,u,f_of_u,Rmu,residual" in text and SCHEMAS.splitlines()[0] in text


def test_config_parsers(repo, fix2):
    assert parse_schedule("1:2:16") == [1, 2, 4, 8, 16]
    assert parse_schedule("0.5, 1, 3") == [0.5, 1, 3]
    assert parse_nl_spec("power:p=3")(np.array([2.0]))[0] == -8
    mu = parse_measure_spec(fix2.space, "density=0.5;atoms=1:2:concentrated")
    np.testing.assert_array_equal(mu.concentrated, [0, 2])
    cfg = load_config("configs/equiv_cubic.ini")
    assert cfg.task == "equiv_study" and cfg.hs[0] == 1 / 64


def test_project_task_roundtrips_measure(repo, tmp_path):
    from reduced_lab.config import load_form, read_measure_csv

    cfg = tmp_path / "p.ini"
    cfg.write_text("[space]\nform = configs/fix2_form.csv\n[nonlinearity]\nfamily = power\np = 3\n"
                   "[measure]\ndensity = 0:0.5\natoms = 1:-2:concentrated\n[task]\ntask = project\n")
    out = tmp_path / "p.csv"
    assert main(["run", str(cfg), "--out", str(out)]) == 0
    assert _schema_ok(out)
    mu = read_measure_csv(load_form("configs/fix2_form.csv").space, out)
    np.testing.assert_allclose(mu.total, [0.5, -2.0], atol=1e-9)
