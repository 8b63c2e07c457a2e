import json

import numpy as np
import pytest

from dkplab import io
from dkplab.cli import run
from dkplab.errors import ConfigurationError


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_defaults_and_shorthands(tmp_path):
    cfg = io.load_config(write(tmp_path, "c.toml", 'preset = "dkp_smooth"\ndelta = 0.2\nJ = 5\n'))
    assert (cfg.preset, cfg.params, cfg.J, cfg.n, cfg.p) == ("dkp_smooth", {"delta": 0.2}, 5, 2, 2.0)
    assert cfg.build_field().params["delta"] == 0.2


def test_nested_tables_and_override(tmp_path):
    text = '[mesh]\nJ = 4\n[field]\npreset = "constant"\n[probe]\nname = "moser"\np = 3.0\n[output]\nformats = ["json"]\n'
    cfg = io.load_config(write(tmp_path, "c.toml", text), {"J": 6})
    assert cfg.J == 6 and cfg.probe == "moser" and cfg.p == 3.0 and cfg.formats == ["json"]


@pytest.mark.parametrize("text", [
    "J = 2\n", "J = 11\n", "J = 4.5\n", "n = 4\n", "p = 0.5\n", "q = 1.0\n", "eps = 1.5\n",
    "bogus = 1\n", "[mesh]\nsize = 3\n", 'family = "squares"\n', 'preset = "nope"\n',
    'delta = "big"\n', "[output]\nformats = [\"xml\"]\n", "J = [\n", 'J = true\n',
])
def test_invalid_configs_rejected(tmp_path, text):
    with pytest.raises(ConfigurationError):
        io.load_config(write(tmp_path, "c.toml", text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigurationError):
        io.load_config(tmp_path / "absent.toml")


def test_to_plain_handles_numpy_and_nan():
    out = io.to_plain({"a": np.float64(1.5), "b": np.array([1, 2]), "c": float("nan"), 3: np.bool_(True)})
    assert out == {"a": 1.5, "b": [1, 2], "c": None, "3": True}


def test_report_roundtrip(tmp_path):
    cfg = io.load_config(None, {"J": 4})
    p = io.write_report(tmp_path / "r.json", "probe", cfg, {"probe": "x", "cases": [], "summary": {}},
                        timestamp="T")
    data = io.read_report(p)
    assert data["schema"] == io.SCHEMA_VERSION and data["timestamp"] == "T"
    assert data["config"]["mesh"]["J"] == 4


def test_cli_output_identical_modulo_timestamp(tmp_path, capsys):
    args = ["probe", "regularity", "--preset", "dkp_smooth", "--delta", "0.1", "--J", "4", "--family", "trig"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    for d in (a, b):
        d.pop("timestamp")
        d["config"]["output"].pop("dir")
    assert a == b
    assert (tmp_path / "a" / "cases.csv").read_text() == (tmp_path / "b" / "cases.csv").read_text()


def test_cli_exit_codes(tmp_path, capsys):
    assert run(["solve", "--J", "99", "--out", str(tmp_path)]) == 2
    assert run(["probe", "nonexistent"]) == 2
    assert run(["analyze", "--preset", "constant", "--J", "4", "--out", str(tmp_path)]) == 0
    assert run(["analyze", "--config", str(write(tmp_path, "c.toml", "wat = 1\n"))]) == 2


def test_cli_numeric_failure_exit(tmp_path, capsys):
    # a field with negative vertical coefficient cannot give an invertible map
    text = '[field]\npreset = "constant"\n[field.params]\nA0 = [[1.0, 0.0], [0.0, -1.0]]\n'
    code = run(["conjugate", "--config", str(write(tmp_path, "c.toml", text)), "--out", str(tmp_path)])
    assert code in (2, 3)


def test_cli_solve_and_decompose_tables(tmp_path, capsys):
    assert run(["solve", "--preset", "constant", "--J", "4", "--family", "trig", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "solution.csv").read_text().splitlines()
    assert lines[0] == "x1,t,u" and len(lines) == 1 + 16 * 17
    assert run(["decompose", "--preset", "constant", "--J", "4", "--eps", "0.2", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["result"]["lambda"] == 4.0


def make_report(tmp_path, name, J, ratio):
    cfg = io.load_config(None, {"J": J})
    res = {"probe": "regularity", "cases": [{"case": "cos1", "ratio": ratio}],
           "summary": {"max_ratio": ratio, "min_ratio": ratio, "spread": 1.0}}
    return io.write_report(tmp_path / name, "probe", cfg, res, timestamp="T")


def test_aggregate_reports(tmp_path):
    a = make_report(tmp_path, "a.json", 6, 1.3)
    b = make_report(tmp_path, "b.json", 5, 1.2)
    bad = write(tmp_path, "bad.json", "{not json")
    warnings = []
    rows = io.aggregate_reports([a, bad, b], tmp_path / "out", warn=warnings.append)
    assert [r["J"] for r in rows] == [5, 6]
    assert len(warnings) == 1 and "bad.json" in warnings[0]
    dat = (tmp_path / "out" / "regularity.dat").read_text().splitlines()
    assert dat[1] == "# J max_ratio spread" and dat[2].split() == ["5", "1.2", "1.0"]
    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("probe,preset,J,p,max_ratio")
    with pytest.raises(ConfigurationError):
        io.aggregate_reports([bad], tmp_path / "out", warn=lambda m: None)


def test_cli_report_command(tmp_path, capsys):
    a = make_report(tmp_path, "a.json", 6, 1.3)
    bad = write(tmp_path, "bad.json", "[]")
    assert run(["report", str(a), str(bad), "--out", str(tmp_path / "agg")]) == 0
    err = capsys.readouterr().err
    assert "skipping" in err
    assert run(["report", str(bad), "--out", str(tmp_path / "agg")]) == 2
