import io
import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from holojet.cli import run

SCHEMA = json.loads(resources.files("holojet").joinpath("schema").joinpath("report.schema.json").read_text())

COMMANDS = [
    ["validate", "circles"],
    ["validate", "nonbracket"],
    ["validate", "ysquared"],
    ["prolong", "circles", "--field", "R", "--order", "2"],
    ["prolong", "twisted", "--field", "R", "--order", "2", "--vertical"],
    ["invariants", "circles", "--order", "2", "--point", "1,0", "--point", "0,0"],
    ["invariants", "germfol", "--order", "3", "--grid", "5"],
    ["invariants", "ysquared", "--order", "1", "--point", "0"],
    ["transport", "circles", "--path", "quarter", "--jet", "f=1,f_x=0.5", "--order", "1"],
    ["transport", "scaling", "--path", "double", "--jet", "quad", "--order", "2"],
    ["holonomy", "circles", "--paths", "loop,const", "--order", "2"],
    ["hierarchy", "twisted", "--paths", "loop,const", "--max-order", "2"],
]


def invoke(argv, tmp_path):
    out = tmp_path / "report.json"
    so, se = io.StringIO(), io.StringIO()
    code = run(list(argv) + ["--out", str(out)], so, se)
    report = json.loads(out.read_text()) if out.exists() else None
    return code, report, so.getvalue(), se.getvalue(), out


@pytest.mark.parametrize("argv", COMMANDS, ids=lambda a: "-".join(a[:2]))
def test_reports_match_schema(argv, tmp_path):
    code, report, _, err, _ = invoke(argv, tmp_path)
    assert code == 0, err
    jsonschema.validate(report, SCHEMA)
    assert report["command"] == argv[0]
    assert report["engine"]["name"] == "holojet"


@pytest.mark.parametrize("argv", COMMANDS[:1] + COMMANDS[8:], ids=lambda a: "-".join(a[:2]))
def test_reports_are_byte_identical(argv, tmp_path):
    runs = []
    for sub in ("a", "b"):
        (tmp_path / sub).mkdir()
        runs.append(invoke(argv, tmp_path / sub)[4].read_bytes())
    assert runs[0] == runs[1]


def test_hierarchy_summary_lines(tmp_path):
    _, report, text, _, _ = invoke(COMMANDS[-1], tmp_path)
    lines = text.splitlines()
    assert lines[0].startswith("order 0: equivalent")
    assert lines[1] == "order 1: distinct (max discrepancy 0.628)"
    assert report["result"]["verdicts"] == {"0": "equivalent", "1": "distinct", "2": "distinct"}
    assert report["result"]["monotone"] is True


def test_transport_csv(tmp_path):
    csv = tmp_path / "path.csv"
    code, report, _, _, _ = invoke(COMMANDS[8] + ["--csv", str(csv)], tmp_path)
    assert code == 0
    lines = csv.read_text().splitlines()
    assert lines[0] == "t,x,y,f,f_x,f_y"
    end = [float(v) for v in lines[-1].split(",")]
    assert end[3:] == pytest.approx([1.0, 0.0, 0.5], abs=1e-6)


def test_invariants_csv(tmp_path):
    csv = tmp_path / "dims.csv"
    code, _, _, _, _ = invoke(COMMANDS[5] + ["--csv", str(csv)], tmp_path)
    assert code == 0
    assert len(csv.read_text().splitlines()) == 3


def test_validate_reports_blowup(tmp_path):
    _, report, _, _, _ = invoke(["validate", "ysquared"], tmp_path)
    assert "blowup" in json.dumps(report["result"])


def test_strict_mode_fails_on_nonbracket(tmp_path):
    code, report, _, err, _ = invoke(["validate", "nonbracket", "--strict"], tmp_path)
    assert code == 1 and report is None
    assert "brackets" in err


def test_errors_exit_with_code_one(tmp_path):
    for argv in (
        ["holonomy", "circles", "--paths", "loop,nope", "--order", "1"],
        ["transport", "circles", "--path", "quarter", "--jet", "g=1", "--order", "1"],
        ["invariants", "ysquared", "--order", "2", "--point", "0,0"],
        ["validate", "no_such_scene"],
    ):
        code, _, _, err, _ = invoke(argv, tmp_path)
        assert code == 1 and err.startswith("holojet: error:")


def test_scene_syntax_error_is_positioned(tmp_path):
    bad = tmp_path / "bad.scene"
    bad.write_text("chart { dim 1; names x; box -1..1 }\nbundle { fibre 1; names f; box -1..1 }\nfoliation { gen X = 1 +; }\n")
    code, _, _, err, _ = invoke(["validate", str(bad)], tmp_path)
    assert code == 1 and "line 3, column 24" in err


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "holojet.cli", "holonomy", "circles", "--paths", "loop,const", "--order", "1"],
        capture_output=True,
        text=True,
        check=True,
    )
    assert "equivalent" in proc.stdout
