import json
import re
import xml.etree.ElementTree as ET

import pytest

from gridloss import report
from gridloss.cli import main
from gridloss.network import ieee30_path

CASE = str(ieee30_path())
SVG = "{http://www.w3.org/2000/svg}"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _numbers_equal(a, b, tol=1e-9):
    """Compare a CSV string cell with a JSON value."""
    if b is None:
        return a == "nan"
    if isinstance(b, bool):
        return a == str(b)
    if isinstance(b, (int, float)):
        return abs(float(a) - b) <= tol * max(1.0, abs(b))
    return a == str(b)


def test_solve_table_totals(capsys):
    code, out, _ = run(capsys, "solve", CASE)
    assert code == 0
    m = re.search(r"P_loss_MW=(\S+) Q_loss_MVAR=(\S+)", out)
    assert float(m.group(1)) == pytest.approx(17.557, abs=0.10)
    assert float(m.group(2)) == pytest.approx(67.69, abs=0.70)
    assert "== buses ==" in out and "== branches ==" in out
    assert out.rstrip().splitlines()[-1].startswith("# manifest ")


def test_solve_bundled_name(capsys):
    code, out, _ = run(capsys, "solve", "ieee30.case", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert len(doc["sections"]["buses"]["rows"]) == 30
    assert len(doc["sections"]["branches"]["rows"]) == 41
    assert doc["manifest"]["case_sha256"] == __import__("hashlib").sha256(ieee30_path().read_bytes()).hexdigest()


def test_solve_missing_file(capsys, tmp_path):
    code, out, err = run(capsys, "solve", str(tmp_path / "missing.case"))
    assert code == 1
    assert out == ""
    assert "missing.case" in err


def test_solve_missing_file_writes_nothing(capsys, tmp_path):
    target = tmp_path / "report.txt"
    code, _, _ = run(capsys, "solve", str(tmp_path / "missing.case"), "--out", str(target))
    assert code == 1 and not target.exists()


def test_parse_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.case"
    bad.write_text("[system]\nbase_mva=100\n[buses]\n1 slack 0 0 0 1.0 0 0 zero\n[branches]\n")
    code, out, err = run(capsys, "solve", str(bad))
    assert code == 2 and out == ""
    assert "line 4" in err


def test_validation_error_exit_code(capsys, tmp_path):
    bad = tmp_path / "bad.case"
    bad.write_text("[system]\nbase_mva=100\n[buses]\n1 slack 0 0 0 1.0 0 0 0\n"
                   "2 load 10 0 0 1.0 0 0 0\n[branches]\n1 7 0.01 0.1 0 1\n")
    code, _, err = run(capsys, "solve", str(bad))
    assert code == 2 and "7" in err


def test_non_convergence_exit_code(capsys, caplog):
    code, out, _ = run(capsys, "solve", CASE, "--max-iter", "1", "--tol", "1e-12")
    assert code == 3
    assert "converged=False" in out
    assert "did not converge" in caplog.text


def test_usage_error_exit_code(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 1
    code, _, _ = run(capsys, "solve", CASE, "--tol", "-1")
    assert code == 1


def test_csv_json_agree(capsys, tmp_path):
    csv_path, json_path = tmp_path / "r.csv", tmp_path / "r.json"
    assert main(["solve", CASE, "--format", "csv", "--out", str(csv_path)]) == 0
    assert main(["solve", CASE, "--format", "json", "--out", str(json_path)]) == 0
    from_csv = report.parse_csv(csv_path.read_text())
    from_json = json.loads(json_path.read_text())
    for key, value in from_json["summary"].items():
        assert _numbers_equal(from_csv["summary"][key], value), key
    for name, sec in from_json["sections"].items():
        rows = from_csv["sections"][name]["rows"]
        assert from_csv["sections"][name]["columns"] == sec["columns"]
        assert len(rows) == len(sec["rows"])
        for a_row, b_row in zip(rows, sec["rows"]):
            assert all(_numbers_equal(a, b) for a, b in zip(a_row, b_row))
    assert from_csv["manifest"]["command"] == from_json["manifest"]["command"] == "solve"


def test_solve_svg(capsys, tmp_path):
    svg = tmp_path / "solve.svg"
    code, _, _ = run(capsys, "solve", CASE, "--svg", str(svg))
    assert code == 0
    root = ET.parse(svg).getroot()
    assert root.tag == f"{SVG}svg"
    assert not list(root.iter(f"{SVG}script"))


def test_strategy_table_and_svg(capsys, tmp_path):
    svg = tmp_path / "cmp.svg"
    code, out, _ = run(capsys, "strategy", CASE, "load-share:from=5,to=4,frac=0.15",
                       "q-inject:bus=30,mvar=1.0", "tap:from=4,to=12,tap=1.0",
                       "--svg", str(svg), "--format", "json")
    assert code == 0
    rows = json.loads(out)["sections"]["comparison"]["rows"]
    assert [r[0] for r in rows][0] == "base" and len(rows) == 4
    delta = {r[0].split()[0]: r[4] for r in rows}
    assert delta["load-share"] == pytest.approx(16.977 - 17.557, abs=0.10)
    assert delta["q-inject"] == pytest.approx(17.533 - 17.557, abs=0.10)
    assert delta["tap"] == pytest.approx(17.471 - 17.557, abs=0.10)
    root = ET.parse(svg).getroot()
    gids = {el.get("id") for el in root.iter() if el.get("id", "").startswith("scenario-")}
    assert gids == {f"scenario-{k}-{pq}" for k in range(4) for pq in "pq"}


@pytest.mark.parametrize("spec, token", [
    ("load-share:from=5,to=4,frac=2.0", "frac=2.0"),
    ("load-share:frac=2.0", "frac=2.0"),
    ("tap:from=1,to=30,tap=1.0", "1-30"),
])
def test_strategy_invalid(capsys, spec, token):
    code, out, err = run(capsys, "strategy", CASE, spec)
    assert code == 2 and out == ""
    assert token in err


def _strip_timestamp(text):
    return re.sub(r'"timestamp": "[^"]*"', '"timestamp": ""', text)


def test_opf_repeat_deterministic(capsys, tmp_path):
    argv = ["opf", CASE, "--repeat", "1", "--seed", "7", "--generations", "3", "--population", "8"]
    code_a, a, _ = run(capsys, *argv)
    code_b, b, _ = run(capsys, *argv, "--workers", "3")
    assert code_a == code_b == 0
    a, b = _strip_timestamp(a), _strip_timestamp(b)
    # the worker count is recorded in the manifest; everything else must match
    assert a.replace('"workers": 1', '"workers": 3') == b


def test_opf_report_structure(capsys, tmp_path):
    hist, svg = tmp_path / "hist.csv", tmp_path / "opf.svg"
    code, out, _ = run(capsys, "opf", CASE, "--repeat", "2", "--generations", "2", "--population", "6",
                       "--format", "json", "--history", str(hist), "--svg", str(svg),
                       "--strategy", "tap:from=4,to=12,tap=1.0")
    assert code == 0
    doc = json.loads(out)
    runs = doc["sections"]["runs"]["rows"]
    assert [r[0] for r in runs] == [1, 2, "average"]
    assert [r[1] for r in runs[:2]] == [1, 2]
    assert runs[2][2] == pytest.approx((runs[0][2] + runs[1][2]) / 2)
    assert len(doc["sections"]["best_buses"]["rows"]) == 30
    assert doc["summary"]["nr_loss_MW"] == pytest.approx(17.471, abs=0.10)
    assert doc["manifest"]["strategies"] == ["tap:from=4,to=12,tap=1.0"]
    assert "[controls]" in doc["manifest"]["ga_config"]
    lines = hist.read_text().splitlines()
    assert lines[0].startswith("run,seed,generation") and len(lines) == 1 + 2 * 3
    ET.parse(svg)


def test_opf_config_file(capsys, tmp_path):
    cfg = tmp_path / "ga.cfg"
    cfg.write_text("[ga]\npopulation=4\ngenerations=1\nseed=5\n[controls]\nvoltage 2 0.95 1.10 5\n")
    code, out, _ = run(capsys, "opf", CASE, "--config", str(cfg), "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["sections"]["best_controls"]["rows"][0][0] == "voltage:2"
    assert doc["sections"]["runs"]["rows"][0][1] == 5


def test_opf_bad_config(capsys, tmp_path):
    cfg = tmp_path / "ga.cfg"
    cfg.write_text("[ga]\npopulation=odd\n")
    code, _, err = run(capsys, "opf", CASE, "--config", str(cfg))
    assert code == 2 and "odd" in err


def test_ybus_dump(capsys, tmp_path):
    code, out, _ = run(capsys, "ybus", "dump", CASE)
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "i,j,g,b"
    entries = {(int(i), int(j)): complex(float(g), float(b))
               for i, j, g, b in (line.split(",") for line in lines[1:])}
    # 30 diagonal entries plus both off-diagonal entries of 41 branches
    assert len(entries) == 30 + 2 * 41
    for (i, j), value in entries.items():
        assert entries[(j, i)] == value
