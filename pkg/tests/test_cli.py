import csv
import json

import pytest

from aero.cli import main

MODIFY_T1 = "0002000000010001ab"


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_inspect_golden(capsys):
    code, out, _ = cli(capsys, "packet", "inspect", "--hex", MODIFY_T1)
    assert code == 0
    lines = dict(line.split("\t")[0].split("=", 1) for line in out.splitlines())
    assert lines["opcode"] == "Modify"
    assert lines["dag_flag"] == "0"
    assert lines["task_id"] == "1"
    assert "bits 40..41 (2)" in out


def test_decode_prints_json(capsys):
    code, out, _ = cli(capsys, "packet", "decode", "--hex", MODIFY_T1)
    assert code == 0
    assert json.loads(out)["task_id"]["value"] == 1


def test_truncated_file_exit_2(tmp_path, capsys):
    f = tmp_path / "p.bin"
    f.write_bytes(bytes.fromhex(MODIFY_T1)[:5])
    code, _, err = cli(capsys, "packet", "inspect", f)
    assert code == 2 and "Truncated" in err


def test_encode_decode_identical(tmp_path, capsys):
    f = tmp_path / "p.bin"
    code, _, _ = cli(capsys, "packet", "encode", "--op", "modify", "--task", 1, "--code-hex", "ab", "--out", f)
    assert code == 0 and f.read_bytes().hex() == MODIFY_T1
    code, out, _ = cli(capsys, "packet", "encode", "--op", "insert", "--task", 4, "--deps", "1,3", "--code-hex", "beef")
    raw = out.strip()
    code, out, _ = cli(capsys, "packet", "decode", "--hex", raw)
    fields = json.loads(out)
    assert fields["dep_field"]["value"] == [1, 3] and fields["opcode"]["value"] == "Insert"


def test_dag_check_and_show(capsys):
    code, out, _ = cli(capsys, "dag", "check", "--benchmark", "B4")
    assert code == 0 and out.startswith("ok: 5 routine tasks, 6 edges")
    code, out, _ = cli(capsys, "dag", "show", "--benchmark", "B1")
    assert code == 0 and len(out.splitlines()) == 4


def test_malformed_dag_exit_1(tmp_path, capsys):
    f = tmp_path / "d.json"
    f.write_text("{not json")
    code, _, err = cli(capsys, "dag", "check", f)
    assert code == 1 and err


def test_run_writes_log_and_metrics(tmp_path, capsys):
    code, out, _ = cli(capsys, "run", "--scenario", 1, "--approach", "aero", "--seed", 3, "--out", tmp_path)
    assert code == 0 and "error=0" in out
    events = [json.loads(line) for line in (tmp_path / "events.jsonl").read_text().splitlines()]
    assert events[0]["event"] == "run_start" and events[-1]["event"] == "run_end"
    assert json.loads((tmp_path / "metrics.json").read_text())["seed"] == 3


@pytest.fixture(scope="module")
def sweep_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sweep")
    assert main(["sweep", "--runs", "5", "--out", str(out)]) == 0
    return out


def test_sweep_grid(sweep_dir):
    with open(sweep_dir / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 18
    assert all(float(r["error_rate"]) == 0.0 for r in rows if r["approach"] == "aero")
    assert json.loads((sweep_dir / "summary.json").read_text())["runs"] == 5


def test_sweep_repeat_identical(sweep_dir, tmp_path):
    assert main(["sweep", "--runs", "5", "--jobs", "2", "--out", str(tmp_path)]) == 0
    for name in ("summary.csv", "runs.csv"):
        assert (tmp_path / name).read_bytes() == (sweep_dir / name).read_bytes()


def test_report_tables(sweep_dir, tmp_path, capsys):
    code, out, _ = cli(capsys, "report", sweep_dir, "--svg", tmp_path)
    assert code == 0
    blocks = [b for b in out.split("\n\n") if b.strip()]
    assert len(blocks) == 3
    for b in blocks:
        lines = b.splitlines()
        assert lines[0].startswith("## ")
        assert lines[1].split()[1:] == [f"S{i}" for i in range(1, 7)]
        assert [ln.split()[0] for ln in lines[2:]] == ["aero", "live", "intermittent"]
    assert len(list(tmp_path.glob("*.svg"))) == 3


def test_report_empty_csv_exit_1(tmp_path, capsys):
    f = tmp_path / "summary.csv"
    f.write_text("")
    code, _, err = cli(capsys, "report", f)
    assert code == 1 and "no rows" in err


def test_bad_config_exit_1(tmp_path, capsys):
    f = tmp_path / "c.json"
    f.write_text(json.dumps({"runs": 1, "bogus": 2}))
    code, _, err = cli(capsys, "sweep", "--config", f, "--out", tmp_path / "o")
    assert code == 1 and "bogus" in err
    code, _, err = cli(capsys, "sweep", "--config", tmp_path / "missing.json", "--out", tmp_path / "o")
    assert code == 1
    f.write_text(json.dumps({"trace": "nowhere.csv"}))
    code, _, err = cli(capsys, "run", "--config", f, "--out", tmp_path / "o")
    assert code == 1 and "trace" in err


def test_runs_must_be_positive(tmp_path, capsys):
    code, _, _ = cli(capsys, "sweep", "--runs", 0, "--out", tmp_path)
    assert code == 1


def test_config_dir_env(tmp_path, monkeypatch, capsys):
    (tmp_path / "exp.json").write_text(json.dumps({"scenarios": [2], "approaches": ["aero"], "runs": 2}))
    monkeypatch.setenv("AERO_CONFIG_DIR", str(tmp_path))
    monkeypatch.chdir(tmp_path.parent)
    out = tmp_path / "out"
    code, _, _ = cli(capsys, "sweep", "--config", "exp.json", "--out", out)
    assert code == 0
    assert len((out / "summary.csv").read_text().splitlines()) == 2


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["sweep", "--help"])
    out = capsys.readouterr().out
    for flag in ("--config", "--seed", "--runs", "--trace", "--out", "--approach", "--scenario", "AERO_CONFIG_DIR"):
        assert flag in out
