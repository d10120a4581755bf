import json

import pytest

from loopsoup.cli import main


def body(path):
    return json.loads((path / "report.json").read_text())["body"]


def test_sample_loops_emit(tmp_path):
    target = tmp_path / "loops.txt"
    assert main(["sample", "loops", "--graph", "figure", "--seed", "11", "--out", str(tmp_path),
                 "--emit", str(target)]) == 0
    lines = target.read_text().splitlines()
    assert lines and all("\t" in line for line in lines)


def test_sample_field_and_gff(tmp_path):
    assert main(["sample", "field", "--graph", "triangle", "--grid", "5", "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "field.csv").exists()
    assert main(["sample", "gff", "--graph", "path", "--reps", "3", "--out", str(tmp_path / "g")]) == 0
    assert len((tmp_path / "g" / "gff.csv").read_text().splitlines()) == 4


def test_lejan_report_rows(tmp_path, capsys):
    code = main(["verify", "lejan", "--graph", "path", "--reps", "5000", "--seed", "7", "--out", str(tmp_path)])
    b = body(tmp_path)
    assert code == (0 if b["passed"] else 1)
    assert {r["name"] for r in b["rows"]} >= {"KS v", "KS w"}
    assert b["seed"] == 7
    assert (tmp_path / "rows.csv").exists()


def test_graph_file(tmp_path):
    spec = {"vertices": ["a", "b", "sink"], "sink": "sink",
            "edges": [{"a": "a", "b": "b", "len": 1.0}, {"a": "b", "b": "sink", "len": 2.0}]}
    path = tmp_path / "g.json"
    path.write_text(json.dumps(spec))
    assert main(["verify", "lejan", "--graph", str(path), "--reps", "2000", "--out", str(tmp_path / "o")]) in (0, 1)
    assert body(tmp_path / "o")["rows"][0]["name"] == "KS a"


def test_invalid_graph(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"edges": [["a", "b", -1.0]], "sink": "b"}))
    assert main(["verify", "lejan", "--graph", str(path), "--out", str(tmp_path)]) == 2


def test_unknown_experiment(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nope", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_merge(tmp_path):
    main(["verify", "lejan", "--graph", "single-edge", "--reps", "2000", "--out", str(tmp_path / "a")])
    main(["verify", "roundtrip", "--reps", "2000", "--out", str(tmp_path / "b")])
    code = main(["report", "merge", str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json"),
                 "--out", str(tmp_path / "m")])
    merged = body(tmp_path / "m")
    assert len(merged["reports"]) == 2
    assert code == (0 if merged["passed"] else 1)


def test_merge_propagates_failure(tmp_path):
    failing = {"body": {"experiment": "x", "rows": [], "passed": False}, "meta": {}}
    (tmp_path / "f.json").write_text(json.dumps(failing))
    assert main(["report", "merge", str(tmp_path / "f.json"), "--out", str(tmp_path / "m")]) == 1


def test_threads_do_not_change_report(tmp_path, monkeypatch):
    args = ["verify", "lejan", "--graph", "triangle", "--reps", "25000", "--seed", "3"]
    monkeypatch.setenv("LOOPSOUP_THREADS", "1")
    main(args + ["--out", str(tmp_path / "s")])
    monkeypatch.setenv("LOOPSOUP_THREADS", "3")
    main(args + ["--out", str(tmp_path / "p")])
    assert body(tmp_path / "s") == body(tmp_path / "p")
