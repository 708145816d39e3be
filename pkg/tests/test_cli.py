import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from fedipm.cli import BENCH_COLUMNS, main
from fedipm.problem import desk_lp, dump_problem, load_problem
from fedipm.solver import TRACE_COLUMNS


@pytest.fixture
def desk_file(tmp_path):
    path = tmp_path / "desk.json"
    path.write_text(dump_problem(desk_lp()))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_problem_seedless_boxlp_is_desk_lp(capsys):
    code, out, _ = run(capsys, "gen-problem", "--kind", "boxlp", "--n", 2, "--d", 1)
    assert code == 0
    assert out == dump_problem(desk_lp())


def test_gen_problem_is_deterministic(capsys, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert run(capsys, "gen-problem", "--n", 6, "--d", 2, "--seed", 9, "--clients", 2, "--out", p)[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert load_problem(paths[0]).clients == [0, 1]


def test_gen_problem_erm_and_model_gap(capsys):
    code, out, _ = run(capsys, "gen-problem", "--kind", "least-squares-erm", "--samples", 3, "--features", 2,
                       "--seed", 1)
    data = json.loads(out)
    assert code == 0 and data["meta"]["kind"] == "least-squares-erm" and data["n"] == 2 + 2 * 3
    code, out, _ = run(capsys, "gen-problem", "--kind", "model-gap")
    assert code == 0 and json.loads(out)["meta"]["kind"] == "model-gap"


def test_gen_problem_rejects_seedless_random_shape(capsys):
    code, _, err = run(capsys, "gen-problem", "--n", 5, "--d", 2)
    assert code == 2 and json.loads(err)["error"] == "bad-config"


def test_solve_exact_writes_trace_and_summary(capsys, desk_file, tmp_path):
    trace = tmp_path / "trace.csv"
    summary = tmp_path / "summary.json"
    code, _, _ = run(capsys, "solve", "--problem", desk_file, "--delta", 0.1, "--out-trace", trace,
                     "--out-summary", summary)
    assert code == 0
    rows = list(csv.reader(io.StringIO(trace.read_text())))
    assert tuple(rows[0]) == TRACE_COLUMNS
    data = json.loads(summary.read_text())
    assert data["mode"] == "EXACT" and data["converged"] is True
    assert data["objective"] <= 0.0 + np.sqrt(2) * 0.1
    assert data["uplink_words"] == 0


def test_solve_federated_identity_matches_exact(capsys, desk_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(capsys, "solve", "--problem", desk_file, "--delta", 0.1, "--out-trace", a)[0] == 0
    assert run(capsys, "solve", "--problem", desk_file, "--delta", 0.1, "--mode", "federated",
               "--sketch", "IDENTITY-DEBUG", "--out-trace", b)[0] == 0
    ra = list(csv.DictReader(io.StringIO(a.read_text())))
    rb = list(csv.DictReader(io.StringIO(b.read_text())))
    assert len(ra) == len(rb)
    for x, y in zip(ra, rb):
        assert abs(float(x["objective"]) - float(y["objective"])) <= 1e-10
    assert int(rb[1]["uplink_words"]) > 0


def test_solve_sketched_needs_sizes(capsys, desk_file):
    code, _, err = run(capsys, "solve", "--problem", desk_file, "--mode", "SKETCHED")
    assert code == 2 and json.loads(err)["error"] == "bad-config"


def test_solve_malformed_json_reports_position(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"version": 1,\n  "d": }')
    code, _, err = run(capsys, "solve", "--problem", bad)
    payload = json.loads(err)
    assert code == 2 and payload["error"] == "malformed-json"
    assert payload["line"] == 2 and payload["column"] == 8


def test_solve_bad_problem_and_missing_file(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"version": 1}))
    assert run(capsys, "solve", "--problem", bad)[0] == 2
    assert run(capsys, "solve", "--problem", tmp_path / "nope.json")[0] == 2


def test_solve_bad_delta(capsys, desk_file):
    assert run(capsys, "solve", "--problem", desk_file, "--delta", 1.5)[0] == 2


def test_solve_iteration_cap_exits_one_with_summary(capsys, desk_file):
    code, out, _ = run(capsys, "solve", "--problem", desk_file, "--delta", 0.1, "--max-iters", 3)
    assert code == 1
    assert json.loads(out)["converged"] is False


def test_bench_sketch_csv(capsys):
    code, out, _ = run(capsys, "bench-sketch", "--d", 4, "--b-list", "4,16", "--trials", 5)
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert tuple(rows[0].keys()) == BENCH_COLUMNS
    assert [int(r["b"]) for r in rows] == [4, 16]
    for r in rows:
        assert float(r["gap_q25"]) <= float(r["gap_median"]) <= float(r["gap_q75"])


def test_bench_sketch_rejects_bad_list(capsys):
    with pytest.raises(SystemExit) as info:
        main(["bench-sketch", "--b-list", "4,x"])
    assert info.value.code == 2


def test_compare_models_table_and_json(capsys):
    code, out, _ = run(capsys, "compare-models")
    assert code == 0 and "model-3" in out and "sketched" in out
    code, out, _ = run(capsys, "compare-models", "--json")
    rows = {r["model"]: r for r in json.loads(out, parse_constant=pytest.fail)}
    assert rows["sketched"]["delta_norm"] is None
    assert rows["model-3"]["correct"] is True and rows["model-1"]["correct"] is False


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "fedipm.cli", "gen-problem"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["n"] == 2
