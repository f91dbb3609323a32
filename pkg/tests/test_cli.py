import json
import os
import subprocess
import sys

import numpy as np
import pytest

from exact_coreset.cli import dumps, load_csv, main, read_matrix
from exact_coreset.errors import InputError
from exact_coreset.lvm import gaussian_mixture


def write_csv(path, data, header=None):
    lines = [",".join(header)] if header else []
    lines += [",".join(repr(float(v)) for v in row) for row in data]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def ridge_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(120, 3))
    y = x @ [1.0, -2.0, 0.5] + 0.1 * rng.normal(size=120)
    return write_csv(tmp_path / "ridge.csv", np.column_stack([x, y]))


@pytest.fixture
def lvm_csv(tmp_path):
    x, _, _ = gaussian_mixture(500, 6, 3, seed=1)
    return write_csv(tmp_path / "lvm.csv", x)


def test_load_csv_last_column_label(tmp_path):
    path = write_csv(tmp_path / "a.csv", [[1, 2, 3], [4, 5, 6], [7, 8, 9]])
    prob = load_csv(path)
    np.testing.assert_array_equal(prob.x, [[1, 2], [4, 5], [7, 8]])
    np.testing.assert_array_equal(prob.y, [3, 6, 9])


def test_load_csv_header_and_named_label(tmp_path):
    path = write_csv(tmp_path / "b.csv", [[1, 2, 3], [4, 5, 6]], header=["a", "target", "c"])
    prob = load_csv(path, label_column="target")
    np.testing.assert_array_equal(prob.y, [2, 5])
    np.testing.assert_array_equal(prob.x, [[1, 3], [4, 6]])
    assert load_csv(path, label_column="0").y.tolist() == [1, 4]


def test_ragged_row_is_reported(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(InputError, match="row 2"):
        read_matrix(str(path))


def test_non_numeric_cell_is_reported(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(InputError, match="row 2, column 2"):
        read_matrix(str(path))


def test_empty_and_missing(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(InputError):
        read_matrix(str(path))
    with pytest.raises(InputError):
        read_matrix(str(tmp_path / "nope.csv"))


def test_dumps_is_stable():
    text = dumps({"b": 0.1, "a": [1, 2.5], "c": {"z": 1e-300}})
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text)["b"] == 0.1
    assert json.loads(text)["c"]["z"] == 1e-300


def test_ridge_then_verify(tmp_path, ridge_csv):
    out = tmp_path / "core.json"
    assert main(["ridge", "--input", ridge_csv, "--output", str(out), "--lambda", "1"]) == 0
    art = json.loads(out.read_text())
    assert art["schema_version"] == "1.0" and art["kind"] == "regression"
    assert art["meta"]["selected_count"] <= 11
    assert "wall_ms" not in art["meta"]
    assert len(art["indices"]) == len(art["weights"])
    rep = tmp_path / "rep.json"
    assert main(["verify", "--input", ridge_csv, "--artifact", str(out), "--output", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert report["max_rel_gap"] <= 1e-8
    assert report["num_queries"] == 100


def test_lpreg(tmp_path, ridge_csv):
    out = tmp_path / "lp.json"
    assert main(["lpreg", "--input", ridge_csv, "--output", str(out), "--p", "4", "--lambda", "0.5"]) == 0
    art = json.loads(out.read_text())
    assert art["meta"]["p"] == 4
    assert art["meta"]["selected_count"] <= 36
    rep = tmp_path / "rep.json"
    assert main(["verify", "--input", ridge_csv, "--artifact", str(out), "--output", str(rep)]) == 0
    assert json.loads(rep.read_text())["max_rel_gap"] <= 1e-8


def test_lvm_then_verify(tmp_path, lvm_csv):
    out = tmp_path / "lvm.json"
    assert main(["lvm", "--input", lvm_csv, "--output", str(out), "--k", "3"]) == 0
    art = json.loads(out.read_text())
    assert art["kind"] == "lvm" and art["meta"]["selected_count"] <= 11
    rep = tmp_path / "rep.json"
    assert main(["verify", "--input", lvm_csv, "--artifact", str(out), "--output", str(rep)]) == 0
    assert json.loads(rep.read_text())["max_rel_gap"] <= 1e-8


def test_sweep_csv(tmp_path, ridge_csv):
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--input", ridge_csv, "--output", str(out), "--lambdas", "0,1,10"]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "lambda,selected,sd_bound"
    assert len(lines) == 4
    bounds = [float(l.split(",")[2]) for l in lines[1:]]
    assert bounds[0] > bounds[1] > bounds[2]


def test_exit_code_input_errors(tmp_path, ridge_csv):
    out = str(tmp_path / "o.json")
    assert main(["ridge", "--input", str(tmp_path / "missing.csv"), "--output", out]) == 2
    assert main(["ridge", "--input", ridge_csv, "--output", out, "--lambda", "-1"]) == 2
    assert main(["ridge", "--input", ridge_csv, "--output", out, "--p", "4"]) == 2
    assert main(["lvm", "--input", ridge_csv, "--output", out]) == 2
    assert main(["bogus", "--input", ridge_csv]) == 2
    assert not os.path.exists(out)


def test_exit_code_numerical_failure(tmp_path):
    # identical rows: the second moment has rank 1 < k
    path = write_csv(tmp_path / "flat.csv", np.tile([1.0, 2.0, 3.0, 4.0], (50, 1)))
    assert main(["lvm", "--input", path, "--output", str(tmp_path / "o.json"), "--k", "2"]) == 3


def test_reruns_are_byte_identical(tmp_path, ridge_csv, lvm_csv):
    for name, args in [("ridge", ["ridge", "--input", ridge_csv, "--lambda", "2"]),
                       ("lvm", ["lvm", "--input", lvm_csv, "--k", "2"])]:
        a, b = tmp_path / f"{name}1.json", tmp_path / f"{name}2.json"
        assert main(args + ["--output", str(a)]) == 0
        assert main(args + ["--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_timings_opt_in(tmp_path, ridge_csv):
    out = tmp_path / "t.json"
    assert main(["ridge", "--input", ridge_csv, "--output", str(out), "--timings"]) == 0
    assert json.loads(out.read_text())["meta"]["wall_ms"] >= 0


def test_module_entry_point_with_thread_limit(tmp_path, ridge_csv):
    out = tmp_path / "core.json"
    env = dict(os.environ, EXACT_CORESET_THREADS="1")
    proc = subprocess.run(
        [sys.executable, "-m", "exact_coreset", "ridge", "--input", ridge_csv, "--output", str(out)],
        env=env, capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    ref = tmp_path / "ref.json"
    assert main(["ridge", "--input", ridge_csv, "--output", str(ref)]) == 0
    assert out.read_bytes() == ref.read_bytes()
