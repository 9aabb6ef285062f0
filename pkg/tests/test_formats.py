import json

import numpy as np
import pytest

from tracenorm.formats import (
    MM_HEADER,
    FormatError,
    TraceWriter,
    dump_json,
    load_json,
    read_dense,
    read_matrix_market,
    read_trace,
    write_dense,
    write_matrix_market,
)
from tracenorm.problems import ObservedEntries


def _entries():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 4)) * 1e3
    mask = rng.random((5, 4)) < 0.6
    return ObservedEntries.from_dense(X, mask)


def test_matrix_market_round_trip_bit_exact(tmp_path):
    e = _entries()
    path = tmp_path / "a.mtx"
    write_matrix_market(path, e, comment="made in a test")
    lines = path.read_text().splitlines()
    assert lines[0] == MM_HEADER
    assert lines[1].startswith("%")
    back = read_matrix_market(path)
    assert back.shape == e.shape
    np.testing.assert_array_equal(back.rows, e.rows)
    np.testing.assert_array_equal(back.cols, e.cols)
    assert back.values.tobytes() == e.values.tobytes()


def test_matrix_market_is_one_based(tmp_path):
    path = tmp_path / "b.mtx"
    write_matrix_market(path, ObservedEntries([0], [2], [1.5], (2, 3)))
    assert path.read_text().splitlines()[-1] == "1 3 1.5"


@pytest.mark.parametrize("body, lineno", [
    ("2 2 1\n1 1 x\n", 3),
    ("2 2 1\n3 1 1.0\n", 3),
    ("2 2 2\n1 1 1.0\n1 1 2.0\n", 4),
    ("2 2 1\n1 1 nan\n", 3),
    ("2 2 1\n1 1\n", 3),
    ("2 2 1\n1 1 1.0\n2 2 1.0\n", 4),
    ("2 x 1\n", 2),
])
def test_matrix_market_errors_name_line(tmp_path, body, lineno):
    path = tmp_path / "bad.mtx"
    path.write_text(MM_HEADER + "\n" + body)
    with pytest.raises(FormatError, match=f"bad.mtx:{lineno}:"):
        read_matrix_market(path)


def test_matrix_market_header_and_count(tmp_path):
    path = tmp_path / "c.mtx"
    path.write_text("%%MatrixMarket matrix array real general\n1 1\n1.0\n")
    with pytest.raises(FormatError, match=":1:"):
        read_matrix_market(path)
    path.write_text(MM_HEADER + "\n2 2 2\n1 1 1.0\n")
    with pytest.raises(FormatError, match="declared 2"):
        read_matrix_market(path)


def test_dense_round_trip_bit_exact(tmp_path):
    A = np.random.default_rng(1).standard_normal((3, 4)) / 7.0
    path = tmp_path / "A.csv"
    write_dense(path, A)
    assert json.loads((tmp_path / "A.csv.json").read_text()) == {"rows": 3, "cols": 4, "dtype": "float64"}
    assert read_dense(path).tobytes() == A.tobytes()


def test_dense_errors(tmp_path):
    path = tmp_path / "A.csv"
    path.write_text("1,2\n3,4\n")
    with pytest.raises(FormatError, match="shape descriptor"):
        read_dense(path)
    (tmp_path / "A.csv.json").write_text('{"rows": 2, "cols": 3}')
    with pytest.raises(FormatError, match="A.csv:1:"):
        read_dense(path)
    (tmp_path / "A.csv.json").write_text('{"rows": 3, "cols": 2}')
    with pytest.raises(FormatError, match="found 2 rows"):
        read_dense(path)
    path.write_text("1,2\n3,z\n")
    (tmp_path / "A.csv.json").write_text('{"rows": 2, "cols": 2}')
    with pytest.raises(FormatError, match="A.csv:2:"):
        read_dense(path)


def test_trace_writer_versioned(tmp_path):
    path = tmp_path / "t.jsonl"
    with TraceWriter(path, command="x") as sink:
        sink({"event": "a", "value": np.float64(1.5), "n": np.int64(2)})
        sink({"event": "b"})
    recs = read_trace(path)
    assert [r["event"] for r in recs] == ["a", "b"]
    assert all(r["v"] == 1 and r["command"] == "x" for r in recs)
    assert recs[0]["value"] == 1.5 and recs[0]["n"] == 2


def test_json_helpers(tmp_path):
    path = tmp_path / "o.json"
    dump_json(path, {"b": np.arange(2), "a": np.bool_(True)})
    assert load_json(path) == {"a": True, "b": [0, 1]}
    path.write_text('{\n  "a": 1,\n}')
    with pytest.raises(FormatError, match="o.json:3:"):
        load_json(path)
