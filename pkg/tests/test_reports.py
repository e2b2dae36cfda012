import json
import math

import numpy as np

from pdocalc.reports import SCHEMA_VERSION, csv_text, dumps, envelope, write_csv, write_json


def test_dumps_sorted_and_exact_floats():
    text = dumps({"b": 0.1, "a": np.float64(1 / 3), "c": np.arange(2)})
    data = json.loads(text)
    assert list(data) == ["a", "b", "c"]
    assert data["a"] == 1 / 3 and data["b"] == 0.1
    assert "0.33333333333333331" in text


def test_dumps_nonfinite_and_complex():
    data = json.loads(dumps({"x": math.inf, "y": -math.inf, "z": math.nan, "w": 1 + 2j, "f": np.bool_(True)}))
    assert data == {"x": "inf", "y": "-inf", "z": "nan", "w": [1.0, 2.0], "f": True}


def test_dumps_deterministic():
    obj = {"k": [0.1 * i for i in range(10)], "s": "text"}
    assert dumps(obj) == dumps(dict(reversed(list(obj.items()))))


def test_envelope(tmp_path):
    env = envelope("cmd", "PASS", {"N": 8}, {"value": 1.5})
    assert env["schema_version"] == SCHEMA_VERSION
    path = tmp_path / "r.json"
    write_json(path, env)
    assert json.loads(path.read_text())["results"]["value"] == 1.5


def test_csv(tmp_path):
    rows = [{"a": 0.1, "b": [0.5, 1]}, {"a": 2.0, "c": "x"}]
    text = csv_text(rows)
    lines = text.splitlines()
    assert lines[0] == "a,b,c"
    assert lines[1] == '0.10000000000000001,"[0.5, 1]",'
    assert lines[2] == "2,,x"
    write_csv(tmp_path / "r.csv", rows)
    assert (tmp_path / "r.csv").read_text() == text
