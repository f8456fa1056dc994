import json

import numpy as np

from conekit.reporting import (
    RunReport,
    config_hash,
    load_stripped,
    reports_equal,
    write_csv,
)


def test_report_roundtrip_and_verdicts(tmp_path):
    rep = RunReport("demo", {"a": 1}, metadata={"seed": 5})
    rep.add_verdict("check_one", True, tolerance=1e-9, observed=1e-12)
    rep.add_verdict("check_two", False, observed=0.5)
    assert not rep.passed
    path = rep.write(tmp_path)
    doc = json.loads(path.read_text())
    assert doc["command"] == "demo"
    assert "timestamp" in doc
    names = [v["name"] for v in doc["verdicts"]]
    assert names == ["check_one", "check_two"]


def test_reports_equal_ignores_timestamp_only(tmp_path):
    a = RunReport("demo", {"a": 1})
    a.add_verdict("c", True, observed=0.1)
    b = RunReport("demo", {"a": 1})
    b.add_verdict("c", True, observed=0.1)
    pa = a.write(tmp_path / "a")
    pb = b.write(tmp_path / "b")
    assert reports_equal(pa, pb)
    c = RunReport("demo", {"a": 2})
    c.add_verdict("c", True, observed=0.1)
    pc = c.write(tmp_path / "c")
    assert not reports_equal(pa, pc)
    assert "timestamp" not in load_stripped(pa)


def test_numpy_values_serialize(tmp_path):
    rep = RunReport("demo", {"arr": [1, 2]})
    rep.add_verdict("c", True, observed=np.float64(0.25),
                    detail={"v": np.arange(3)})
    path = rep.write(tmp_path)
    doc = json.loads(path.read_text())
    assert doc["verdicts"][0]["observed"] == 0.25
    assert doc["verdicts"][0]["detail"]["v"] == [0, 1, 2]


def test_write_csv_unions_keys(tmp_path):
    rows = [{"a": 1, "b": 2}, {"a": 3, "c": 4}]
    path = write_csv(tmp_path / "t.csv", rows)
    text = path.read_text().splitlines()
    assert text[0] == "a,b,c"
    assert len(text) == 3


def test_config_hash_is_stable_and_order_independent():
    h1 = config_hash({"a": 1, "b": [1, 2]})
    h2 = config_hash({"b": [1, 2], "a": 1})
    assert h1 == h2
    assert len(h1) == 16
