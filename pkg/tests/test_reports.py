import json
import math
from fractions import Fraction

import numpy as np

from taumodel.reports import Report, format_matrix, format_scalar, load_report, save_report, to_jsonable


def test_format_scalar():
    assert format_scalar(Fraction(3, 4)) == "3/4"
    assert format_scalar(Fraction(-6, 3)) == "-2"
    assert format_scalar(0.1) == "0.1"
    assert format_scalar(np.float64(0.5)) == "0.5"
    assert format_scalar(math.inf) == "inf"
    assert format_scalar(7) == 7


def test_format_matrix():
    assert format_matrix([[Fraction(1, 2), 3]]) == [["1/2", 3]]


def test_to_jsonable_nests():
    data = {1: (Fraction(1, 3), np.array([1.5])), "ok": True, "none": None, "n": np.int64(4)}
    assert to_jsonable(data) == {"1": ["1/3", ["1.5"]], "ok": True, "none": None, "n": 4}


class TestReport:
    def test_timed(self):
        report = Report("compute")
        with report.timed("det"):
            pass
        assert set(report.timings) == {"det"}
        assert report.timings["det"] >= 0

    def test_deterministic_json_has_no_timings(self):
        report = Report("loop", {"value": Fraction(60)}, {"bruteforce": 0.5})
        data = json.loads(report.deterministic_json())
        assert data == {"command": "loop", "result": {"value": "60"}}

    def test_save_and_load(self, tmp_path):
        report = Report("compute", {"routes": {"det": {"value": Fraction(4)}}})
        path = save_report(report, tmp_path / "nested" / "compute.json")
        assert load_report(path)["result"]["routes"]["det"]["value"] == "4"
        assert path.read_text(encoding="utf-8").endswith("\n")
