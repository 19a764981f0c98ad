import math
from typing import NamedTuple

import numpy as np

from densitynav.report_writer import ReportWriter, to_jsonable


class Pair(NamedTuple):
    left: float
    right: np.ndarray


def test_to_jsonable_nulls_non_finite_values():
    payload = {"a": math.inf, "b": [np.float64(np.nan), 1.5], "c": Pair(2.0, np.array([1, 2]))}
    assert to_jsonable(payload) == {"a": None, "b": [None, 1.5], "c": {"left": 2.0, "right": [1, 2]}}


def test_save_and_load(tmp_path):
    path = tmp_path / "nested" / "report.json"
    ReportWriter().save(path, {"margin": -math.inf, "ok": True})
    assert ReportWriter().load(path) == {"margin": None, "ok": True}


def test_run_summary_flags(make_log_fn):
    safe = make_log_fn("a", ["obstacle1"], [[1.0], [0.5]])
    unsafe = make_log_fn("b", ["obstacle1"], [[1.0], [-0.1]])
    summary = ReportWriter().run_summary("demo", [safe, unsafe])
    assert summary["scenario"] == "demo"
    assert summary["safe"] is False
    assert summary["converged"] is True
    assert summary["agents"]["a"]["min_clearance"] == 0.5
    assert summary["agents"]["b"]["events"] == []
