from __future__ import annotations

import csv
import json
import math
from decimal import Decimal, getcontext

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from actcert.lggscan import MARGIN, ScanConfig, scan, slack_at

getcontext().prec = 60


def g_decimal(r: int, function: str) -> Decimal:
    x = Decimal(r).ln()
    return x if function == "log" else x.ln()


def slack_decimal(point, function: str) -> float:
    """Slack ``2k g(r) - sum g(neighbours)`` in 60-digit decimal arithmetic."""
    r = sum(c * c for c in point)
    total = 2 * len(point) * g_decimal(r, function)
    for i in range(len(point)):
        for step in (1, -1):
            q = list(point)
            q[i] += step
            total -= g_decimal(sum(c * c for c in q), function)
    return float(total)


coords = st.integers(-3000, 3000)


@settings(max_examples=300)
@given(coords, coords, st.sampled_from(["log", "loglog"]))
def test_slack_matches_high_precision_oracle(x, y, function):
    if max(abs(x), abs(y)) < 3:
        return
    want = slack_decimal((x, y), function)
    got = slack_at((x, y), function)
    # the slack is a small difference of O(1/|x|) increments, so its error is
    # absolute; 1e-16 is far below the 1e-12 classification margin
    assert abs(got - want) <= 1e-16


@settings(max_examples=200)
@given(coords, coords)
def test_slack_symmetry(x, y):
    if max(abs(x), abs(y)) < 3:
        return
    s = slack_at((x, y))
    for p in [(-x, y), (x, -y), (y, x), (-y, -x)]:
        assert abs(slack_at(p) - s) <= 1e-16


def test_axis_slack_positive():
    for k in (10, 100, 1000, 10_000, 10**6):
        assert slack_at((0, k), "loglog") > 0


def test_config_validation():
    with pytest.raises(ValueError):
        ScanConfig(1)
    with pytest.raises(ValueError):
        ScanConfig(10, exclusion_radius=0.5)
    with pytest.raises(ValueError):
        ScanConfig(10, function="sqrt")
    with pytest.raises(ValueError):
        ScanConfig(10, dims=4)


def test_scan_covers_every_point_once():
    n = 25
    r = scan(ScanConfig(n, "log", chunk=7, threads=3))
    assert r.points_scanned + len(r.excluded) == (2 * n + 1) ** 2 - 1
    assert len(set(r.excluded)) == len(r.excluded)


def test_scan_matches_pointwise_evaluation():
    n = 20
    r = scan(ScanConfig(n, "log"))
    excluded = set(r.excluded)
    brute = set()
    for x in range(-n, n + 1):
        for y in range(-n, n + 1):
            if (x, y) == (0, 0) or (x, y) in excluded:
                continue
            if slack_at((x, y), "log") <= -MARGIN:
                brute.add((x, y))
    assert {p for p, _ in r.violations} == brute


def test_default_exclusions():
    r = scan(ScanConfig(5, "loglog"))
    assert len(r.excluded) == 20
    assert (1, 1) in r.excluded and (2, 0) in r.excluded and (2, 2) not in r.excluded
    # log log of the squared radius is undefined or negative there
    assert all(x * x + y * y <= 5 for x, y in r.excluded)


def test_loglog_clean_and_log_fails_near_diagonals():
    clean = scan(ScanConfig(300, "loglog"))
    assert clean.violations == [] and clean.min_slack > 0
    bad = scan(ScanConfig(60, "log"))
    assert bad.violations
    for (x, y), _ in bad.violations:
        angle = math.degrees(math.atan2(abs(y), abs(x)))
        assert abs(angle - 45) <= 22.5


def test_three_dimensions_has_violations():
    r = scan(ScanConfig(12, "loglog", dims=3))
    assert r.violations
    assert all(len(p) == 3 for p, _ in r.violations)


def test_symmetry_sample_checked():
    r = scan(ScanConfig(200, "loglog", sample_fraction=0.05, seed=3))
    assert r.symmetry_checked > 100 and r.symmetry_max_diff <= 1e-9


def test_report_files(tmp_path):
    r = scan(ScanConfig(15, "log"))
    r.write_csv(tmp_path / "v.csv")
    r.write_json(tmp_path / "s.json")
    rows = list(csv.DictReader(open(tmp_path / "v.csv")))
    assert len(rows) == len(r.violations) + len(r.marginals)
    assert set(rows[0]) == {"x", "y", "slack", "kind"}
    doc = json.load(open(tmp_path / "s.json"))
    assert doc["violation_count"] == len(r.violations)
    assert doc["min_slack_at"] == list(r.min_slack_at)
