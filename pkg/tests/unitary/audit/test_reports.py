import math

import numpy as np
import pytest

from finsler_audit.audit import certify, error_report, make_report
from finsler_audit.exceptions import HypothesisUnverified


@pytest.mark.parametrize(
    "relation, lhs, rhs, margin",
    [("<=", 1.0, 3.0, 2.0), (">=", 1.0, 3.0, -2.0), ("==", 1.0, 3.0, -2.0), ("==", 3.0, 1.0, -2.0)],
)
def test_margins(relation, lhs, rhs, margin):
    report = make_report("claim", relation, lhs, rhs, 0.5)
    assert report.margin == margin
    assert report.passed is (margin >= -0.5)


def test_tolerance_boundary():
    assert make_report("claim", "<=", 1.5, 1.0, 0.5).passed
    assert not make_report("claim", "<=", 1.5000001, 1.0, 0.5).passed
    with pytest.raises(ValueError):
        make_report("claim", "<=", 1.0, 1.0, -1e-3)


def test_side_conditions():
    report = make_report("claim", "<=", 0.0, 1.0, 0.0, ok=False)
    assert report.margin == 1.0
    assert not report.passed
    assert not make_report("claim", "==", 0.0, 0.0, 1.0, margin=math.nan).passed


def test_divergent_sides():
    report = make_report("claim", "<=", 1.0, math.inf, 0.0)
    assert report.divergent
    assert report.passed
    assert make_report("claim", ">=", math.inf, 1.0, 0.0).divergent


def test_error_rows():
    report = error_report("poincare", ValueError("boom"), scenario="sphere")
    assert not report.passed
    assert math.isnan(report.margin)
    assert report.error == "ValueError: boom"
    row = report.as_row()
    assert row["scenario"] == "sphere"
    assert row["error"] == "ValueError: boom"
    assert set(row) == {
        "claim",
        "scenario",
        "relation",
        "lhs",
        "rhs",
        "margin",
        "tolerance",
        "passed",
        "informational",
        "error",
    }


def test_certify(gaussian_ctx):
    assert certify(gaussian_ctx, 1.0) == pytest.approx(1.0, abs=1e-7)
    assert certify(gaussian_ctx, 0.5, certified_k=1.0) == 1.0
    with pytest.raises(HypothesisUnverified):
        certify(gaussian_ctx, 1.1, certified_k=1.0)
    # negative bounds are always certified
    assert np.isfinite(certify(gaussian_ctx, -3.0, certified_k=1.0))
