import numpy as np
import pytest

from oedcal.calib_model import Scale
from oedcal.criteria import CriterionSpec
from oedcal.design_core import Design
from oedcal.reference import golden_row
from oedcal.solvers import evaluate_fixed_design


@pytest.fixture(scope="module")
def practitioner(model, optima):
    row = golden_row("practitioner")
    criteria = [optima[check.criterion].criterion for check in row.efficiencies]
    try:
        report = evaluate_fixed_design(row.dose_design(), model, criteria, references=optima)
    except Exception as e:
        pytest.fail(f"Evaluating the practitioner design failed. Error: {e}")
    return row, report


def test_practitioner_design_on_the_response_scale(practitioner):
    row, report = practitioner
    points = np.array(report.design_response.points)
    print(f"\nPractitioner design on the response scale: {np.round(points, 3)}")
    assert len(points) == 16
    assert np.all(np.abs(points - row.points) <= row.tolerances["point"]), f"Points {points} vs {row.points}"
    assert np.allclose(report.design_dose.points, row.dose_points, atol=1e-9)


def test_practitioner_efficiencies(practitioner):
    row, report = practitioner
    assert not report.errors, f"No criterion should fail for a 16-point design: {report.errors}"
    for check in row.efficiencies:
        eff = report.efficiencies[check.criterion]
        print(f"{check.criterion}: {eff:.4f} (expected {check.value})")
        assert abs(eff - check.value) <= check.tol, (
            f"{check.criterion}-efficiency {eff:.4f} should be {check.value} +- {check.tol}"
        )


def test_singular_design_reports_errors_per_criterion(model, optima):
    design = Design.create(Scale.DOSE, [4.45, 10.0], [0.48, 0.52])
    criteria = [CriterionSpec.d(), optima["c_beta"].criterion, optima["c_gamma"].criterion]
    report = evaluate_fixed_design(design, model, criteria, references=optima)
    assert report.efficiencies["D"] is None
    assert "D" in report.errors
    assert report.values["c_beta"] is None and "c_beta" in report.errors, "Two doses cannot estimate beta."
    assert report.values["c_gamma"] is None and "c_gamma" in report.errors
    assert set(report.errors) == {"D", "c_beta", "c_gamma"}
