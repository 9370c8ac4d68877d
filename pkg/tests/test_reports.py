import json

import numpy as np

from oedcal.calib_model import Scale
from oedcal.criteria import CriterionSpec
from oedcal.design_core import Design
from oedcal.reference import Check
from oedcal.reports import (
    OutputFormat,
    comparison_to_dict,
    design_from_pairs,
    design_to_pairs,
    emit_report,
    render_comparison,
    render_text,
    report_to_dict,
    round_sig,
    to_json,
)
from oedcal.solvers import Certificate, CertificateKind, DesignReport


def sample_report():
    response = Design.equal_weights(Scale.RESPONSE, [0.0912, 0.2701, 0.45])
    dose = Design.equal_weights(Scale.DOSE, [0.8034, 3.9012, 10.0035])
    certificate = Certificate(
        kind=CertificateKind.GET,
        converged=True,
        bound=0.99999,
        min_sensitivity=-1e-7,
        iterations=0,
        diagnostics={"grid_points": 4001},
    )
    return DesignReport(
        criterion=CriterionSpec.d(),
        design_response=response,
        design_dose=dose,
        criterion_value=1234.5678901234567,
        certificate=certificate,
        model_name="radiochromic-ebt3",
        theta=(8.32, 49.91, 2.6),
        efficiencies={"D": 1.0},
        profile=((0.5, 2.0), (0.6, 1.5)),
    )


def test_round_sig():
    assert round_sig(1.0 / 3.0) == 0.333333333333
    assert round_sig(123456.7890123456) == 123456.789012
    assert round_sig(float("inf")) is None
    assert round_sig(float("nan")) is None
    assert round_sig(None) is None


def test_report_schema():
    data = report_to_dict(sample_report(), {"name": "radiochromic-ebt3"})
    assert set(data) >= {
        "scenario", "model", "theta", "criterion", "design_response", "design_dose", "certificate", "efficiencies"
    }
    assert data["criterion"] == {"name": "D", "value": 1234.56789012}
    assert data["certificate"]["type"] == "GET"
    assert data["certificate"]["converged"] is True
    assert data["design_response"][0] == [0.0912, 0.333333333333]
    assert len(data["design_dose"]) == 3


def test_json_design_round_trip_is_byte_identical():
    text = to_json(report_to_dict(sample_report()))
    data = json.loads(text)
    design = design_from_pairs(data["design_response"], "response")
    assert abs(sum(design.weights) - 1.0) < 1e-12
    data["design_response"] = design_to_pairs(design)
    assert to_json(data) == text, "Serializing a reloaded design must reproduce the same bytes."


def test_text_rendering_uses_fractions():
    text = render_text(sample_report())
    print("\n" + text)
    assert "0.09 (1/3)" in text
    assert "10.00 (1/3)" in text
    assert "converged" in text


def test_emit_report_is_deterministic(tmp_path):
    report = sample_report()
    first = emit_report(report, OutputFormat.JSON, tmp_path / "a", "d_optimal", {"seed": 1})
    second = emit_report(report, OutputFormat.JSON, tmp_path / "b", "d_optimal", {"seed": 1})
    assert first[0].read_bytes() == second[0].read_bytes()

    written = emit_report(report, OutputFormat.CSV, tmp_path / "c", "sequence")
    assert [p.name for p in written] == ["sequence.csv", "sequence_profile.csv"]
    lines = written[0].read_text().splitlines()
    assert lines[0] == "scale,point,weight"
    assert len(lines) == 7

    (text_path,) = emit_report(report, OutputFormat.TEXT, tmp_path / "d", "d_optimal")
    assert text_path.suffix == ".txt"


def test_comparison_report():
    checks = [
        Check("D", "points", [0.09, 0.27, 0.45], [0.0912, 0.2701, 0.45], 0.005, True),
        Check("VI", "GET bound", 0.999, 0.9971, 0.0, False),
    ]
    data = comparison_to_dict(checks)
    assert data["passed"] is False
    assert data["failures"] == 1
    text = render_comparison(checks)
    assert "PASS" in text and "FAIL" in text
    assert "1/2 checks passed" in text
    assert np.isclose(data["checks"][1]["actual"], 0.9971)
