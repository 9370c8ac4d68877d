import numpy as np
import pytest

from oedcal import solvers
from oedcal.calib_model import RadiochromicModel
from oedcal.criteria import phi_c
from oedcal.design_core import efficiency, fim
from oedcal.errors import CertificationFailed, DegenerateSystem
from oedcal.reference import golden_row
from oedcal.solvers import CertificateKind, SolverOptions, elfving_system, evaluate_fixed_design, solve_c_optimal

KEYS = ["c_alpha", "c_beta", "c_gamma"]
# beta has no published design to match, see test_beta_design_is_three_point
MATCHED = ["c_alpha", "c_gamma"]


@pytest.mark.parametrize("key", MATCHED)
def test_c_optimal_matches_reference_design(optima, key):
    report = optima[key]
    row = golden_row(key)
    design = report.design_response
    print(f"\n{key}: {design} ({report.certificate.diagnostics['method']})")

    assert len(design) == len(row.points), f"{key} should have {len(row.points)} support points, got {design}"
    assert np.all(np.abs(np.array(design.points) - row.points) <= row.tolerances["point"]), (
        f"{key} support {design.points} should match {row.points}"
    )
    assert np.all(np.abs(np.array(design.weights) - row.weights) <= row.tolerances["weight"]), (
        f"{key} weights {design.weights} should match {row.weights}"
    )


@pytest.mark.parametrize("key", KEYS)
def test_elfving_certificate(model, optima, key):
    report = optima[key]
    cert = report.certificate
    assert cert.kind is CertificateKind.ELFVING
    assert cert.converged, f"{key}: a random design beat the Elfving solution: {cert.diagnostics}"

    value = phi_c(fim(report.design_response, model), report.criterion.c_array)
    rho = cert.diagnostics["rho"]
    assert abs(value * rho**2 - 1.0) <= 1e-6, f"{key}: Phi_c = {value} but 1/rho^2 = {1.0 / rho**2}"
    assert value <= cert.diagnostics["random_best"] * (1.0 + 1e-9)


@pytest.mark.parametrize("key", KEYS)
def test_c_efficiency_of_the_d_optimal_design(model, optima, key):
    (expected,) = golden_row(key).efficiencies
    ref = optima[key]
    eff = efficiency(optima["D"].design_response, ref.design_response, ref.criterion, model)
    print(f"\n{key}-efficiency of the D-optimal design: {eff:.4f}")
    assert abs(eff - expected.value) <= expected.tol, f"Expected {expected.value} +- {expected.tol}, got {eff}"


def test_beta_design_is_three_point(model, optima):
    report = optima["c_beta"]
    design = report.design_response
    print(f"\nc_beta: {design} / {report.design_dose}, rho {report.certificate.diagnostics['rho']:.6g}")
    assert len(design) == 3, f"Expected a three-point design, got {design}"
    assert not report.certificate.diagnostics["singular"]
    assert report.certificate.bound is not None


def test_two_points_with_the_top_response_cannot_estimate_beta(model):
    # f_alpha(a) f_gamma(b) - f_gamma(a) f_alpha(b) keeps its sign, so beta stays outside the span
    e_beta = np.array([0.0, 1.0, 0.0])
    top = model.regressor(np.array([0.45]))[0]
    dets = np.array(
        [np.linalg.det(np.vstack([f, top, e_beta])) for f in model.regressor(np.linspace(0.01, 0.44, 431))]
    )
    assert np.all(dets > 0) or np.all(dets < 0), "A two-point design with 0.45 would estimate beta."
    assert float(np.min(np.abs(dets))) > 0.0


def test_published_beta_support_leaves_beta_inestimable(model, optima):
    published = golden_row("c_beta").design()
    report = evaluate_fixed_design(published, model, [optima["c_beta"].criterion], references=optima)
    assert report.values["c_beta"] is None
    assert "c_beta" in report.errors, f"{published} should be reported as unable to estimate beta"


@pytest.mark.parametrize("key", MATCHED)
def test_closed_form_weights_reproduce_the_support_weights(model, optima, key):
    report = optima[key]
    cert = report.certificate
    assert cert.diagnostics["method"] in ("full", "reduced")
    xs, ws = report.design_response.arrays()
    signs = np.array(cert.diagnostics["signs"], dtype=float)
    assert signs.size == xs.size

    p, rho = elfving_system(model.regressor(xs), signs, report.criterion.c_array)
    rho = abs(rho)
    print(f"\n{key}: closed-form weights {np.round(p, 6)}, rho {rho:.10g}")
    assert np.allclose(p, ws, atol=1e-6), f"Closed-form weights {p} differ from {ws}"
    assert abs(rho - cert.diagnostics["rho"]) <= 1e-6 * rho


def test_open_elfving_gap_is_not_certified(model, monkeypatch):
    refine = solvers._refine_full

    def overstated(*args):
        points, weights, rho, signs = refine(*args)
        return points, weights, 1.01 * rho, signs

    monkeypatch.setattr(solvers, "_refine_full", overstated)
    with pytest.raises(CertificationFailed) as excinfo:
        options = SolverOptions(starts=4, random_designs=200)
        solve_c_optimal(model, [1.0, 0.0, 0.0], options=options, label="c_alpha")
    cert = excinfo.value.report.certificate
    assert not cert.converged
    assert cert.diagnostics["elfving_gap"] > 1e-6
    assert cert.diagnostics["random_best"] >= excinfo.value.report.criterion_value, (
        "Only the gap should hold back the certificate here."
    )


def test_elfving_system_square_and_reduced():
    p, rho = elfving_system(np.eye(2), [1.0, 1.0], [1.0, 1.0])
    assert np.allclose(p, [0.5, 0.5])
    assert abs(rho - 0.5) < 1e-15

    p, rho = elfving_system(np.eye(2), [1.0, -1.0], [1.0, -1.0])
    assert np.allclose(p, [0.5, 0.5]) and abs(rho - 0.5) < 1e-15

    # one row spanning c
    p, rho = elfving_system([[2.0, 0.0]], [1.0], [1.0, 0.0])
    assert np.allclose(p, [1.0]) and abs(rho - 2.0) < 1e-12

    with pytest.raises(DegenerateSystem):
        elfving_system([[1.0, 0.0], [1.0, 0.0]], [1.0, 1.0], [1.0, 1.0])
    with pytest.raises(DegenerateSystem):
        elfving_system([[1.0, 0.0]], [1.0], [0.0, 1.0])


def test_c_vector_is_validated():
    model = RadiochromicModel()
    with pytest.raises(ValueError):
        solve_c_optimal(model, [0.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        solve_c_optimal(model, [1.0, 0.0])
