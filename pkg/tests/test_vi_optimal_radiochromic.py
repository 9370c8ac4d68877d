import numpy as np

from oedcal.calib_model import Scale
from oedcal.criteria import CriterionSpec, phi_vi, sensitivity_vi
from oedcal.design_core import Design, efficiency, merge_support
from oedcal.reference import golden_row
from oedcal.solvers import CertificateKind, SolverOptions, StepRule, WynnConfig, solve_vi_optimal


def test_vi_optimal_design(optima):
    report = optima["VI"]
    row = golden_row("VI")
    design = report.design_response
    print(f"\nV_I-optimal: {design} / {report.design_dose}, Phi_VI {report.criterion_value:.6g}")

    assert len(design) == 3, f"Expected three support points, got {design}"
    assert np.all(np.abs(np.array(design.points) - row.points) <= row.tolerances["point"]), (
        f"Support {design.points} should match {row.points}"
    )
    assert np.all(np.abs(np.array(design.weights) - row.weights) <= row.tolerances["weight"]), (
        f"Weights {design.weights} should match {row.weights}"
    )


def test_vi_certificate(model, optima):
    report = optima["VI"]
    cert = report.certificate
    assert cert.kind is CertificateKind.GET
    assert cert.converged
    assert cert.bound >= golden_row("VI").tolerances["bound"], f"GET bound {cert.bound} below 0.999"

    value = phi_vi(report.design_response, model)
    ys = model.response_space.grid(4001)
    psi = sensitivity_vi(ys, report.design_response, model)
    assert float(np.min(psi)) >= -1e-3 * value
    xs, ws = report.design_response.arrays()
    assert abs(float(np.dot(ws, sensitivity_vi(xs, report.design_response, model)))) <= 1e-9 * value


def test_vi_design_d_efficiency(model, optima):
    (expected,) = golden_row("VI").efficiencies
    eff = efficiency(optima["VI"].design_response, optima["D"].design_response, CriterionSpec.d(), model)
    print(f"\nD-efficiency of the V_I design: {eff:.4f}")
    assert abs(eff - expected.value) <= expected.tol, f"Expected {expected.value} +- {expected.tol}, got {eff}"


def test_line_search_step_reaches_the_same_optimum(model, optima):
    start = Design.equal_weights(Scale.RESPONSE, [0.1, 0.2, 0.3, 0.45])
    options = SolverOptions(wynn=WynnConfig(initial=start, step_rule=StepRule.LINE_SEARCH, max_iterations=20_000))
    report = solve_vi_optimal(model, options=options)
    eff = efficiency(report.design_response, optima["VI"].design_response, CriterionSpec.vi(), model)
    print(f"\nLine-search V_I design: {report.design_response}, efficiency {eff:.6f}")
    assert report.certificate.converged, f"Merged design has bound {report.certificate.bound}"
    assert report.certificate.bound >= 0.999
    assert eff >= 0.999
    clustered = merge_support(report.design_response, 0.02 * 0.45, 1e-3)
    assert len(clustered) == 3, f"Expected three weighted support points, got {report.design_response}"


def test_wynn_stop_and_merge_tolerances(model):
    config = WynnConfig()
    step = model.response_space.width / (config.candidates - 1)
    assert config.stop_delta > config.delta, "The iteration stop must be stricter than the certified bound."
    assert abs(config.stop_delta - 0.99975) < 1e-12
    assert config.merge_tol(model.response_space) >= step, "Neighbouring candidates must be pooled."


def test_vi_support_is_well_separated(optima):
    config = WynnConfig()
    design = optima["VI"].design_response
    gaps = np.diff(design.points)
    assert float(np.min(gaps)) > config.cluster_fraction * 0.45, f"Support {design.points} has clustered points"
    assert min(design.weights) >= config.polish_weight_tol
