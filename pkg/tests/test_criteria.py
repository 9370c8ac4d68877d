import math

import numpy as np
import pytest

from oedcal.calib_model import Scale
from oedcal.criteria import (
    CriterionKind,
    CriterionSpec,
    criterion_value,
    get_efficiency_bound,
    max_inverse_variance,
    phi_c,
    phi_d,
    phi_gi,
    phi_vi,
    prediction_moment,
    sensitivity_c,
    sensitivity_d,
    sensitivity_samples,
    sensitivity_vi,
    var_inverse_prediction,
)
from oedcal.design_core import Design, fim
from oedcal.errors import NotEstimable, SingularDesign, Unsupported
from oedcal.numerics import gauss_legendre

PROBE = np.array([0.0, 0.1, 0.25, 0.38, 0.45])


def four_point_design():
    return Design.create(Scale.RESPONSE, [0.05, 0.2, 0.33, 0.45], [0.1, 0.4, 0.2, 0.3])


def central_difference(phi, M, f, alpha=1e-5):
    """Derivative of phi((1 - a) M + a f f^T) at a = 0."""
    outer = np.outer(f, f)
    plus = phi((1.0 - alpha) * M + alpha * outer)
    minus = phi((1.0 + alpha) * M - alpha * outer)
    return (plus - minus) / (2.0 * alpha)


def test_criterion_spec_validation():
    assert CriterionSpec.d().name == "D"
    assert CriterionSpec.gi().kind is CriterionKind.GI
    assert CriterionSpec.c([0, 0, 1]).name == "c(0,0,1)"
    assert CriterionSpec.c([1, 0, 0], label="c_alpha").name == "c_alpha"
    with pytest.raises(ValueError):
        CriterionSpec(CriterionKind.C)
    with pytest.raises(ValueError):
        CriterionSpec.c([0, 0, 0])
    with pytest.raises(ValueError):
        CriterionSpec(CriterionKind.D, c_vector=(1.0,))
    with pytest.raises(ValueError):
        CriterionSpec.vi(nodes=8)


def test_phi_d_and_phi_c_on_plain_matrices():
    assert abs(phi_d(np.eye(3)) - 1.0) < 1e-15
    assert abs(phi_d(np.diag([1.0, 8.0, 1.0])) - 0.5) < 1e-14
    assert phi_d(np.diag([1.0, 0.0, 1.0])) == math.inf

    M = np.diag([2.0, 4.0, 0.0])
    assert abs(phi_c(M, [1.0, 1.0, 0.0]) - 0.75) < 1e-14
    with pytest.raises(NotEstimable):
        phi_c(M, [0.0, 0.0, 1.0])


def test_variance_identities(model):
    design = four_point_design()
    M = fim(design, model).matrix
    f = model.regressor(PROBE)
    w = model.weight(PROBE)
    d = np.einsum("ij,jk,ik->i", f, np.linalg.inv(M), f)
    v = var_inverse_prediction(PROBE, design, model)
    assert np.allclose(v, w**2 * d, rtol=1e-10, atol=1e-14), "Inverse-prediction variance must equal w^2 d."
    assert isinstance(var_inverse_prediction(0.2, design, model), float)

    average = gauss_legendre(lambda y: var_inverse_prediction(y, design, model), model.response_space, 64)
    average /= model.response_space.width
    value = phi_vi(design, model)
    assert abs(value - average) <= 1e-10 * value, f"phi_vi {value} differs from the averaged variance {average}"


def test_max_inverse_variance_dominates_the_grid(model):
    design = four_point_design()
    y_max, v_max = max_inverse_variance(design, model)
    grid = model.response_space.grid(501)
    assert v_max >= float(np.max(var_inverse_prediction(grid, design, model))) - 1e-12
    assert model.response_space.contains(y_max)
    assert phi_gi(design, model) == v_max


def test_sensitivities_are_directional_derivatives(model):
    design = four_point_design()
    M = fim(design, model).matrix
    A = prediction_moment(model)
    c = np.array([0.0, 0.0, 1.0])

    def vi(matrix):
        return float(np.trace(A @ np.linalg.inv(matrix)))

    def cc(matrix):
        return float(c @ np.linalg.inv(matrix) @ c)

    def dd(matrix):
        return float(np.linalg.det(matrix)) ** (-1.0 / 3.0)

    phi = phi_d(M)
    for y, f in zip(PROBE, model.regressor(PROBE)):
        numeric = central_difference(vi, M, f)
        analytic = sensitivity_vi(y, design, model)
        assert abs(numeric - analytic) <= 1e-3 * abs(analytic) + 1e-9 * vi(M), (
            f"V_I sensitivity at y = {y}: analytic {analytic}, finite difference {numeric}"
        )

        numeric = central_difference(cc, M, f)
        analytic = sensitivity_c(y, design, model, c)
        assert abs(numeric - analytic) <= 1e-3 * abs(analytic) + 1e-9 * cc(M)

        numeric = central_difference(dd, M, f)
        analytic = phi / 3.0 * sensitivity_d(y, design, model)
        assert abs(numeric - analytic) <= 1e-3 * abs(analytic) + 1e-9 * phi


def test_sensitivities_average_to_zero_over_the_design(model):
    design = four_point_design()
    xs, ws = design.arrays()
    c = np.array([1.0, 0.0, 0.0])
    for name, sens, scale in [
        ("D", sensitivity_d(xs, design, model), 3.0),
        ("VI", sensitivity_vi(xs, design, model), phi_vi(design, model)),
        ("c", sensitivity_c(xs, design, model, c), phi_c(fim(design, model), c)),
    ]:
        total = float(np.dot(ws, sens))
        assert abs(total) <= 1e-9 * scale, f"{name}: weighted sensitivity sum should vanish, got {total}"


def test_singular_designs(model):
    two_points = Design.create(Scale.RESPONSE, [0.2, 0.45])
    assert criterion_value(two_points, CriterionSpec.d(), model) == math.inf
    with pytest.raises(SingularDesign):
        sensitivity_d(0.3, two_points, model)
    with pytest.raises(NotEstimable):
        phi_vi(two_points, model)
    assert get_efficiency_bound(two_points, CriterionSpec.d(), model) == 0.0
    assert get_efficiency_bound(two_points, CriterionSpec.vi(), model) == 0.0


def test_efficiency_bound_and_samples(model):
    design = four_point_design()
    bound = get_efficiency_bound(design, CriterionSpec.d(), model)
    assert 0.0 <= bound <= 1.0
    with pytest.raises(Unsupported):
        get_efficiency_bound(design, CriterionSpec.gi(), model)

    ys, psi = sensitivity_samples(design, CriterionSpec.d(), model)
    assert ys.shape == psi.shape == (2001,)
    assert ys[0] == 0.0 and ys[-1] == 0.45
    ys, psi = sensitivity_samples(design, CriterionSpec.c([0, 1, 0]), model, points=11)
    assert psi.shape == (11,)
    with pytest.raises(Unsupported):
        sensitivity_samples(design, CriterionSpec.gi(), model)
