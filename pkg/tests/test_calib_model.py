import logging

import numpy as np
import pytest

from oedcal.calib_model import (
    ClosedFormModel,
    ExpressionModel,
    LinearModel,
    RadiochromicModel,
    RegressorMode,
    Scale,
    available_models,
    get_model,
    gradient_discrepancy,
)
from oedcal.errors import DomainError, SingularWeight, TargetOutOfRange
from oedcal.numerics import Interval


def response_grid(model, n=200):
    return model.response_space.grid(n)


def test_radiochromic_mean_and_dose_image(model):
    assert model.m == 3
    assert model.nominal.names == ("alpha", "beta", "gamma")
    assert model.mu(0.0) == 0.0
    top = model.mu(0.45)
    print(f"\nmu(0.45) = {top:.6f}")
    assert abs(top - 10.0) < 0.01, f"mu(0.45) should be close to the 10 Gy dose bound, got {top}"

    image = model.dose_image()
    assert image.lo == 0.0
    assert abs(image.hi - top) < 1e-12
    assert model.space(Scale.DOSE) == image
    assert model.space(Scale.RESPONSE) == model.response_space


def test_mu_eta_round_trip(model):
    ys = response_grid(model)
    doses = model.mu(ys)
    back = model.eta(doses)
    err = float(np.max(np.abs(back - ys)))
    assert err < 1e-9, f"eta(mu(y)) should return y, max error {err:.3e}"
    assert model.eta(0.0) == 0.0


def test_eta_outside_dose_image_is_rejected(model):
    with pytest.raises(TargetOutOfRange):
        model.eta(12.0)


def test_weighted_regressor_identity(model):
    ys = response_grid(model)
    w = model.weight(ys)
    f = model.regressor(ys)
    g = model.dmu_dtheta(ys)
    residual = float(np.max(np.abs(w[:, None] * f + g)))
    assert residual < 1e-10, f"w(y) f(y) must equal -dmu/dtheta(y), residual {residual:.3e}"


def test_regressor_limit_at_zero_response(model):
    f = model.regressor(0.0)
    assert f.shape == (3,)
    assert np.all(f == 0.0), f"The regressor at y = 0 is the zero vector, got {f}"
    assert np.all(np.isfinite(model.regressor(response_grid(model))))


def test_naive_inverse_regressor_is_the_parameter_gradient(model):
    ys = response_grid(model, 20)
    assert np.array_equal(model.regressor(ys, mode=RegressorMode.NAIVE_INVERSE), model.dmu_dtheta(ys))


def test_analytic_gradients_match_finite_differences(model):
    theta_error, y_error = gradient_discrepancy(model)
    print(f"\nGradient discrepancies: theta {theta_error:.2e}, y {y_error:.2e}")
    assert theta_error < 1e-5
    assert y_error < 1e-5


def test_domain_checks(model):
    with pytest.raises(DomainError):
        model.mu(0.5)
    with pytest.raises(DomainError):
        model.regressor(-0.01)
    with pytest.raises(DomainError):
        RadiochromicModel(nominal=(8.32, 49.91, 0.9))
    with pytest.raises(DomainError):
        model.mu(0.2, theta=(1.0, 2.0))


def test_registry_and_dose_space_warning(caplog):
    assert "radiochromic-ebt3" in available_models()
    assert "linear" in available_models()
    with pytest.raises(KeyError):
        get_model("no-such-model")

    with caplog.at_level(logging.WARNING, logger="oedcal.calib_model"):
        get_model("radiochromic-ebt3", dose_space=Interval(0.0, 20.0))
    assert any("does not match" in r.message for r in caplog.records), (
        "An inconsistent dose range should be reported as a warning."
    )


def test_linear_model():
    model = LinearModel(nominal=(2.0,))
    assert model.dose_space == Interval(0.0, 2.0)
    f = model.regressor(np.array([0.25, 0.5]))
    assert np.allclose(f[:, 0], [-0.125, -0.25])
    assert abs(model.eta(1.0) - 0.5) < 1e-12


def quadratic_model():
    return ClosedFormModel(
        name="quadratic",
        parameter_names=("a", "b"),
        mu=lambda y, t: t[0] * y + t[1] * y**2,
        dmu_dtheta=lambda y, t: np.stack([y, y**2], axis=-1),
        dmu_dy=lambda y, t: t[0] + 2.0 * t[1] * y,
        nominal=(1.0, 3.0),
        response_space=Interval(0.0, 1.0),
        dose_space=Interval(0.0, 4.0),
    )


def test_closed_form_model():
    model = quadratic_model()
    assert model.m == 2
    assert abs(model.mu(1.0) - 4.0) < 1e-15
    theta_error, y_error = gradient_discrepancy(model)
    assert theta_error < 1e-5 and y_error < 1e-5

    f = model.regressor(0.5)
    assert np.allclose(f, [-0.5 / 4.0, -0.25 / 4.0])


def test_flat_weight_with_nonzero_gradient_is_singular():
    model = ClosedFormModel(
        name="cubic",
        parameter_names=("a", "b"),
        mu=lambda y, t: t[0] * (y - 0.5) ** 3 + t[1],
        dmu_dtheta=lambda y, t: np.stack([(y - 0.5) ** 3, np.ones_like(y)], axis=-1),
        dmu_dy=lambda y, t: 3.0 * t[0] * (y - 0.5) ** 2,
        nominal=(1.0, 1.0),
        response_space=Interval(0.0, 1.0),
        dose_space=Interval(0.875, 1.125),
    )
    with pytest.raises(SingularWeight):
        model.regressor(np.array([0.25, 0.5]))


def radiochromic_expression(mu="alpha*y + beta*y**gamma", d_gamma="beta*xlogy(y**gamma, y)"):
    return ExpressionModel(
        "film",
        ("alpha", "beta", "gamma"),
        mu=mu,
        dmu_dtheta=("y", "y**gamma", d_gamma),
        dmu_dy="alpha + beta*gamma*y**(gamma - 1)",
        nominal=(8.32, 49.91, 2.6),
        response_space=Interval(0.0, 0.45),
        dose_space=Interval(0.0, 10.0),
    )


def test_expression_model_matches_closed_form(model):
    inline = radiochromic_expression()
    ys = response_grid(model, 91)
    assert np.allclose(inline.mu(ys), model.mu(ys), rtol=1e-12, atol=1e-12)
    assert np.allclose(inline.regressor(ys), model.regressor(ys), rtol=1e-10, atol=1e-12)
    theta_error, y_error = gradient_discrepancy(inline)
    assert theta_error < 1e-5 and y_error < 1e-5


def test_expression_model_errors():
    with pytest.raises(DomainError, match="delta"):
        radiochromic_expression(mu="alpha*y + delta*y**gamma")
    with pytest.raises(DomainError, match="parse"):
        radiochromic_expression(mu="alpha*y +")
    with pytest.raises(DomainError, match="gradient expressions"):
        ExpressionModel("line", ("a", "b"), "a*y + b", ("y",), "a", (1.0, 0.0), Interval(0.0, 1.0), Interval(0.0, 1.0))
    wrong = radiochromic_expression(d_gamma="beta*y**gamma")
    theta_error, _ = gradient_discrepancy(wrong)
    assert theta_error > 1e-2
