"""Calibration models known through their inverse mean function.

A calibration model gives the explanatory value (dose) as a closed-form function
``x = mu(y, theta)`` of the observed response ``y`` (netOD). The forward mean
``eta`` is only available numerically. Designs are built on the response scale
with the regressor

    f(y) = -(dmu/dy)^{-1} dmu/dtheta

obtained from the inverse function theorem; ``w(y) = dmu/dy`` is the induced
heteroscedastic weight.
"""

from __future__ import annotations

import abc
import enum
import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import xlogy

from .errors import DomainError, SingularWeight
from .numerics import FloatArray, Interval, invert_monotone

__all__ = [
    "Scale",
    "RegressorMode",
    "ParameterVector",
    "CalibrationModel",
    "RadiochromicModel",
    "LinearModel",
    "ClosedFormModel",
    "ExpressionModel",
    "register_model",
    "check_dose_space",
    "get_model",
    "available_models",
    "gradient_discrepancy",
]

logger = logging.getLogger(__name__)

DOMAIN_SLACK = 1e-12


class Scale(enum.Enum):
    RESPONSE = "response"
    DOSE = "dose"


class RegressorMode(enum.Enum):
    """Which regressor builds the information matrix.

    ``CALIBRATION`` uses f(y) from the inverse function theorem. ``NAIVE_INVERSE``
    treats mu as if it were the forward model and uses dmu/dtheta directly,
    ignoring the heteroscedasticity introduced by the inversion.
    """

    CALIBRATION = "calibration"
    NAIVE_INVERSE = "naive-inverse"


@dataclass(frozen=True)
class ParameterVector:
    values: Tuple[float, ...]
    names: Tuple[str, ...] = ()

    def __post_init__(self) -> None:
        values = tuple(float(v) for v in self.values)
        if not values:
            raise DomainError("a parameter vector needs at least one component")
        if not all(math.isfinite(v) for v in values):
            raise DomainError(f"parameter components must be finite, got {values}")
        names = tuple(self.names) or tuple(f"theta{i + 1}" for i in range(len(values)))
        if len(names) != len(values):
            raise DomainError(f"{len(names)} names given for {len(values)} parameters")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    def __len__(self) -> int:
        return len(self.values)

    def as_array(self) -> FloatArray:
        return np.array(self.values, dtype=float)


ThetaLike = Union[ParameterVector, Sequence[float], FloatArray, None]


def _shape_back(values: FloatArray, scalar: bool):
    return float(values) if scalar else values


class CalibrationModel(abc.ABC):
    """Base class for models given by their inverse mean ``mu(y, theta)``.

    Subclasses implement the vectorized closed forms ``_mu``, ``_dmu_dtheta``
    and ``_dmu_dy``; the public methods validate inputs, default ``theta`` to
    the nominal vector and map scalars to scalars.
    """

    name: str = "model"
    parameter_names: Tuple[str, ...] = ()

    def __init__(self, nominal: ThetaLike, response_space: Interval, dose_space: Interval):
        nominal = nominal if isinstance(nominal, ParameterVector) else ParameterVector(
            tuple(np.asarray(nominal, dtype=float)), self.parameter_names
        )
        if self.parameter_names and nominal.names != self.parameter_names:
            nominal = ParameterVector(nominal.values, self.parameter_names)
        self.nominal = nominal
        self.response_space = response_space
        self.dose_space = dose_space
        self.check_theta(nominal.as_array())

    @property
    def m(self) -> int:
        return len(self.nominal)

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(name={self.name!r}, theta={self.nominal.values}, "
            f"response_space=[{self.response_space.lo}, {self.response_space.hi}], "
            f"dose_space=[{self.dose_space.lo}, {self.dose_space.hi}])"
        )

    @abc.abstractmethod
    def _mu(self, y: FloatArray, theta: FloatArray) -> FloatArray: ...

    @abc.abstractmethod
    def _dmu_dtheta(self, y: FloatArray, theta: FloatArray) -> FloatArray: ...

    @abc.abstractmethod
    def _dmu_dy(self, y: FloatArray, theta: FloatArray) -> FloatArray: ...

    def check_theta(self, theta: FloatArray) -> None:
        if theta.shape != (self.m,):
            raise DomainError(f"{self.name} expects {self.m} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise DomainError(f"parameters must be finite, got {theta}")

    def theta_array(self, theta: ThetaLike = None) -> FloatArray:
        if theta is None:
            return self.nominal.as_array()
        values = theta.as_array() if isinstance(theta, ParameterVector) else np.asarray(theta, dtype=float)
        self.check_theta(values)
        return values

    def _response(self, y: ArrayLike) -> Tuple[FloatArray, bool]:
        values = np.asarray(y, dtype=float)
        space = self.response_space
        if not space.contains(values, DOMAIN_SLACK):
            raise DomainError(f"response value(s) outside [{space.lo}, {space.hi}]: {values}")
        return space.clip(values), values.ndim == 0

    def mu(self, y: ArrayLike, theta: ThetaLike = None):
        values, scalar = self._response(y)
        return _shape_back(self._mu(values, self.theta_array(theta)), scalar)

    def dmu_dtheta(self, y: ArrayLike, theta: ThetaLike = None) -> FloatArray:
        values, _ = self._response(y)
        return self._dmu_dtheta(values, self.theta_array(theta))

    def dmu_dy(self, y: ArrayLike, theta: ThetaLike = None):
        values, scalar = self._response(y)
        return _shape_back(self._dmu_dy(values, self.theta_array(theta)), scalar)

    def weight(self, y: ArrayLike, theta: ThetaLike = None):
        """Heteroscedastic weight ``w(y) = dmu/dy``."""
        return self.dmu_dy(y, theta)

    def regressor(
        self, y: ArrayLike, theta: ThetaLike = None, mode: RegressorMode = RegressorMode.CALIBRATION
    ) -> FloatArray:
        """Regressor vector(s) with shape ``y.shape + (m,)``.

        Where ``dmu/dy`` vanishes together with ``dmu/dtheta`` (the radiochromic
        model at ``y = 0``) the analytic limit, the zero vector, is returned.
        """
        values, _ = self._response(y)
        t = self.theta_array(theta)
        gradient = self._dmu_dtheta(values, t)
        if mode is RegressorMode.NAIVE_INVERSE:
            return gradient
        w = np.asarray(self._dmu_dy(values, t), dtype=float)
        flat = w == 0.0
        if np.any(flat & np.any(gradient != 0.0, axis=-1)):
            raise SingularWeight(f"dmu/dy vanishes at y = {values[flat] if values.ndim else values}")
        return -gradient / np.where(flat, 1.0, w)[..., None]

    def eta(self, x: ArrayLike, theta: ThetaLike = None, tol: float = 1e-12):
        """Forward mean: the response ``y`` with ``mu(y, theta) = x``, found numerically."""
        t = self.theta_array(theta)
        doses = np.asarray(x, dtype=float)

        def invert(target: float) -> float:
            return invert_monotone(
                lambda y: float(self._mu(np.asarray(y), t)),
                target,
                self.response_space,
                tol=tol,
                derivative=lambda y: float(self._dmu_dy(np.asarray(y), t)),
            )

        responses = np.array([invert(v) for v in doses.ravel()]).reshape(doses.shape)
        return _shape_back(responses, doses.ndim == 0)

    def dose_image(self, theta: ThetaLike = None) -> Interval:
        """Image of the response space under ``mu(., theta)``."""
        t = self.theta_array(theta)
        ends = self._mu(np.array([self.response_space.lo, self.response_space.hi]), t)
        return Interval(float(np.min(ends)), float(np.max(ends)))

    def space(self, scale: Scale, theta: ThetaLike = None) -> Interval:
        return self.response_space if scale is Scale.RESPONSE else self.dose_image(theta)


class RadiochromicModel(CalibrationModel):
    """``mu(y) = alpha * y + beta * y**gamma`` for radiochromic film dosimetry."""

    name = "radiochromic-ebt3"
    parameter_names = ("alpha", "beta", "gamma")

    def __init__(
        self,
        nominal: ThetaLike = (8.32, 49.91, 2.6),
        response_space: Interval = Interval(0.0, 0.45),
        dose_space: Interval = Interval(0.0, 10.0),
    ):
        super().__init__(nominal, response_space, dose_space)

    def check_theta(self, theta: FloatArray) -> None:
        super().check_theta(theta)
        alpha, beta, gamma = theta
        if not (alpha > 0 and beta > 0 and gamma > 1):
            raise DomainError(f"radiochromic model needs alpha > 0, beta > 0, gamma > 1; got {tuple(theta)}")

    def _mu(self, y, theta):
        alpha, beta, gamma = theta
        return alpha * y + beta * y**gamma

    def _dmu_dtheta(self, y, theta):
        _, beta, gamma = theta
        power = y**gamma
        return np.stack([y, power, beta * xlogy(power, y)], axis=-1)

    def _dmu_dy(self, y, theta):
        alpha, beta, gamma = theta
        return alpha + beta * gamma * y ** (gamma - 1.0)


class LinearModel(CalibrationModel):
    """One-parameter calibration line ``mu(y) = theta * y``."""

    name = "linear"
    parameter_names = ("theta",)

    def __init__(
        self,
        nominal: ThetaLike = (1.0,),
        response_space: Interval = Interval(0.0, 1.0),
        dose_space: Optional[Interval] = None,
    ):
        slope = float(np.asarray(nominal.values if isinstance(nominal, ParameterVector) else nominal)[0])
        dose_space = dose_space or Interval(slope * response_space.lo, slope * response_space.hi)
        super().__init__(nominal, response_space, dose_space)

    def check_theta(self, theta: FloatArray) -> None:
        super().check_theta(theta)
        if theta[0] <= 0:
            raise DomainError(f"linear model needs a positive slope, got {theta[0]}")

    def _mu(self, y, theta):
        return theta[0] * y

    def _dmu_dtheta(self, y, theta):
        return np.asarray(y, dtype=float)[..., None]

    def _dmu_dy(self, y, theta):
        return np.full(np.shape(y), theta[0])


class ClosedFormModel(CalibrationModel):
    """A model assembled from user-supplied vectorized callables.

    The callables take ``(y, theta)`` with ``y`` an array and must return arrays
    of shape ``y.shape`` (``mu``, ``dmu_dy``) or ``y.shape + (m,)``
    (``dmu_dtheta``). Check hand-written gradients with
    :func:`gradient_discrepancy`.
    """

    def __init__(
        self,
        name: str,
        parameter_names: Sequence[str],
        mu: Callable[[FloatArray, FloatArray], FloatArray],
        dmu_dtheta: Callable[[FloatArray, FloatArray], FloatArray],
        dmu_dy: Callable[[FloatArray, FloatArray], FloatArray],
        nominal: ThetaLike,
        response_space: Interval,
        dose_space: Interval,
    ):
        self.name = name
        self.parameter_names = tuple(parameter_names)
        self._mu_fn, self._grad_fn, self._slope_fn = mu, dmu_dtheta, dmu_dy
        super().__init__(nominal, response_space, dose_space)

    def _mu(self, y, theta):
        return np.asarray(self._mu_fn(y, theta), dtype=float)

    def _dmu_dtheta(self, y, theta):
        return np.asarray(self._grad_fn(y, theta), dtype=float)

    def _dmu_dy(self, y, theta):
        return np.asarray(self._slope_fn(y, theta), dtype=float)


_EXPRESSION_NAMES = {
    "np": np,
    "pi": np.pi,
    "e": np.e,
    "xlogy": xlogy,
    **{f: getattr(np, f) for f in ("exp", "log", "log10", "sqrt", "sin", "cos", "tan", "arctan", "tanh", "abs")},
    "power": np.power,
}


def _compile(label: str, expression: str, parameter_names: Sequence[str]):
    try:
        code = compile(expression, f"<{label}>", "eval")
    except SyntaxError as exc:
        raise DomainError(f"cannot parse {label} = {expression!r}: {exc.msg}") from exc
    unknown = set(code.co_names) - set(_EXPRESSION_NAMES) - set(parameter_names) - {"y"}
    if unknown:
        raise DomainError(f"unknown names in {label} = {expression!r}: {', '.join(sorted(unknown))}")

    def evaluate(y: FloatArray, theta: FloatArray) -> FloatArray:
        scope = dict(_EXPRESSION_NAMES, y=y, **dict(zip(parameter_names, theta)))
        value = eval(code, {"__builtins__": {}}, scope)
        return np.broadcast_to(np.asarray(value, dtype=float), np.shape(y)).copy()

    return evaluate


class ExpressionModel(ClosedFormModel):
    """A closed-form model whose mean and derivatives are numpy expressions in ``y`` and the parameters.

    ``dmu_dtheta`` holds one expression per parameter. ``xlogy`` is available for
    terms such as ``y**gamma * log(y)`` that must vanish at ``y = 0``.
    """

    def __init__(
        self,
        name: str,
        parameter_names: Sequence[str],
        mu: str,
        dmu_dtheta: Sequence[str],
        dmu_dy: str,
        nominal: ThetaLike,
        response_space: Interval,
        dose_space: Interval,
    ):
        names = tuple(parameter_names)
        if len(dmu_dtheta) != len(names):
            raise DomainError(f"{len(dmu_dtheta)} gradient expressions given for {len(names)} parameters")
        self.expressions = {"mu": mu, "dmu_dtheta": tuple(dmu_dtheta), "dmu_dy": dmu_dy}
        columns = [_compile(f"d{name}", expr, names) for name, expr in zip(names, dmu_dtheta)]
        super().__init__(
            name,
            names,
            _compile("mu", mu, names),
            lambda y, t: np.stack([column(y, t) for column in columns], axis=-1),
            _compile("dmu_dy", dmu_dy, names),
            nominal,
            response_space,
            dose_space,
        )


ModelFactory = Callable[..., CalibrationModel]

_REGISTRY: Dict[str, ModelFactory] = {
    RadiochromicModel.name: RadiochromicModel,
    LinearModel.name: LinearModel,
}


def register_model(name: str, factory: ModelFactory) -> None:
    if name in _REGISTRY:
        raise ValueError(f"a model named {name!r} is already registered")
    _REGISTRY[name] = factory


def available_models() -> Tuple[str, ...]:
    return tuple(sorted(_REGISTRY))


def get_model(
    name: str,
    theta: ThetaLike = None,
    response_space: Optional[Interval] = None,
    dose_space: Optional[Interval] = None,
) -> CalibrationModel:
    """Build a registered model, overriding its nominal values and spaces when given."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {', '.join(available_models())}") from None
    kwargs = {}
    if theta is not None:
        kwargs["nominal"] = theta
    if response_space is not None:
        kwargs["response_space"] = response_space
    if dose_space is not None:
        kwargs["dose_space"] = dose_space
    return check_dose_space(factory(**kwargs))


def check_dose_space(model: CalibrationModel) -> CalibrationModel:
    """Warn when ``mu`` at the top of the response space misses the declared dose bound."""
    image = model.dose_image()
    if abs(image.hi - model.dose_space.hi) > 1e-3 * max(1.0, abs(model.dose_space.hi)):
        logger.warning(
            "%s: mu(%g) = %.6g does not match the declared dose range upper bound %g",
            model.name,
            model.response_space.hi,
            image.hi,
            model.dose_space.hi,
        )
    return model


def gradient_discrepancy(
    model: CalibrationModel, theta: ThetaLike = None, points: int = 50, step: float = 1e-6
) -> Tuple[float, float]:
    """Largest relative mismatch between analytic and central-difference derivatives.

    Returns ``(theta_error, y_error)`` over ``points`` interior response values.
    """
    t = model.theta_array(theta)
    space = model.response_space
    ys = np.linspace(space.lo, space.hi, points + 2)[1:-1]

    analytic = model.dmu_dtheta(ys, t)
    numeric = np.empty_like(analytic)
    for j in range(model.m):
        h = step * max(1.0, abs(t[j]))
        up, down = t.copy(), t.copy()
        up[j] += h
        down[j] -= h
        numeric[:, j] = (model._mu(ys, up) - model._mu(ys, down)) / (2.0 * h)
    theta_error = float(np.max(np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-12)))

    h = step * space.width
    slope = np.asarray(model.dmu_dy(ys, t))
    numeric_slope = (model._mu(ys + h, t) - model._mu(ys - h, t)) / (2.0 * h)
    y_error = float(np.max(np.abs(slope - numeric_slope) / np.maximum(np.abs(slope), 1e-12)))
    return theta_error, y_error
