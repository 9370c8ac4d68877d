"""Design criteria, sensitivity functions and equivalence-theorem bounds.

All criteria are written so that smaller is better:

* ``phi_d``  -- ``det(M) ** (-1/m)``
* ``phi_c``  -- ``c^T M^+ c``
* ``phi_gi`` -- the largest inverse-prediction variance over the response space
* ``phi_vi`` -- the average inverse-prediction variance over the response space

The inverse-prediction variance at ``y`` is ``g(y)^T M^+ g(y)`` with
``g = dmu/dtheta``; it equals ``w(y)**2 * d(y)`` where ``d = f^T M^+ f``.
Sensitivity functions are directional derivatives of the criterion towards the
one-point design at ``y``; a design is optimal when they are non-negative.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike
from scipy import optimize

from .calib_model import CalibrationModel, RegressorMode, ThetaLike
from .design_core import Design, InformationMatrix, fim
from .errors import NotEstimable, SingularDesign, Unsupported
from .numerics import FloatArray, PseudoInverse, SymMatrix, gauss_legendre, log_det, sym_inverse

__all__ = [
    "CriterionKind",
    "CriterionSpec",
    "phi_d",
    "phi_c",
    "var_inverse_prediction",
    "max_inverse_variance",
    "phi_gi",
    "prediction_moment",
    "phi_vi",
    "sensitivity_d",
    "sensitivity_c",
    "sensitivity_vi",
    "get_efficiency_bound",
    "criterion_value",
    "sensitivity_samples",
]

logger = logging.getLogger(__name__)

ESTIMABILITY_TOL = 1e-8
MIN_NODES = 16

MatrixLike = Union[InformationMatrix, ArrayLike]


class CriterionKind(enum.Enum):
    D = "D"
    C = "c"
    GI = "GI"
    VI = "VI"


@dataclass(frozen=True)
class CriterionSpec:
    kind: CriterionKind
    c_vector: Optional[Tuple[float, ...]] = None
    nodes: int = 64
    grid: int = 2000
    mode: RegressorMode = RegressorMode.CALIBRATION
    label: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind is CriterionKind.C:
            if self.c_vector is None or not any(v != 0 for v in self.c_vector):
                raise ValueError("a c-criterion needs a nonzero c vector")
            object.__setattr__(self, "c_vector", tuple(float(v) for v in self.c_vector))
        elif self.c_vector is not None:
            raise ValueError(f"{self.kind.value}-criterion does not take a c vector")
        if self.nodes < MIN_NODES:
            raise ValueError(f"quadrature needs at least {MIN_NODES} nodes, got {self.nodes}")
        if self.grid < 2:
            raise ValueError(f"the G_I search grid needs at least 2 points, got {self.grid}")

    @classmethod
    def d(cls, mode: RegressorMode = RegressorMode.CALIBRATION) -> "CriterionSpec":
        return cls(CriterionKind.D, mode=mode)

    @classmethod
    def c(cls, c_vector: ArrayLike, label: Optional[str] = None) -> "CriterionSpec":
        return cls(CriterionKind.C, c_vector=tuple(np.asarray(c_vector, dtype=float)), label=label)

    @classmethod
    def gi(cls, grid: int = 2000) -> "CriterionSpec":
        return cls(CriterionKind.GI, grid=grid)

    @classmethod
    def vi(cls, nodes: int = 64) -> "CriterionSpec":
        return cls(CriterionKind.VI, nodes=nodes)

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind is CriterionKind.C:
            return "c(" + ",".join(f"{v:g}" for v in self.c_vector) + ")"
        return self.kind.value

    @property
    def c_array(self) -> FloatArray:
        return np.array(self.c_vector, dtype=float)


def _matrix(M: MatrixLike) -> SymMatrix:
    return M.matrix if isinstance(M, InformationMatrix) else np.asarray(M, dtype=float)


def _estimable(M: SymMatrix, pinv: PseudoInverse, vectors: FloatArray) -> np.ndarray:
    """Row-wise check that each vector lies in the range of ``M``."""
    v = np.atleast_2d(vectors)
    residual = v - (v @ pinv.matrix) @ M
    scale = np.linalg.norm(v, axis=-1)
    return np.linalg.norm(residual, axis=-1) <= ESTIMABILITY_TOL * np.maximum(scale, 1e-300)


def phi_d(M: MatrixLike) -> float:
    """``det(M) ** (-1/m)``; ``inf`` for a singular matrix."""
    a = _matrix(M)
    value = log_det(a)
    if value == -math.inf:
        return math.inf
    return math.exp(-value / a.shape[0])


def phi_c(M: MatrixLike, c: ArrayLike) -> float:
    a = _matrix(M)
    c = np.asarray(c, dtype=float)
    pinv = sym_inverse(a)
    if not _estimable(a, pinv, c)[0]:
        raise NotEstimable(f"c = {c} is not in the range of the information matrix")
    return float(c @ pinv.matrix @ c)


class _Variance:
    """Inverse-prediction variance of one design, evaluated on demand."""

    def __init__(self, design: Design, model: CalibrationModel, theta: ThetaLike):
        self.model = model
        self.theta = model.theta_array(theta)
        self.M = fim(design, model, self.theta).matrix
        self.pinv = sym_inverse(self.M)

    @property
    def singular(self) -> bool:
        return self.pinv.rank < self.M.shape[0]

    def __call__(self, y: ArrayLike) -> FloatArray:
        g = np.atleast_2d(self.model.dmu_dtheta(np.atleast_1d(y), self.theta))
        if self.singular:
            ok = _estimable(self.M, self.pinv, g) | ~np.any(g != 0.0, axis=-1)
            if not np.all(ok):
                bad = np.atleast_1d(y)[~ok]
                raise NotEstimable(f"inverse prediction not estimable at y = {bad[:5]}")
        return np.einsum("ij,jk,ik->i", g, self.pinv.matrix, g)


def var_inverse_prediction(y: ArrayLike, design: Design, model: CalibrationModel, theta: ThetaLike = None):
    """``dmu/dtheta(y)^T M^+ dmu/dtheta(y)`` for the calibration information matrix."""
    values = _Variance(design, model, theta)(y)
    return float(values[0]) if np.ndim(y) == 0 else values.reshape(np.shape(y))


def max_inverse_variance(
    design: Design, model: CalibrationModel, theta: ThetaLike = None, grid: int = 2000
) -> Tuple[float, float]:
    """Location and value of the largest inverse-prediction variance.

    A dense grid (support points included) locates the best cell; a bounded
    scalar search refines it between the neighbouring grid points.
    """
    variance = _Variance(design, model, theta)
    space = model.response_space
    ys = np.union1d(space.grid(grid), space.clip(design.points))
    values = variance(ys)
    best = int(np.argmax(values))
    y_best, v_best = float(ys[best]), float(values[best])

    lo, hi = ys[max(best - 1, 0)], ys[min(best + 1, ys.size - 1)]
    if hi > lo:
        result = optimize.minimize_scalar(
            lambda y: -float(variance(y)[0]),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * space.width},
        )
        if -result.fun > v_best:
            y_best, v_best = float(result.x), float(-result.fun)
    return y_best, v_best


def phi_gi(design: Design, model: CalibrationModel, theta: ThetaLike = None, grid: int = 2000) -> float:
    return max_inverse_variance(design, model, theta, grid)[1]


def prediction_moment(model: CalibrationModel, theta: ThetaLike = None, nodes: int = 64) -> SymMatrix:
    """``(1/width) * integral of g g^T`` over the response space, ``g = dmu/dtheta``."""
    t = model.theta_array(theta)
    space = model.response_space

    def outer(ys: FloatArray) -> FloatArray:
        g = model.dmu_dtheta(ys, t)
        return g[:, :, None] * g[:, None, :]

    return gauss_legendre(outer, space, nodes) / space.width


def phi_vi(design: Design, model: CalibrationModel, theta: ThetaLike = None, nodes: int = 64) -> float:
    """Average inverse-prediction variance, ``trace(A M^+)`` with ``A`` from :func:`prediction_moment`."""
    variance = _Variance(design, model, theta)
    if variance.singular:
        # raises NotEstimable when the variance is undefined at any quadrature node
        gauss_legendre(variance, model.response_space, nodes)
    A = prediction_moment(model, variance.theta, nodes)
    return float(np.trace(A @ variance.pinv.matrix))


def _nonsingular_inverse(design: Design, model: CalibrationModel, theta: FloatArray, mode: RegressorMode):
    M = fim(design, model, theta, mode).matrix
    pinv = sym_inverse(M)
    if pinv.rank < M.shape[0]:
        raise SingularDesign(f"information matrix has rank {pinv.rank} < {M.shape[0]}")
    return pinv.matrix


def sensitivity_d(
    y: ArrayLike,
    design: Design,
    model: CalibrationModel,
    theta: ThetaLike = None,
    mode: RegressorMode = RegressorMode.CALIBRATION,
):
    """``m - f(y)^T M^-1 f(y)``."""
    t = model.theta_array(theta)
    inverse = _nonsingular_inverse(design, model, t, mode)
    f = np.atleast_2d(model.regressor(np.atleast_1d(y), t, mode))
    values = model.m - np.einsum("ij,jk,ik->i", f, inverse, f)
    return float(values[0]) if np.ndim(y) == 0 else values.reshape(np.shape(y))


def sensitivity_vi(
    y: ArrayLike, design: Design, model: CalibrationModel, theta: ThetaLike = None, nodes: int = 64
):
    """``Phi_VI - f(y)^T M^-1 A M^-1 f(y)``: the directional derivative of ``phi_vi``."""
    t = model.theta_array(theta)
    inverse = _nonsingular_inverse(design, model, t, RegressorMode.CALIBRATION)
    A = prediction_moment(model, t, nodes)
    f = np.atleast_2d(model.regressor(np.atleast_1d(y), t))
    h = f @ inverse
    values = float(np.trace(A @ inverse)) - np.einsum("ij,jk,ik->i", h, A, h)
    return float(values[0]) if np.ndim(y) == 0 else values.reshape(np.shape(y))


def sensitivity_c(y: ArrayLike, design: Design, model: CalibrationModel, c: ArrayLike, theta: ThetaLike = None):
    """``c^T M^+ c - (c^T M^+ f(y))**2``."""
    t = model.theta_array(theta)
    M = fim(design, model, t).matrix
    c = np.asarray(c, dtype=float)
    value = phi_c(M, c)
    pinv = sym_inverse(M).matrix
    f = np.atleast_2d(model.regressor(np.atleast_1d(y), t))
    values = value - (f @ (pinv @ c)) ** 2
    return float(values[0]) if np.ndim(y) == 0 else values.reshape(np.shape(y))


def criterion_value(design: Design, spec: CriterionSpec, model: CalibrationModel, theta: ThetaLike = None) -> float:
    """Value of ``spec`` for a response-scale design."""
    t = model.theta_array(theta)
    if spec.kind is CriterionKind.D:
        return phi_d(fim(design, model, t, spec.mode))
    if spec.kind is CriterionKind.C:
        return phi_c(fim(design, model, t, spec.mode), spec.c_array)
    if spec.kind is CriterionKind.GI:
        return phi_gi(design, model, t, spec.grid)
    return phi_vi(design, model, t, spec.nodes)


def sensitivity_samples(
    design: Design, spec: CriterionSpec, model: CalibrationModel, theta: ThetaLike = None, points: int = 2001
) -> Tuple[FloatArray, FloatArray]:
    """Directional derivative of ``spec`` sampled on an even response grid.

    For D-optimality the classical ``m - d(y)`` form is returned; the
    directional derivative of ``phi_d`` itself is ``phi_d / m`` times that.
    """
    t = model.theta_array(theta)
    ys = model.response_space.grid(points)
    if spec.kind is CriterionKind.D:
        return ys, sensitivity_d(ys, design, model, t, spec.mode)
    if spec.kind is CriterionKind.C:
        return ys, sensitivity_c(ys, design, model, spec.c_array, t)
    if spec.kind is CriterionKind.VI:
        return ys, sensitivity_vi(ys, design, model, t, spec.nodes)
    raise Unsupported("G_I-optimality is not differentiable and has no sensitivity function")


def get_efficiency_bound(
    design: Design,
    spec: CriterionSpec,
    model: CalibrationModel,
    theta: ThetaLike = None,
    grid: int = 4001,
) -> float:
    """Equivalence-theorem lower bound ``1 + min psi / Phi`` on the efficiency, clipped to [0, 1].

    Singular designs get a bound of zero.
    """
    if spec.kind is CriterionKind.GI:
        raise Unsupported("G_I-optimality is not differentiable: no equivalence-theorem bound")
    t = model.theta_array(theta)
    space = model.response_space
    ys = np.union1d(space.grid(grid), space.clip(design.points))
    try:
        if spec.kind is CriterionKind.D:
            ratio = float(np.min(sensitivity_d(ys, design, model, t, spec.mode))) / model.m
        elif spec.kind is CriterionKind.VI:
            value = phi_vi(design, model, t, spec.nodes)
            ratio = float(np.min(sensitivity_vi(ys, design, model, t, spec.nodes))) / value
        else:
            value = phi_c(fim(design, model, t, spec.mode), spec.c_array)
            ratio = float(np.min(sensitivity_c(ys, design, model, spec.c_array, t))) / value
    except (SingularDesign, NotEstimable):
        return 0.0
    return float(np.clip(1.0 + ratio, 0.0, 1.0))
