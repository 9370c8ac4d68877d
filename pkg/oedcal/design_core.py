"""Approximate designs, their information matrices and scale transforms."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike

from .calib_model import CalibrationModel, RegressorMode, Scale, ThetaLike
from .errors import EmptyDesign, InvalidDesign, NotEstimable, ScaleMismatch, SingularDesign
from .numerics import FloatArray, Interval, SymMatrix, as_sym_matrix

if TYPE_CHECKING:
    from .criteria import CriterionSpec

__all__ = [
    "Design",
    "InformationMatrix",
    "fim",
    "information_from_regressors",
    "transform_design",
    "inverse_transform_design",
    "as_response",
    "check_in_space",
    "merge_support",
    "default_point_tol",
    "efficiency",
]

logger = logging.getLogger(__name__)

WEIGHT_SUM_TOL = 1e-12
SPACE_SLACK = 1e-9


@dataclass(frozen=True)
class Design:
    """A finite probability measure on the response or the dose scale.

    ``points`` are strictly increasing and ``weights`` are non-negative and sum
    to one. Use :meth:`create` to build a design from unsorted or unnormalized
    input.
    """

    scale: Scale
    points: Tuple[float, ...]
    weights: Tuple[float, ...]

    def __post_init__(self) -> None:
        points = tuple(float(p) for p in self.points)
        weights = tuple(float(w) for w in self.weights)
        if not points:
            raise InvalidDesign("a design needs at least one support point")
        if len(points) != len(weights):
            raise InvalidDesign(f"{len(points)} points but {len(weights)} weights")
        if not all(math.isfinite(v) for v in points + weights):
            raise InvalidDesign("design points and weights must be finite")
        if any(w < 0 for w in weights):
            raise InvalidDesign(f"weights must be non-negative, got {weights}")
        if abs(math.fsum(weights) - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidDesign(f"weights must sum to 1, got {math.fsum(weights)!r}")
        if any(b <= a for a, b in zip(points, points[1:])):
            raise InvalidDesign(f"points must be strictly increasing, got {points}")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def create(cls, scale: Scale, points: ArrayLike, weights: Optional[ArrayLike] = None) -> "Design":
        """Sort the points, pool exact duplicates and normalize the weights."""
        xs = np.atleast_1d(np.asarray(points, dtype=float))
        ws = np.ones_like(xs) if weights is None else np.atleast_1d(np.asarray(weights, dtype=float))
        if xs.shape != ws.shape:
            raise InvalidDesign(f"{xs.size} points but {ws.size} weights")
        if np.any(ws < 0):
            raise InvalidDesign(f"weights must be non-negative, got {ws}")
        total = float(np.sum(ws))
        if not total > 0:
            raise InvalidDesign("weights must have positive total mass")

        unique, inverse = np.unique(xs, return_inverse=True)
        pooled = np.zeros_like(unique)
        np.add.at(pooled, inverse, ws)
        pooled /= pooled.sum()
        return cls(scale, tuple(unique), tuple(pooled))

    @classmethod
    def equal_weights(cls, scale: Scale, points: ArrayLike) -> "Design":
        return cls.create(scale, points)

    def __len__(self) -> int:
        return len(self.points)

    def arrays(self) -> Tuple[FloatArray, FloatArray]:
        return np.array(self.points), np.array(self.weights)

    def pairs(self) -> List[Tuple[float, float]]:
        return list(zip(self.points, self.weights))

    def mix(self, point: float, alpha: float) -> "Design":
        """``(1 - alpha) * self + alpha * delta(point)``."""
        if not 0.0 <= alpha <= 1.0:
            raise ValueError(f"mixing weight must lie in [0, 1], got {alpha}")
        xs, ws = self.arrays()
        return Design.create(self.scale, np.append(xs, point), np.append((1.0 - alpha) * ws, alpha))

    def __str__(self) -> str:
        body = ", ".join(f"{p:.4g} ({w:.3f})" for p, w in self.pairs())
        return f"{self.scale.value}{{{body}}}"


@dataclass(frozen=True, eq=False)
class InformationMatrix:
    matrix: SymMatrix
    mode: RegressorMode = RegressorMode.CALIBRATION
    theta: Tuple[float, ...] = field(default=())

    @property
    def m(self) -> int:
        return self.matrix.shape[0]

    def eigenvalues(self) -> FloatArray:
        return np.linalg.eigvalsh(self.matrix)


def information_from_regressors(regressors: ArrayLike, weights: ArrayLike) -> SymMatrix:
    """``sum_i w_i f_i f_i^T`` for regressor rows ``f_i``, summed in row order."""
    f = np.atleast_2d(np.asarray(regressors, dtype=float))
    w = np.asarray(weights, dtype=float)
    return as_sym_matrix(f.T @ (w[:, None] * f))


def fim(
    design: Design,
    model: CalibrationModel,
    theta: ThetaLike = None,
    mode: RegressorMode = RegressorMode.CALIBRATION,
) -> InformationMatrix:
    """Information matrix of a response-scale design."""
    if design.scale is not Scale.RESPONSE:
        raise ScaleMismatch("the information matrix is assembled from a response-scale design")
    t = model.theta_array(theta)
    xs, ws = design.arrays()
    matrix = information_from_regressors(model.regressor(xs, t, mode), ws)
    return InformationMatrix(matrix, mode, tuple(t))


def transform_design(design: Design, model: CalibrationModel, theta: ThetaLike = None) -> Design:
    """Map a response-scale design to the dose scale through ``mu``."""
    if design.scale is not Scale.RESPONSE:
        raise ScaleMismatch("transform_design expects a response-scale design")
    xs, ws = design.arrays()
    return Design(Scale.DOSE, tuple(np.asarray(model.mu(xs, theta))), tuple(ws))


def inverse_transform_design(design: Design, model: CalibrationModel, theta: ThetaLike = None) -> Design:
    """Map a dose-scale design back to the response scale through ``eta``."""
    if design.scale is not Scale.DOSE:
        raise ScaleMismatch("inverse_transform_design expects a dose-scale design")
    xs, ws = design.arrays()
    return Design(Scale.RESPONSE, tuple(np.asarray(model.eta(xs, theta))), tuple(ws))


def as_response(design: Design, model: CalibrationModel, theta: ThetaLike = None) -> Design:
    if design.scale is Scale.RESPONSE:
        return design
    return inverse_transform_design(design, model, theta)


def check_in_space(design: Design, model: CalibrationModel, theta: ThetaLike = None) -> None:
    space = model.space(design.scale, theta)
    slack = SPACE_SLACK * space.width
    if not space.contains(design.points, slack):
        raise InvalidDesign(
            f"{design.scale.value} design points {design.points} leave [{space.lo}, {space.hi}]"
        )


def default_point_tol(space: Interval) -> float:
    return 1e-4 * space.width


def _clusters(xs: FloatArray, ws: FloatArray, point_tol: float) -> Iterable[Tuple[float, float]]:
    centre, mass = xs[0], ws[0]
    for x, w in zip(xs[1:], ws[1:]):
        if x - centre < point_tol:
            total = mass + w
            centre = (centre * mass + x * w) / total if total > 0 else 0.5 * (centre + x)
            mass = total
        else:
            yield centre, mass
            centre, mass = x, w
    yield centre, mass


def merge_support(design: Design, point_tol: float, weight_tol: float = 1e-6) -> Design:
    """Pool points closer than ``point_tol`` at their weighted mean and drop tiny weights."""
    if point_tol < 0 or weight_tol < 0:
        raise ValueError("merge tolerances must be non-negative")
    xs, ws = design.arrays()
    merged = [(x, w) for x, w in _clusters(xs, ws, point_tol) if w >= weight_tol]
    if not merged:
        raise EmptyDesign(f"no support point keeps a weight of at least {weight_tol}")
    points, weights = zip(*merged)
    return Design.create(design.scale, points, weights)


def efficiency(
    design: Design,
    reference: Design,
    criterion: "CriterionSpec",
    model: CalibrationModel,
    theta: ThetaLike = None,
) -> float:
    """Efficiency ``Phi(reference) / Phi(design)`` of ``design`` against ``reference``.

    For D-optimality this is ``(det M(design) / det M(reference)) ** (1/m)``.
    Designs on the dose scale are mapped to the response scale first.
    """
    from .criteria import criterion_value

    t = model.theta_array(theta)
    try:
        value = criterion_value(as_response(design, model, t), criterion, model, t)
    except NotEstimable as exc:
        raise SingularDesign(f"design cannot be evaluated under {criterion.name}: {exc}") from exc
    if not math.isfinite(value):
        raise SingularDesign(f"design is singular under {criterion.name}")
    optimum = criterion_value(as_response(reference, model, t), criterion, model, t)
    if value == 0.0:
        return 1.0 if optimum == 0.0 else math.inf
    result = optimum / value
    if result > 1.0 + 1e-9:
        logger.warning(
            "%s efficiency %.6f exceeds 1: the reference design is not optimal", criterion.name, result
        )
    return result
