"""Numerical kernels: monotone inversion, quadrature, symmetric matrix algebra and
derivative-free box minimization.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import functools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize
from scipy.stats import qmc

from .errors import NonFinite, NotPSD, TargetOutOfRange

__all__ = [
    "Interval",
    "SymMatrix",
    "PseudoInverse",
    "BoxMinimum",
    "as_sym_matrix",
    "invert_monotone",
    "gauss_legendre",
    "sym_inverse",
    "log_det",
    "minimize_box",
    "stratified_starts",
]

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
# Symmetric matrices travel as plain square float arrays; as_sym_matrix enforces symmetry.
SymMatrix = FloatArray

RANK_CUTOFF = 1e-10
BISECTION_WIDTH = 1e-12
NEWTON_STEPS = 5
MAX_BOX_DIM = 6


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"Interval bounds must be finite, got [{lo}, {hi}]")
        if not lo < hi:
            raise ValueError(f"Interval needs lo < hi, got [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x: ArrayLike, slack: float = 0.0) -> bool:
        values = np.asarray(x, dtype=float)
        return bool(np.all((values >= self.lo - slack) & (values <= self.hi + slack)))

    def clip(self, x: ArrayLike) -> FloatArray:
        return np.clip(np.asarray(x, dtype=float), self.lo, self.hi)

    def grid(self, n: int) -> FloatArray:
        if n < 2:
            raise ValueError(f"A grid needs at least two points, got {n}")
        return np.linspace(self.lo, self.hi, n)


class PseudoInverse(NamedTuple):
    matrix: FloatArray
    rank: int


class BoxMinimum(NamedTuple):
    x: FloatArray
    value: float


def as_sym_matrix(matrix: ArrayLike) -> SymMatrix:
    """Return ``matrix`` as a float array with exactly mirrored off-diagonal entries."""
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"Expected a non-empty square matrix, got shape {a.shape}")
    return 0.5 * (a + a.T)


def _finite(value: float, where: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise NonFinite(f"{where} returned a non-finite value ({value})")
    return value


def invert_monotone(
    g: Callable[[float], float],
    target: float,
    domain: Interval,
    tol: float = 1e-10,
    derivative: Optional[Callable[[float], float]] = None,
) -> float:
    """Solve ``g(y) = target`` for a continuous, strictly monotone ``g`` on ``domain``.

    Bisection brackets the root to a width of ``1e-12 * domain.width``; when a
    derivative is supplied, up to five Newton steps polish the result, each kept
    only if it shrinks the residual and stays inside the domain.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    target = float(target)
    g_lo = _finite(g(domain.lo), "g(lo)")
    g_hi = _finite(g(domain.hi), "g(hi)")
    if g_lo == target:
        return domain.lo
    if g_hi == target:
        return domain.hi

    slack = tol * max(1.0, abs(target))
    low_value, high_value = min(g_lo, g_hi), max(g_lo, g_hi)
    if target < low_value - slack or target > high_value + slack:
        raise TargetOutOfRange(
            f"target {target} is outside [{low_value}, {high_value}] on [{domain.lo}, {domain.hi}]"
        )
    if target <= low_value:
        return domain.lo if g_lo <= g_hi else domain.hi
    if target >= high_value:
        return domain.hi if g_lo <= g_hi else domain.lo

    def residual(y: float) -> float:
        return _finite(g(y), f"g({y})") - target

    y = float(
        optimize.bisect(residual, domain.lo, domain.hi, xtol=BISECTION_WIDTH * domain.width, maxiter=200)
    )
    if derivative is None:
        return y

    r = residual(y)
    for _ in range(NEWTON_STEPS):
        if r == 0.0:
            break
        slope = float(derivative(y))
        if slope == 0.0 or not math.isfinite(slope):
            break
        candidate = y - r / slope
        if not domain.contains(candidate):
            break
        r_candidate = residual(candidate)
        if abs(r_candidate) >= abs(r):
            break
        y, r = candidate, r_candidate
    return y


@functools.lru_cache(maxsize=32)
def _legendre_rule(nodes: int) -> Tuple[FloatArray, FloatArray]:
    x, w = np.polynomial.legendre.leggauss(nodes)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def legendre_nodes(domain: Interval, nodes: int) -> Tuple[FloatArray, FloatArray]:
    """Gauss–Legendre abscissae and weights mapped onto ``domain``."""
    if nodes < 2:
        raise ValueError(f"Gauss-Legendre needs at least two nodes, got {nodes}")
    x, w = _legendre_rule(int(nodes))
    half = 0.5 * domain.width
    return domain.lo + half * (x + 1.0), half * w


def gauss_legendre(g: Callable[[FloatArray], ArrayLike], domain: Interval, nodes: int = 64):
    """Integrate ``g`` over ``domain`` with an ``nodes``-point Gauss–Legendre rule.

    ``g`` is called once with the array of nodes. It may return one value per
    node or an array whose leading axis runs over the nodes, in which case the
    integral is taken elementwise (this is how matrix-valued moments are built).
    """
    points, weights = legendre_nodes(domain, nodes)
    values = np.asarray(g(points), dtype=float)
    if values.ndim == 0:
        values = np.full(points.shape, float(values))
    if not np.all(np.isfinite(values)):
        raise NonFinite("integrand is non-finite at one or more quadrature nodes")
    result = np.tensordot(weights, values, axes=(0, 0))
    return float(result) if np.ndim(result) == 0 else result


def sym_inverse(matrix: ArrayLike) -> PseudoInverse:
    """Moore–Penrose pseudoinverse of a symmetric matrix, with its numerical rank.

    Eigenvalues below ``1e-10`` times the largest absolute eigenvalue count as zero.
    """
    a = as_sym_matrix(matrix)
    values, vectors = np.linalg.eigh(a)
    top = float(np.max(np.abs(values)))
    if top == 0.0:
        return PseudoInverse(np.zeros_like(a), 0)
    keep = np.abs(values) > RANK_CUTOFF * top
    kept = vectors[:, keep]
    inverse = (kept / values[keep]) @ kept.T
    return PseudoInverse(0.5 * (inverse + inverse.T), int(np.count_nonzero(keep)))


def log_det(matrix: ArrayLike, tol: float = 1e-10) -> float:
    """Log-determinant of a PSD matrix; ``-inf`` when the matrix is singular."""
    values = np.linalg.eigvalsh(as_sym_matrix(matrix))
    top = float(np.max(np.abs(values)))
    if values[0] < -tol * max(1.0, top):
        raise NotPSD(f"smallest eigenvalue {values[0]:.3e} is negative")
    if top == 0.0 or values[0] <= RANK_CUTOFF * top:
        return -math.inf
    return float(np.sum(np.log(values)))


def stratified_starts(box: Sequence[Interval], starts: int) -> FloatArray:
    """Deterministic, space-filling start points (unscrambled Halton, origin skipped)."""
    sampler = qmc.Halton(d=len(box), scramble=False)
    sampler.fast_forward(1)
    unit = sampler.random(starts)
    lows = np.array([iv.lo for iv in box])
    widths = np.array([iv.width for iv in box])
    return lows + unit * widths


def _initial_simplex(x0: FloatArray, lows: FloatArray, highs: FloatArray) -> FloatArray:
    k = x0.size
    simplex = np.tile(x0, (k + 1, 1))
    for i in range(k):
        step = 0.05 * (highs[i] - lows[i])
        simplex[i + 1, i] = x0[i] + step if x0[i] + step <= highs[i] else x0[i] - step
    return simplex


def minimize_box(
    g: Callable[[FloatArray], float],
    box: Sequence[Interval],
    starts: int = 16,
    *,
    initial: Optional[ArrayLike] = None,
    xatol: float = 1e-10,
    fatol: float = 1e-14,
    maxfev: Optional[int] = None,
    workers: Optional[int] = None,
) -> BoxMinimum:
    """Multistart bounded Nelder–Mead.

    Local searches start from ``starts`` stratified points (plus ``initial`` when
    given) and each is restarted once from its own result. NaN and infinite
    objective values are treated as ``+inf``. The best point over all runs is
    returned; ties keep the earliest start, so the result only depends on the
    inputs.
    """
    k = len(box)
    if not 1 <= k <= MAX_BOX_DIM:
        raise ValueError(f"minimize_box supports 1..{MAX_BOX_DIM} dimensions, got {k}")
    if starts < 1:
        raise ValueError(f"starts must be positive, got {starts}")
    lows = np.array([iv.lo for iv in box])
    highs = np.array([iv.hi for iv in box])
    bounds = list(zip(lows, highs))
    maxfev = maxfev or 600 * k

    def objective(x: FloatArray) -> float:
        value = float(g(np.clip(x, lows, highs)))
        return value if math.isfinite(value) else math.inf

    start_points = stratified_starts(box, starts)
    if initial is not None:
        start_points = np.vstack([np.clip(np.asarray(initial, dtype=float), lows, highs), start_points])

    def local_search(x0: FloatArray) -> BoxMinimum:
        best = BoxMinimum(x0.copy(), objective(x0))
        if not math.isfinite(best.value):
            return best
        for _ in range(2):
            with np.errstate(invalid="ignore", over="ignore"):
                result = optimize.minimize(
                    objective,
                    best.x,
                    method="Nelder-Mead",
                    bounds=bounds,
                    options={
                        "xatol": xatol,
                        "fatol": fatol,
                        "maxfev": maxfev,
                        "initial_simplex": _initial_simplex(best.x, lows, highs),
                    },
                )
            if result.fun < best.value:
                best = BoxMinimum(np.clip(result.x, lows, highs), float(result.fun))
            else:
                break
        return best

    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(local_search, start_points))
    else:
        results = [local_search(x0) for x0 in start_points]

    best = min(results, key=lambda r: r.value)
    if not math.isfinite(best.value):
        raise NonFinite("objective is non-finite at every start point")
    logger.debug("minimize_box: best value %.12g from %d starts", best.value, len(results))
    return best
