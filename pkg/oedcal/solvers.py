"""Optimal design solvers.

* :func:`solve_d_optimal` -- equal-weight m-point search, certified by the
  equivalence theorem, with a Wynn fallback.
* :func:`solve_c_optimal` -- Elfving construction: a linear program over a
  response grid finds the boundary point of the Elfving set along ``c``, and the
  support is then refined continuously.
* :func:`solve_gi_optimal`, :func:`solve_vi_optimal` -- Wynn-type vertex
  direction algorithms on a candidate grid followed by a local polish.
* :func:`optimize_sequence` -- arithmetic or geometric space-filling sequences
  with an optimized ratio.
* :func:`evaluate_fixed_design` -- criterion values and efficiencies of a
  given design.
"""

from __future__ import annotations

import enum
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike
from scipy import optimize

from .calib_model import CalibrationModel, RegressorMode, Scale, ThetaLike
from .criteria import (
    CriterionKind,
    CriterionSpec,
    criterion_value,
    get_efficiency_bound,
    phi_c,
    prediction_moment,
    sensitivity_d,
    sensitivity_vi,
)
from .design_core import (
    Design,
    as_response,
    default_point_tol,
    efficiency,
    fim,
    information_from_regressors,
    merge_support,
    transform_design,
)
from .errors import (
    CertificationFailed,
    DegenerateSystem,
    EmptyDesign,
    InvalidDesign,
    MaxIterations,
    NonFinite,
    NotEstimable,
    SingularDesign,
    SingularSequence,
)
from .numerics import FloatArray, Interval, log_det, minimize_box, sym_inverse

__all__ = [
    "SequenceFamily",
    "SequenceSpec",
    "StepRule",
    "WynnConfig",
    "SolverOptions",
    "CertificateKind",
    "Certificate",
    "DesignReport",
    "FixedDesignReport",
    "solve_d_optimal",
    "elfving_system",
    "solve_c_optimal",
    "solve_gi_optimal",
    "solve_vi_optimal",
    "optimize_sequence",
    "evaluate_fixed_design",
    "cross_efficiencies",
    "solve_for",
    "reference_optima",
]

logger = logging.getLogger(__name__)

GET_TOL = 1e-3
RATIO_RANGE = (0.01, 0.99)
RATIO_SCAN = 197
ELFVING_BOX_STEPS = 5
LP_SUPPORT_TOL = 1e-10
LP_CLUSTER_GAP = 3
ELFVING_GAP_TOL = 1e-6


class SequenceFamily(enum.Enum):
    ARITHMETIC = "arithmetic"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class SequenceSpec:
    """An n-point equal-weight sequence pinned at the upper end of its scale's space."""

    family: SequenceFamily
    scale: Scale
    n: int
    ratio: Optional[float] = None

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError(f"a sequence needs at least two points, got n = {self.n}")
        if self.ratio is not None and not 0.0 < self.ratio < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {self.ratio}")

    def points(self, space: Interval, ratio: Optional[float] = None) -> FloatArray:
        r = self.ratio if ratio is None else ratio
        if r is None or not 0.0 < r < 1.0:
            raise ValueError(f"ratio must lie in (0, 1), got {r}")
        steps = self.n - np.arange(1, self.n + 1)
        if self.family is SequenceFamily.ARITHMETIC:
            return space.hi - r * space.width * steps / (self.n - 1)
        return space.lo + r**steps * space.width


class StepRule(enum.Enum):
    HARMONIC = "harmonic"
    LINE_SEARCH = "line-search"


@dataclass(frozen=True)
class WynnConfig:
    initial: Optional[Design] = None
    step_rule: StepRule = StepRule.HARMONIC
    delta: float = 0.999
    max_iterations: int = 100_000
    merge_cells: float = 2.5
    weight_tol: float = 1e-6
    merge_every: int = 50
    candidates: int = 2001
    stagnation_window: int = 200
    stagnation_tol: float = 1e-7
    polish: bool = True
    cluster_fraction: float = 0.02
    polish_weight_tol: float = 1e-3
    log_every: int = 5000
    stop_slack: float = 0.25
    rounds: int = 4

    def __post_init__(self) -> None:
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not 0.0 < self.stop_slack <= 1.0:
            raise ValueError(f"stop_slack must lie in (0, 1], got {self.stop_slack}")
        if self.merge_cells < 1.0:
            raise ValueError(f"merge_cells must be at least one candidate spacing, got {self.merge_cells}")
        if self.rounds < 1:
            raise ValueError(f"rounds must be positive, got {self.rounds}")
        if self.max_iterations < 1 or self.merge_every < 1 or self.stagnation_window < 2:
            raise ValueError("iteration counts must be positive (stagnation window at least 2)")
        if self.candidates < 2:
            raise ValueError(f"candidate grid needs at least two points, got {self.candidates}")

    def merge_tol(self, space: Interval) -> float:
        """Support points closer than ``merge_cells`` candidate spacings are pooled."""
        return self.merge_cells * space.width / (self.candidates - 1)

    @property
    def stop_delta(self) -> float:
        return 1.0 - self.stop_slack * (1.0 - self.delta)


@dataclass(frozen=True)
class SolverOptions:
    starts: int = 16
    workers: Optional[int] = None
    certificate_grid: int = 4001
    elfving_grid: int = 1801
    random_designs: int = 2000
    seed: int = 20190601
    nodes: int = 64
    gi_grid: int = 2000
    wynn: WynnConfig = field(default_factory=WynnConfig)
    strict: bool = False


class CertificateKind(enum.Enum):
    GET = "GET"
    STAGNATION = "STAGNATION"
    ELFVING = "ELFVING"
    RATIO = "RATIO"


@dataclass(frozen=True)
class Certificate:
    kind: CertificateKind
    converged: bool
    bound: Optional[float] = None
    min_sensitivity: Optional[float] = None
    iterations: int = 0
    diagnostics: Mapping[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class DesignReport:
    criterion: CriterionSpec
    design_response: Design
    design_dose: Design
    criterion_value: float
    certificate: Certificate
    model_name: str = ""
    theta: Tuple[float, ...] = ()
    efficiencies: Mapping[str, Optional[float]] = field(default_factory=dict)
    ratio: Optional[float] = None
    trace: Tuple[Tuple[int, float], ...] = ()
    profile: Tuple[Tuple[float, float], ...] = ()


@dataclass(frozen=True)
class FixedDesignReport:
    design_response: Design
    design_dose: Design
    values: Mapping[str, Optional[float]]
    efficiencies: Mapping[str, Optional[float]]
    errors: Mapping[str, str]
    model_name: str = ""
    theta: Tuple[float, ...] = ()


def _report(
    spec: CriterionSpec,
    design: Design,
    model: CalibrationModel,
    theta: FloatArray,
    certificate: Certificate,
    **extra: Any,
) -> DesignReport:
    return DesignReport(
        criterion=spec,
        design_response=design,
        design_dose=transform_design(design, model, theta),
        criterion_value=criterion_value(design, spec, model, theta),
        certificate=certificate,
        model_name=model.name,
        theta=tuple(float(v) for v in theta),
        **extra,
    )


def _finish(report: DesignReport, options: SolverOptions) -> DesignReport:
    if report.certificate.converged:
        logger.info("%s: converged, value %.10g", report.criterion.name, report.criterion_value)
        return report
    message = f"{report.criterion.name} solver did not converge ({report.certificate.kind.value})"
    if options.strict:
        raise MaxIterations(message, report)
    logger.warning("%s; returning the best design found", message)
    return report


# ---------------------------------------------------------------------------
# Candidate-grid criterion evaluation shared by the Wynn loop and the polish
# ---------------------------------------------------------------------------


class _CandidateCriterion:
    def __init__(
        self,
        kind: CriterionKind,
        model: CalibrationModel,
        theta: FloatArray,
        candidates: FloatArray,
        mode: RegressorMode,
        nodes: int,
    ):
        self.kind = kind
        self.model = model
        self.theta = theta
        self.mode = mode
        self.m = model.m
        self.candidates = candidates
        self.F = model.regressor(candidates, theta, mode)
        self.G = model.dmu_dtheta(candidates, theta) if kind is CriterionKind.GI else None
        self.A = prediction_moment(model, theta, nodes) if kind is CriterionKind.VI else None

    def information(self, weights: FloatArray) -> FloatArray:
        return information_from_regressors(self.F, weights)

    def design_information(self, points: FloatArray, weights: FloatArray) -> FloatArray:
        return information_from_regressors(self.model.regressor(points, self.theta, self.mode), weights)

    def _inverse(self, M: FloatArray) -> Optional[FloatArray]:
        pinv = sym_inverse(M)
        return pinv.matrix if pinv.rank == self.m else None

    def value(self, M: FloatArray) -> float:
        inverse = self._inverse(M)
        if inverse is None:
            return math.inf
        if self.kind is CriterionKind.D:
            return math.exp(-log_det(M) / self.m)
        if self.kind is CriterionKind.VI:
            return float(np.trace(self.A @ inverse))
        return float(np.max(np.einsum("ij,jk,ik->i", self.G, inverse, self.G)))

    def direction(self, M: FloatArray) -> Tuple[int, float, Optional[float]]:
        """Index of the next vertex, current criterion value and equivalence bound."""
        inverse = self._inverse(M)
        if inverse is None:
            raise SingularDesign("Wynn iterate lost full rank")
        if self.kind is CriterionKind.GI:
            variance = np.einsum("ij,jk,ik->i", self.G, inverse, self.G)
            index = int(np.argmax(variance))
            return index, float(variance[index]), None
        H = self.F @ inverse
        if self.kind is CriterionKind.D:
            sens = self.m - np.einsum("ij,ij->i", H, self.F)
            index = int(np.argmin(sens))
            return index, math.exp(-log_det(M) / self.m), 1.0 + float(sens[index]) / self.m
        value = float(np.trace(self.A @ inverse))
        sens = value - np.einsum("ij,jk,ik->i", H, self.A, H)
        index = int(np.argmin(sens))
        return index, value, 1.0 + float(sens[index]) / value


def _default_initial(model: CalibrationModel) -> Design:
    space = model.response_space
    k = model.m + 1
    return Design.equal_weights(Scale.RESPONSE, space.lo + space.width * np.arange(1, k + 1) / k)


def _polish(design: Design, evaluator: _CandidateCriterion, config: WynnConfig, space: Interval) -> Design:
    """Cluster the support and optimize points and weights locally; keep only improvements.

    Points lighter than ``polish_weight_tol`` are dropped before clustering so
    that leftover Wynn mass cannot bridge two support clusters.
    """
    xs, ws = design.arrays()
    heavy = ws >= config.polish_weight_tol
    if not np.any(heavy):
        return design
    trimmed = Design.create(Scale.RESPONSE, xs[heavy], ws[heavy])
    try:
        clustered = merge_support(trimmed, config.cluster_fraction * space.width, 0.0)
    except EmptyDesign:
        return design
    k = len(clustered)
    if not evaluator.m <= k <= evaluator.m + 2:
        logger.debug("polish skipped: %d clustered support points", k)
        return design

    xs, ws = clustered.arrays()
    reach = 0.05 * space.width
    box = [Interval(max(space.lo, x - reach), min(space.hi, x + reach)) for x in xs]
    box += [Interval(0.0, 1.0)] * k

    def split(z: FloatArray) -> Tuple[FloatArray, FloatArray]:
        v = z[k:]
        total = v.sum()
        return z[:k], (v / total if total > 0 else np.full(k, 1.0 / k))

    def objective(z: FloatArray) -> float:
        points, weights = split(z)
        return evaluator.value(evaluator.design_information(points, weights))

    start = np.concatenate([xs, ws / ws.max()])
    try:
        best = minimize_box(objective, box, starts=4, initial=start)
    except NonFinite:
        return design
    points, weights = split(best.x)
    candidate = merge_support(Design.create(Scale.RESPONSE, points, weights), default_point_tol(space) * 0.1)
    before = evaluator.value(evaluator.design_information(*design.arrays()))
    after = evaluator.value(evaluator.design_information(*candidate.arrays()))
    if after < before:
        logger.debug("polish improved %.12g -> %.12g", before, after)
        return candidate
    return design


def _wynn(
    kind: CriterionKind,
    model: CalibrationModel,
    theta: FloatArray,
    config: WynnConfig,
    options: SolverOptions,
    mode: RegressorMode = RegressorMode.CALIBRATION,
    offset: int = 0,
) -> Tuple[Design, bool, int, List[Tuple[int, float]]]:
    """Vertex-direction iterations; returns the best design seen, a stop flag, iterations and a trace.

    ``offset`` continues the harmonic step sequence of an earlier run that
    produced ``config.initial``. The bound stop uses ``config.stop_delta``, a
    little above ``delta``, so the merged design still clears ``delta`` when
    certified on the finer grid.
    """
    space = model.response_space
    initial = as_response(config.initial or _default_initial(model), model, theta)
    if len(initial) < model.m:
        raise InvalidDesign(f"the initial design needs at least {model.m} support points, got {len(initial)}")

    starts = space.clip(initial.points)
    candidates = np.union1d(space.grid(config.candidates), starts)
    evaluator = _CandidateCriterion(kind, model, theta, candidates, mode, options.nodes)
    weights = np.zeros(candidates.size)
    weights[np.searchsorted(candidates, starts)] = initial.weights
    M = evaluator.information(weights)

    best_value, best_weights = math.inf, weights.copy()
    history: deque = deque(maxlen=config.stagnation_window)
    trace: List[Tuple[int, float]] = []
    stopped = False
    s = 0
    logger.info("%s Wynn iterations: %d candidates, step %s", kind.value, candidates.size, config.step_rule.value)

    for s in range(1, config.max_iterations + 1):
        index, value, bound = evaluator.direction(M)
        if value < best_value:
            best_value, best_weights = value, weights.copy()
        history.append(best_value)

        if bound is not None and bound >= config.stop_delta:
            stopped = True
            break
        if (
            kind is CriterionKind.GI
            and len(history) == history.maxlen
            and history[0] - history[-1] <= config.stagnation_tol * abs(history[-1])
        ):
            stopped = True
            break

        vertex = np.outer(evaluator.F[index], evaluator.F[index])
        if config.step_rule is StepRule.LINE_SEARCH:
            result = optimize.minimize_scalar(
                lambda a: evaluator.value((1.0 - a) * M + a * vertex), bounds=(0.0, 0.5), method="bounded"
            )
            alpha = float(result.x)
        else:
            alpha = 1.0 / (s + offset + 1)
        weights *= 1.0 - alpha
        weights[index] += alpha
        M = (1.0 - alpha) * M + alpha * vertex

        if s % config.merge_every == 0:
            weights[weights < config.weight_tol] = 0.0
            weights /= weights.sum()
            M = evaluator.information(weights)
            trace.append((s, best_value))
        if config.log_every and s % config.log_every == 0:
            logger.debug("iteration %d: best %.12g, bound %s", s, best_value, bound)

    trace.append((s, best_value))
    keep = best_weights > 0
    design = Design.create(Scale.RESPONSE, candidates[keep], best_weights[keep])
    design = merge_support(design, config.merge_tol(space), config.weight_tol)
    if config.polish:
        design = _polish(design, evaluator, config, space)
    logger.info("%s Wynn: %d iterations, stopped=%s, %d support points", kind.value, s, stopped, len(design))
    return design, stopped, s, trace


def _get_certificate(
    design: Design,
    spec: CriterionSpec,
    model: CalibrationModel,
    theta: FloatArray,
    options: SolverOptions,
    iterations: int,
    delta: float,
) -> Certificate:
    space = model.response_space
    ys = np.union1d(space.grid(options.certificate_grid), space.clip(design.points))
    bound = get_efficiency_bound(design, spec, model, theta, options.certificate_grid)
    if spec.kind is CriterionKind.D:
        sens = sensitivity_d(ys, design, model, theta, spec.mode)
        at_support = sensitivity_d(np.array(design.points), design, model, theta, spec.mode)
        scale = float(model.m)
    else:
        sens = sensitivity_vi(ys, design, model, theta, spec.nodes)
        at_support = sensitivity_vi(np.array(design.points), design, model, theta, spec.nodes)
        scale = criterion_value(design, spec, model, theta)
    min_sens = float(np.min(sens))
    return Certificate(
        kind=CertificateKind.GET,
        converged=bound >= delta,
        bound=bound,
        min_sensitivity=min_sens,
        iterations=iterations,
        diagnostics={
            "max_abs_support_sensitivity": float(np.max(np.abs(at_support))),
            "sensitivity_scale": scale,
            "grid_points": int(ys.size),
        },
    )


def _certified_wynn(
    spec: CriterionSpec,
    model: CalibrationModel,
    theta: FloatArray,
    config: WynnConfig,
    options: SolverOptions,
    delta: float,
) -> Tuple[Design, Certificate, List[Tuple[int, float]]]:
    """Wynn iterations re-certified after merging, resumed from the merged design until the bound holds."""
    design, _, iterations, trace = _wynn(spec.kind, model, theta, config, options, spec.mode)
    certificate = _get_certificate(design, spec, model, theta, options, iterations, delta)
    rounds = 1
    while not certificate.converged and rounds < config.rounds and iterations < config.max_iterations:
        logger.info(
            "%s: merged design has bound %.6f after %d iterations; resuming", spec.name, certificate.bound, iterations
        )
        resumed = replace(config, initial=design, max_iterations=config.max_iterations - iterations)
        design, _, more, extra = _wynn(spec.kind, model, theta, resumed, options, spec.mode, offset=iterations)
        trace += [(s + iterations, v) for s, v in extra]
        iterations += more
        certificate = _get_certificate(design, spec, model, theta, options, iterations, delta)
        rounds += 1
    return design, certificate, trace


# ---------------------------------------------------------------------------
# D-optimality
# ---------------------------------------------------------------------------


def solve_d_optimal(
    model: CalibrationModel,
    theta: ThetaLike = None,
    mode: RegressorMode = RegressorMode.CALIBRATION,
    options: Optional[SolverOptions] = None,
) -> DesignReport:
    """Equal-weight m-point D-optimal design, certified by the equivalence theorem."""
    options = options or SolverOptions()
    t = model.theta_array(theta)
    space = model.response_space
    m = model.m
    spec = CriterionSpec.d(mode)
    logger.info("D-optimal search (%s regressors), %d starts", mode.value, options.starts)

    def objective(x: FloatArray) -> float:
        F = model.regressor(space.clip(x), t, mode)
        return -log_det(F.T @ F / m)

    best = minimize_box(objective, [space] * m, options.starts, workers=options.workers)
    design = merge_support(Design.equal_weights(Scale.RESPONSE, best.x), default_point_tol(space))
    certificate = _get_certificate(design, spec, model, t, options, 0, 1.0 - GET_TOL)
    report = _report(spec, design, model, t, certificate)
    if certificate.converged:
        return _finish(report, options)

    logger.warning(
        "equal-weight D design failed certification (bound %.6f); running the Wynn fallback", certificate.bound
    )
    start = np.concatenate([design.points, _default_initial(model).points])
    config = replace(options.wynn, initial=Design.equal_weights(Scale.RESPONSE, start))
    design, certificate, trace = _certified_wynn(spec, model, t, config, options, 1.0 - GET_TOL)
    report = _report(spec, design, model, t, certificate, trace=tuple(trace))
    if not certificate.converged:
        raise CertificationFailed(f"D-optimal design failed certification (bound {certificate.bound:.6f})", report)
    return _finish(report, options)


# ---------------------------------------------------------------------------
# c-optimality via the Elfving set
# ---------------------------------------------------------------------------


def elfving_system(regressors: ArrayLike, signs: ArrayLike, c: ArrayLike) -> Tuple[FloatArray, float]:
    """Weights ``p`` and scalar ``rho`` with ``sum_i p_i s_i f_i = rho c`` and ``sum_i p_i = 1``.

    ``regressors`` holds one support regressor per row. With ``m`` rows the
    system is square; with fewer rows ``c`` must lie in their span.
    """
    F = np.atleast_2d(np.asarray(regressors, dtype=float)) * np.asarray(signs, dtype=float)[:, None]
    c = np.asarray(c, dtype=float)
    k, m = F.shape
    A = np.zeros((m + 1, k + 1))
    A[:m, :k] = F.T
    A[:m, k] = -c
    A[m, :k] = 1.0
    b = np.zeros(m + 1)
    b[m] = 1.0
    if k == m:
        if not np.linalg.cond(A) < 1e12:
            raise DegenerateSystem("Elfving weight system is singular for this support")
        solution = np.linalg.solve(A, b)
    elif k < m:
        solution = np.linalg.lstsq(A, b, rcond=None)[0]
        if np.linalg.norm(A @ solution - b) > 1e-9:
            raise DegenerateSystem("c is not in the span of the support regressors")
    else:
        raise DegenerateSystem(f"{k} support points exceed the {m} an Elfving point needs")
    return solution[:k], float(solution[k])


def _elfving_lp(F: FloatArray, c: FloatArray) -> Tuple[FloatArray, float]:
    """Signed weights ``u`` (u > 0 on f, u < 0 on -f) of the boundary point along ``c``."""
    n, m = F.shape
    objective = np.zeros(2 * n + 1)
    objective[-1] = -1.0
    A_eq = np.zeros((m + 1, 2 * n + 1))
    A_eq[:m, :n] = F.T
    A_eq[:m, n : 2 * n] = -F.T
    A_eq[:m, -1] = -c
    A_eq[m, : 2 * n] = 1.0
    b_eq = np.zeros(m + 1)
    b_eq[m] = 1.0
    result = optimize.linprog(objective, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if not result.success:
        raise DegenerateSystem(f"Elfving linear program failed: {result.message}")
    u = result.x[:n] - result.x[n : 2 * n]
    return u, float(result.x[-1])


def _lp_support(grid: FloatArray, u: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Pool nearby grid points carrying mass of the same sign."""
    active = np.flatnonzero(np.abs(u) > LP_SUPPORT_TOL * np.abs(u).max())
    groups: List[List[int]] = []
    for i in active:
        if groups and i - groups[-1][-1] <= LP_CLUSTER_GAP and np.sign(u[i]) == np.sign(u[groups[-1][-1]]):
            groups[-1].append(i)
        else:
            groups.append([i])
    points, weights, signs = [], [], []
    for g in groups:
        mass = np.abs(u[g])
        points.append(float(np.dot(grid[g], mass) / mass.sum()))
        weights.append(float(mass.sum()))
        signs.append(float(np.sign(u[g[0]])))
    return np.array(points), np.array(weights), np.array(signs)


def _oriented(p: FloatArray, rho: float, signs: FloatArray) -> Tuple[FloatArray, float, FloatArray]:
    return (p, rho, signs) if rho >= 0 else (p, -rho, -signs)


def _local_boxes(points: FloatArray, space: Interval, step: float) -> List[Interval]:
    reach = ELFVING_BOX_STEPS * step
    return [Interval(max(space.lo, x - reach), min(space.hi, x + reach)) for x in points]


def _refine_full(model, t, c, points, signs, space, step, options):
    """Maximize rho over m support points near the grid solution."""
    box = _local_boxes(points, space, step)

    def solve(x: FloatArray) -> Tuple[FloatArray, float, FloatArray]:
        p, rho = elfving_system(model.regressor(x, t), signs, c)
        return _oriented(p, rho, signs)

    def objective(x: FloatArray) -> float:
        try:
            p, rho, _ = solve(x)
        except DegenerateSystem:
            return math.inf
        return -rho if np.all(p >= -1e-12) else math.inf

    best = minimize_box(objective, box, starts=4, initial=points, workers=options.workers)
    p, rho, s = solve(best.x)
    return best.x, np.clip(p, 0.0, None), rho, s


def _refine_reduced(model, t, c, points, signs, space, step, options):
    """Maximize rho over m - 1 support points constrained to ``det[f(t_1..t_k), c] = 0``."""
    k = points.size
    boxes = _local_boxes(points, space, step)
    best: Optional[Tuple[float, FloatArray, FloatArray, FloatArray]] = None

    for inner in range(k):
        outer = [j for j in range(k) if j != inner]

        def place(z: FloatArray) -> Optional[FloatArray]:
            x = points.copy()
            x[outer] = z

            def det(y: float) -> float:
                x[inner] = y
                return float(np.linalg.det(np.vstack([model.regressor(x, t), c])))

            lo, hi = boxes[inner].lo, boxes[inner].hi
            d_lo, d_hi = det(lo), det(hi)
            if d_lo == 0.0:
                x[inner] = lo
            elif d_hi == 0.0:
                x[inner] = hi
            elif d_lo * d_hi > 0:
                return None
            else:
                x[inner] = optimize.brentq(det, lo, hi, xtol=1e-14)
            return x

        def evaluate(z: FloatArray):
            x = place(z)
            if x is None:
                return None
            try:
                p, rho = elfving_system(model.regressor(x, t), signs, c)
            except DegenerateSystem:
                return None
            p, rho, s = _oriented(p, rho, signs)
            if np.any(p < -1e-12):
                return None
            return rho, x, p, s

        def objective(z: FloatArray) -> float:
            found = evaluate(z)
            return math.inf if found is None else -found[0]

        try:
            if outer:
                z = minimize_box(objective, [boxes[j] for j in outer], starts=4, initial=points[outer]).x
            else:
                z = np.array([])
        except NonFinite:
            continue
        found = evaluate(z)
        if found is not None and (best is None or found[0] > best[0]):
            best = found

    if best is None:
        raise DegenerateSystem("no reduced Elfving support satisfies the span condition")
    rho, x, p, s = best
    return x, np.clip(p, 0.0, None), rho, s


def _direct_c(model, t, c, options, initial: Optional[Design]) -> Design:
    """Minimize ``c^T M^+ c`` over m-point designs with free weights."""
    m = model.m
    if 2 * m > 6:
        raise DegenerateSystem(f"direct c-optimal search supports at most 3 parameters, got {m}")
    space = model.response_space
    box = [space] * m + [Interval(0.0, 1.0)] * m

    def build(z: FloatArray) -> Design:
        v = z[m:]
        return Design.create(Scale.RESPONSE, z[:m], v if v.sum() > 0 else None)

    def objective(z: FloatArray) -> float:
        try:
            return phi_c(fim(build(z), model, t), c)
        except (NotEstimable, InvalidDesign):
            return math.inf

    start = None
    if initial is not None and len(initial) == m:
        xs, ws = initial.arrays()
        start = np.concatenate([xs, ws / ws.max()])
    best = minimize_box(objective, box, options.starts, initial=start, workers=options.workers)
    return build(best.x)


def _random_c_check(model, t, c, options) -> float:
    """Smallest ``c^T M^+ c`` over seeded random m-point designs."""
    rng = np.random.default_rng(options.seed)
    space = model.response_space
    m = model.m
    points = rng.uniform(space.lo, space.hi, size=(options.random_designs, m))
    weights = rng.dirichlet(np.ones(m), size=options.random_designs)
    F = model.regressor(points, t)
    M = np.einsum("rk,rki,rkj->rij", weights, F, F)
    pinv = np.linalg.pinv(M, hermitian=True)
    estimable = np.linalg.norm(c - np.einsum("rij,rjk,k->ri", M, pinv, c), axis=1) <= 1e-8 * np.linalg.norm(c)
    values = np.einsum("i,rij,j->r", c, pinv, c)
    return float(np.min(values[estimable])) if np.any(estimable) else math.inf


def solve_c_optimal(
    model: CalibrationModel,
    c: ArrayLike,
    theta: ThetaLike = None,
    options: Optional[SolverOptions] = None,
    label: Optional[str] = None,
) -> DesignReport:
    """c-optimal design from the Elfving set boundary point along ``c``."""
    options = options or SolverOptions()
    t = model.theta_array(theta)
    c = np.asarray(c, dtype=float)
    if c.shape != (model.m,) or not np.any(c != 0):
        raise ValueError(f"c must be a nonzero vector of length {model.m}, got {c}")
    spec = CriterionSpec.c(c, label)
    space = model.response_space
    grid = space.grid(options.elfving_grid)
    step = grid[1] - grid[0]
    m = model.m
    logger.info("c-optimal design for %s on a %d-point grid", spec.name, grid.size)

    u, lp_rho = _elfving_lp(model.regressor(grid, t), c)
    points, weights, signs = _lp_support(grid, u)
    logger.debug("Elfving LP: rho %.12g, support %s, signs %s", lp_rho, points, signs)

    method = "lp"
    rho = lp_rho
    try:
        if points.size == m:
            refined = _refine_full(model, t, c, points, signs, space, step, options)
            method = "full"
            weakest = int(np.argmin(refined[1]))
            if refined[1][weakest] < 1e-3 * refined[1].max():
                keep = np.arange(m) != weakest
                try:
                    reduced = _refine_reduced(model, t, c, refined[0][keep], refined[3][keep], space, step, options)
                except (DegenerateSystem, NonFinite):
                    reduced = None
                if reduced is not None and reduced[2] >= refined[2]:
                    refined, method = reduced, "reduced"
            points, weights, rho, signs = refined
        elif points.size == m - 1:
            points, weights, rho, signs = _refine_reduced(model, t, c, points, signs, space, step, options)
            method = "reduced"
        design = merge_support(Design.create(Scale.RESPONSE, points, weights), default_point_tol(space), 0.0)
    except (DegenerateSystem, NonFinite) as exc:
        logger.warning("Elfving refinement failed (%s); minimizing c^T M^- c directly", exc)
        seed = Design.create(Scale.RESPONSE, points, weights) if points.size else None
        design = _direct_c(model, t, c, options, seed)
        rho = 1.0 / math.sqrt(phi_c(fim(design, model, t), c))
        method = "direct"

    # drop negligible weights while c stays estimable
    xs, ws = design.arrays()
    for i in np.argsort(ws):
        if ws[i] >= 1e-6 or np.count_nonzero(ws) == 1:
            break
        trial = ws.copy()
        trial[i] = 0.0
        keep = trial > 0
        try:
            reduced = Design.create(Scale.RESPONSE, xs[keep], trial[keep])
            phi_c(fim(reduced, model, t), c)
        except NotEstimable:
            continue
        ws = trial
    keep = ws > 0
    design = Design.create(Scale.RESPONSE, xs[keep], ws[keep])

    value = phi_c(fim(design, model, t), c)
    random_best = _random_c_check(model, t, c, options)
    gap = abs(value * rho**2 - 1.0)
    nonsingular = sym_inverse(fim(design, model, t).matrix).rank == m
    bound = get_efficiency_bound(design, spec, model, t, options.certificate_grid) if nonsingular else None
    certificate = Certificate(
        kind=CertificateKind.ELFVING,
        converged=gap <= ELFVING_GAP_TOL and value <= random_best * (1.0 + 1e-9),
        bound=bound,
        iterations=0,
        diagnostics={
            "rho": rho,
            "lp_rho": lp_rho,
            "elfving_gap": gap,
            "signs": [int(s) for s in signs],
            "method": method,
            "random_designs": options.random_designs,
            "random_best": random_best,
            "singular": not nonsingular,
        },
    )
    report = _report(spec, design, model, t, certificate)
    if not certificate.converged:
        raise CertificationFailed(
            f"{spec.name}: Elfving solution not certified (gap {gap:.3g}, "
            f"best random design {random_best:.6g} vs {value:.6g})",
            report,
        )
    return _finish(report, options)


# ---------------------------------------------------------------------------
# G_I and V_I optimality
# ---------------------------------------------------------------------------


def solve_gi_optimal(
    model: CalibrationModel, theta: ThetaLike = None, options: Optional[SolverOptions] = None
) -> DesignReport:
    """G_I-optimal design by Wynn iterations at the largest inverse-prediction variance.

    There is no equivalence-theorem bound for G_I; convergence means the best
    value stopped improving over the stagnation window.
    """
    options = options or SolverOptions()
    t = model.theta_array(theta)
    config = options.wynn
    design, stopped, iterations, trace = _wynn(CriterionKind.GI, model, t, config, options)
    spec = CriterionSpec.gi(options.gi_grid)
    certificate = Certificate(
        kind=CertificateKind.STAGNATION,
        converged=stopped,
        iterations=iterations,
        diagnostics={
            "window": config.stagnation_window,
            "relative_tolerance": config.stagnation_tol,
            "trace_final": trace[-1][1],
        },
    )
    return _finish(_report(spec, design, model, t, certificate, trace=tuple(trace)), options)


def solve_vi_optimal(
    model: CalibrationModel, theta: ThetaLike = None, options: Optional[SolverOptions] = None
) -> DesignReport:
    """V_I-optimal design by Wynn iterations, stopped by the equivalence-theorem bound."""
    options = options or SolverOptions()
    t = model.theta_array(theta)
    config = options.wynn
    spec = CriterionSpec.vi(options.nodes)
    design, certificate, trace = _certified_wynn(spec, model, t, config, options, config.delta)
    return _finish(_report(spec, design, model, t, certificate, trace=tuple(trace)), options)


# ---------------------------------------------------------------------------
# Space-filling sequences
# ---------------------------------------------------------------------------


def _sequence_design(model: CalibrationModel, t: FloatArray, spec: SequenceSpec, ratio: float) -> Design:
    points = spec.points(model.space(spec.scale, t), ratio)
    if spec.scale is Scale.DOSE:
        points = np.asarray(model.eta(points, t))
    return Design.equal_weights(Scale.RESPONSE, points)


def optimize_sequence(
    model: CalibrationModel,
    spec: SequenceSpec,
    criterion: CriterionSpec,
    theta: ThetaLike = None,
    reference: Optional[Design] = None,
    options: Optional[SolverOptions] = None,
) -> DesignReport:
    """Optimize the ratio of an equal-weight sequence design under ``criterion``.

    A scan of 197 ratios in [0.01, 0.99] is refined by a bounded scalar search
    around the best scanned ratio. The efficiency is taken against
    ``reference`` or, if none is given, against a freshly solved optimum.
    """
    options = options or SolverOptions()
    t = model.theta_array(theta)

    def value(r: float) -> float:
        try:
            v = criterion_value(_sequence_design(model, t, spec, r), criterion, model, t)
        except (NotEstimable, SingularDesign, InvalidDesign):
            return math.inf
        return v if math.isfinite(v) else math.inf

    ratios = np.linspace(*RATIO_RANGE, RATIO_SCAN)
    values = np.array([value(r) for r in ratios])
    if not np.any(np.isfinite(values)):
        raise SingularSequence(f"{spec.family.value} sequence is singular for every ratio under {criterion.name}")
    i = int(np.argmin(values))
    r_best, v_best = float(ratios[i]), float(values[i])

    half = 0.5 * (ratios[1] - ratios[0])
    lo, hi = max(RATIO_RANGE[0], r_best - half), min(RATIO_RANGE[1], r_best + half)
    result = optimize.minimize_scalar(value, bounds=(lo, hi), method="bounded", options={"xatol": 1e-8})
    if result.fun < v_best:
        r_best, v_best = float(result.x), float(result.fun)
    logger.info("%s %s sequence, n=%d: r* = %.6f", spec.family.value, spec.scale.value, spec.n, r_best)

    design = _sequence_design(model, t, spec, r_best)
    if reference is None:
        reference = solve_for(criterion, model, t, options).design_response
    eff = efficiency(design, reference, criterion, model, t)
    certificate = Certificate(
        kind=CertificateKind.RATIO,
        converged=True,
        iterations=int(ratios.size),
        diagnostics={"family": spec.family.value, "scale": spec.scale.value, "n": spec.n},
    )
    return _report(
        criterion,
        design,
        model,
        t,
        certificate,
        efficiencies={criterion.name: eff},
        ratio=r_best,
        profile=tuple((float(r), float(v)) for r, v in zip(ratios, values)),
    )


# ---------------------------------------------------------------------------
# Evaluation and dispatch
# ---------------------------------------------------------------------------


def solve_for(
    spec: CriterionSpec, model: CalibrationModel, theta: ThetaLike = None, options: Optional[SolverOptions] = None
) -> DesignReport:
    """Solve for the optimum of ``spec``."""
    options = options or SolverOptions()
    if spec.kind is CriterionKind.D:
        return solve_d_optimal(model, theta, spec.mode, options)
    if spec.kind is CriterionKind.C:
        return solve_c_optimal(model, spec.c_array, theta, options, spec.label)
    if spec.kind is CriterionKind.GI:
        return solve_gi_optimal(model, theta, options)
    return solve_vi_optimal(model, theta, options)


def reference_optima(
    model: CalibrationModel, theta: ThetaLike = None, options: Optional[SolverOptions] = None
) -> Dict[str, DesignReport]:
    """The D, per-parameter c, G_I and V_I optima, keyed by criterion name."""
    options = options or SolverOptions()
    t = model.theta_array(theta)
    specs = [CriterionSpec.d()]
    for name, unit in zip(model.nominal.names, np.eye(model.m)):
        specs.append(CriterionSpec.c(unit, label=f"c_{name}"))
    specs += [CriterionSpec.gi(options.gi_grid), CriterionSpec.vi(options.nodes)]
    return {spec.name: solve_for(spec, model, t, options) for spec in specs}


def cross_efficiencies(
    design: Design,
    references: Mapping[str, DesignReport],
    model: CalibrationModel,
    theta: ThetaLike = None,
) -> Dict[str, Optional[float]]:
    """Efficiency of ``design`` against every reference optimum; ``None`` where it is singular."""
    t = model.theta_array(theta)
    result: Dict[str, Optional[float]] = {}
    for name, ref in references.items():
        try:
            result[name] = efficiency(design, ref.design_response, ref.criterion, model, t)
        except SingularDesign:
            result[name] = None
    return result


def evaluate_fixed_design(
    design: Design,
    model: CalibrationModel,
    criteria: Sequence[CriterionSpec],
    theta: ThetaLike = None,
    references: Optional[Mapping[str, DesignReport]] = None,
    options: Optional[SolverOptions] = None,
) -> FixedDesignReport:
    """Criterion values and efficiencies of a design given on either scale.

    Optima missing from ``references`` are solved for. A criterion the design
    cannot estimate is reported in ``errors`` and does not stop the others.
    """
    options = options or SolverOptions()
    t = model.theta_array(theta)
    response = as_response(design, model, t)
    references = dict(references or {})
    values: Dict[str, Optional[float]] = {}
    efficiencies: Dict[str, Optional[float]] = {}
    errors: Dict[str, str] = {}
    for spec in criteria:
        try:
            values[spec.name] = criterion_value(response, spec, model, t)
            if spec.name not in references:
                references[spec.name] = solve_for(spec, model, t, options)
            efficiencies[spec.name] = efficiency(response, references[spec.name].design_response, spec, model, t)
        except (NotEstimable, SingularDesign) as exc:
            logger.warning("%s: %s", spec.name, exc)
            values.setdefault(spec.name, None)
            efficiencies[spec.name] = None
            errors[spec.name] = str(exc)
    return FixedDesignReport(
        design_response=response,
        design_dose=transform_design(response, model, t),
        values=values,
        efficiencies=efficiencies,
        errors=errors,
        model_name=model.name,
        theta=tuple(float(v) for v in t),
    )
