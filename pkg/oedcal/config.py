"""Scenario configuration: INI files loaded into frozen dataclasses."""

from __future__ import annotations

import configparser
import logging
import os
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, TypeVar

from .calib_model import (
    CalibrationModel,
    ExpressionModel,
    RegressorMode,
    Scale,
    available_models,
    check_dose_space,
    get_model,
    gradient_discrepancy,
)
from .criteria import CriterionKind, CriterionSpec
from .design_core import Design
from .errors import ConfigError, DomainError, InvalidDesign
from .numerics import Interval
from .solvers import SequenceFamily, SequenceSpec, SolverOptions, StepRule, WynnConfig

__all__ = [
    "SequenceOptions",
    "FixedDesignOptions",
    "ScenarioConfig",
    "THREADS_ENV",
    "load_config",
    "default_config",
    "parse_criterion",
    "resolve_workers",
]

logger = logging.getLogger(__name__)

THREADS_ENV = "OED_CALIB_THREADS"
BUNDLED_SCENARIO = "radiochromic.ini"
GRADIENT_TOL = 1e-5

T = TypeVar("T")


@dataclass(frozen=True)
class SequenceOptions:
    spec: SequenceSpec
    criterion: CriterionSpec


@dataclass(frozen=True)
class FixedDesignOptions:
    design: Design


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    output: Path
    seed: int
    model_name: str
    theta: Tuple[float, ...]
    response_space: Interval
    dose_space: Interval
    criteria: Tuple[CriterionSpec, ...]
    c_vectors: Dict[str, Tuple[float, ...]]
    solver: SolverOptions
    sequence: Optional[SequenceOptions] = None
    evaluate: Optional[FixedDesignOptions] = None
    source: Optional[str] = None
    expressions: Optional[Dict[str, Any]] = None
    parameter_names: Tuple[str, ...] = ()

    def build_model(self) -> CalibrationModel:
        if self.expressions is not None:
            return self._build_expression_model()
        try:
            return get_model(self.model_name, self.theta, self.response_space, self.dose_space)
        except DomainError as exc:
            raise ConfigError("model.theta", str(exc)) from exc

    def _build_expression_model(self) -> CalibrationModel:
        try:
            model = ExpressionModel(
                self.model_name,
                self.parameter_names,
                nominal=self.theta,
                response_space=self.response_space,
                dose_space=self.dose_space,
                **self.expressions,
            )
        except DomainError as exc:
            raise ConfigError("model.mu", str(exc)) from exc
        try:
            errors = dict(zip(("model.dmu_dtheta", "model.dmu_dy"), gradient_discrepancy(model)))
        except (ArithmeticError, TypeError, ValueError) as exc:
            raise ConfigError("model.mu", f"cannot evaluate the model: {exc}") from exc
        for field_name, error in errors.items():
            if not error <= GRADIENT_TOL:
                raise ConfigError(field_name, f"disagrees with finite differences of mu (relative error {error:.3g})")
        return check_dose_space(model)

    def with_overrides(self, seed: Optional[int] = None, output: Optional[Path] = None) -> "ScenarioConfig":
        config = self
        if seed is not None:
            config = replace(config, seed=seed, solver=replace(config.solver, seed=seed))
        if output is not None:
            config = replace(config, output=output)
        return config

    def echo(self) -> Dict[str, Any]:
        """The scenario fields reproduced at the top of every JSON report."""
        return {
            "name": self.name,
            "source": self.source,
            "model": self.model_name,
            **({"parameters": list(self.parameter_names), "expressions": self.expressions} if self.expressions else {}),
            "theta": list(self.theta),
            "response_space": [self.response_space.lo, self.response_space.hi],
            "dose_space": [self.dose_space.lo, self.dose_space.hi],
            "seed": self.seed,
        }


def _get(
    parser: configparser.ConfigParser, section: str, key: str, convert: Callable[[str], T], default: Any = None
) -> T:
    field_name = f"{section}.{key}"
    if not parser.has_option(section, key):
        if default is None:
            raise ConfigError(field_name, "missing value")
        return default
    raw = parser.get(section, key)
    try:
        return convert(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(field_name, f"invalid value {raw!r}: {exc}") from exc


def _floats(raw: str) -> Tuple[float, ...]:
    values = tuple(float(v) for v in raw.replace(",", " ").split())
    if not values:
        raise ValueError("expected at least one number")
    return values


def _interval(raw: str) -> Interval:
    values = _floats(raw)
    if len(values) != 2:
        raise ValueError("an interval is two numbers 'lo, hi'")
    return Interval(*values)


def _names(raw: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in raw.split(",") if v.strip())


def _expressions(raw: str) -> Tuple[str, ...]:
    """One expression per parameter, separated by semicolons."""
    return tuple(v.strip() for v in raw.split(";") if v.strip())


def _boolean(raw: str) -> bool:
    value = raw.strip().lower()
    if value in configparser.ConfigParser.BOOLEAN_STATES:
        return configparser.ConfigParser.BOOLEAN_STATES[value]
    raise ValueError("expected yes/no")


def parse_criterion(
    name: str, c_vectors: Dict[str, Tuple[float, ...]], solver: SolverOptions, m: Optional[int] = None
) -> CriterionSpec:
    """Criterion by name: D, D-naive, GI, VI, or a c-criterion listed in ``c_vectors``."""
    if name == "D":
        return CriterionSpec.d()
    if name == "D-naive":
        return CriterionSpec(CriterionKind.D, mode=RegressorMode.NAIVE_INVERSE, label="D-naive")
    if name == "GI":
        return CriterionSpec.gi(solver.gi_grid)
    if name == "VI":
        return CriterionSpec.vi(solver.nodes)
    if name not in c_vectors:
        raise ConfigError(f"criteria.{name}", "unknown criterion and no c vector given")
    vector = c_vectors[name]
    if m is not None and len(vector) != m:
        raise ConfigError(f"criteria.{name}", f"c vector has {len(vector)} entries, the model has {m} parameters")
    try:
        return CriterionSpec.c(vector, label=name)
    except ValueError as exc:
        raise ConfigError(f"criteria.{name}", str(exc)) from exc


def _solver(parser: configparser.ConfigParser, seed: int) -> SolverOptions:
    s = "solver"
    defaults = SolverOptions()
    wynn_defaults = WynnConfig()
    try:
        wynn = WynnConfig(
            step_rule=_get(parser, s, "step_rule", StepRule, wynn_defaults.step_rule),
            delta=_get(parser, s, "delta", float, wynn_defaults.delta),
            max_iterations=_get(parser, s, "max_iterations", int, wynn_defaults.max_iterations),
            merge_cells=_get(parser, s, "merge_cells", float, wynn_defaults.merge_cells),
            weight_tol=_get(parser, s, "weight_tol", float, wynn_defaults.weight_tol),
            merge_every=_get(parser, s, "merge_every", int, wynn_defaults.merge_every),
            candidates=_get(parser, s, "candidates", int, wynn_defaults.candidates),
            stagnation_window=_get(parser, s, "stagnation_window", int, wynn_defaults.stagnation_window),
            stagnation_tol=_get(parser, s, "stagnation_tol", float, wynn_defaults.stagnation_tol),
            polish=_get(parser, s, "polish", _boolean, wynn_defaults.polish),
            cluster_fraction=_get(parser, s, "cluster_fraction", float, wynn_defaults.cluster_fraction),
            polish_weight_tol=_get(parser, s, "polish_weight_tol", float, wynn_defaults.polish_weight_tol),
            stop_slack=_get(parser, s, "stop_slack", float, wynn_defaults.stop_slack),
            rounds=_get(parser, s, "rounds", int, wynn_defaults.rounds),
        )
    except ValueError as exc:
        raise ConfigError("solver", str(exc)) from exc
    return SolverOptions(
        starts=_get(parser, s, "starts", int, defaults.starts),
        workers=resolve_workers(),
        certificate_grid=_get(parser, s, "certificate_grid", int, defaults.certificate_grid),
        elfving_grid=_get(parser, s, "elfving_grid", int, defaults.elfving_grid),
        random_designs=_get(parser, s, "random_designs", int, defaults.random_designs),
        seed=seed,
        nodes=_get(parser, s, "nodes", int, defaults.nodes),
        gi_grid=_get(parser, s, "gi_grid", int, defaults.gi_grid),
        wynn=wynn,
    )


def _parse(parser: configparser.ConfigParser, source: str) -> ScenarioConfig:
    for section in ("scenario", "model"):
        if not parser.has_section(section):
            raise ConfigError(section, "missing section")

    seed = _get(parser, "scenario", "seed", int, SolverOptions().seed)
    expressions: Optional[Dict[str, Any]] = None
    parameter_names: Tuple[str, ...] = ()
    if parser.has_option("model", "mu"):
        model_name = _get(parser, "model", "name", str, "custom")
        parameter_names = _get(parser, "model", "parameters", _names)
        expressions = {
            "mu": _get(parser, "model", "mu", str),
            "dmu_dtheta": _get(parser, "model", "dmu_dtheta", _expressions),
            "dmu_dy": _get(parser, "model", "dmu_dy", str),
        }
    else:
        model_name = _get(parser, "model", "name", str)
    if expressions is None and model_name not in available_models():
        raise ConfigError("model.name", f"unknown model {model_name!r}; available: {', '.join(available_models())}")
    theta = _get(parser, "model", "theta", _floats)
    solver = _solver(parser, seed)

    c_vectors: Dict[str, Tuple[float, ...]] = {}
    names: Tuple[str, ...] = ("D",)
    if parser.has_section("criteria"):
        names = _get(parser, "criteria", "list", _names, names)
        for key, _ in parser.items("criteria"):
            if key != "list":
                c_vectors[key] = _get(parser, "criteria", key, _floats)
    criteria = tuple(parse_criterion(n, c_vectors, solver, len(theta)) for n in names)

    sequence = None
    if parser.has_section("sequence"):
        try:
            spec = SequenceSpec(
                family=_get(parser, "sequence", "family", SequenceFamily),
                scale=_get(parser, "sequence", "scale", Scale, Scale.RESPONSE),
                n=_get(parser, "sequence", "n", int),
            )
        except ValueError as exc:
            raise ConfigError("sequence", str(exc)) from exc
        criterion = parse_criterion(_get(parser, "sequence", "criterion", str, "D"), c_vectors, solver, len(theta))
        sequence = SequenceOptions(spec, criterion)

    evaluate = None
    if parser.has_section("evaluate"):
        scale = _get(parser, "evaluate", "scale", Scale, Scale.DOSE)
        points = _get(parser, "evaluate", "points", _floats)
        weights = _get(parser, "evaluate", "weights", _floats) if parser.has_option("evaluate", "weights") else None
        try:
            evaluate = FixedDesignOptions(Design.create(scale, points, weights))
        except InvalidDesign as exc:
            raise ConfigError("evaluate.points", str(exc)) from exc

    return ScenarioConfig(
        name=_get(parser, "scenario", "name", str, model_name),
        output=Path(_get(parser, "scenario", "output", str, "oedcal-out")),
        seed=seed,
        model_name=model_name,
        theta=theta,
        response_space=_get(parser, "model", "response_space", _interval),
        dose_space=_get(parser, "model", "dose_space", _interval),
        criteria=criteria,
        c_vectors=c_vectors,
        solver=solver,
        sequence=sequence,
        evaluate=evaluate,
        source=source,
        expressions=expressions,
        parameter_names=parameter_names,
    )


def load_config(path: Optional[Path] = None) -> ScenarioConfig:
    """Load a scenario file, or the bundled radiochromic scenario when ``path`` is None."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is None:
        text = resources.files("oedcal").joinpath("data", BUNDLED_SCENARIO).read_text()
        source = f"bundled:{BUNDLED_SCENARIO}"
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from exc
        source = str(path)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError("--config", str(exc).splitlines()[0]) from exc
    config = _parse(parser, source)
    logger.info("loaded scenario %r from %s", config.name, source)
    return config


def default_config() -> ScenarioConfig:
    return load_config(None)


def resolve_workers() -> Optional[int]:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return None
    try:
        workers = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if workers < 1:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {workers}")
    return workers
