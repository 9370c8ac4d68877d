"""Bundled reference designs for the radiochromic scenario and comparison helpers."""

from __future__ import annotations

import functools
import json
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .calib_model import RegressorMode, Scale
from .design_core import Design

__all__ = [
    "EfficiencyCheck",
    "GoldenRow",
    "Check",
    "load_golden",
    "golden_row",
    "reconstruct_weights",
    "check_value",
    "check_at_most",
    "check_sequence",
    "check_design",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EfficiencyCheck:
    of: str
    criterion: str
    value: float
    tol: float


@dataclass(frozen=True)
class GoldenRow:
    key: str
    kind: str
    points: Tuple[float, ...]
    dose_points: Tuple[float, ...] = ()
    weights: Optional[Tuple[float, ...]] = None
    criterion: Optional[str] = None
    mode: RegressorMode = RegressorMode.CALIBRATION
    c: Optional[Tuple[float, ...]] = None
    family: Optional[str] = None
    scale: Scale = Scale.RESPONSE
    n: Optional[int] = None
    ratio: Optional[float] = None
    tolerances: Mapping[str, float] = field(default_factory=dict)
    efficiencies: Tuple[EfficiencyCheck, ...] = ()
    note: str = ""

    def design(self) -> Design:
        """The tabled design on the response scale (equal weights when none are listed)."""
        return Design.create(Scale.RESPONSE, self.points, self.weights)

    def dose_design(self) -> Design:
        return Design.create(Scale.DOSE, self.dose_points, self.weights)


def reconstruct_weights(listed: Sequence[str], k: int) -> Tuple[float, ...]:
    """Exact weights from their printed form, filling an omitted last weight with ``1 - sum``."""
    fractions = [Fraction(w) for w in listed]
    if len(fractions) == k - 1:
        fractions.append(1 - sum(fractions))
    if len(fractions) != k:
        raise ValueError(f"{len(listed)} weights listed for {k} points")
    if any(f < 0 for f in fractions):
        raise ValueError(f"reconstructed weights are negative: {fractions}")
    return tuple(float(f) for f in fractions)


def _row(raw: Mapping[str, Any]) -> GoldenRow:
    points = tuple(float(p) for p in raw["points"])
    weights = reconstruct_weights(raw["weights"], len(points)) if "weights" in raw else None
    return GoldenRow(
        key=raw["key"],
        kind=raw["kind"],
        points=points,
        dose_points=tuple(float(p) for p in raw.get("dose_points", ())),
        weights=weights,
        criterion=raw.get("criterion"),
        mode=RegressorMode(raw.get("mode", RegressorMode.CALIBRATION.value)),
        c=tuple(float(v) for v in raw["c"]) if "c" in raw else None,
        family=raw.get("family"),
        scale=Scale(raw.get("scale", Scale.RESPONSE.value)),
        n=raw.get("n"),
        ratio=raw.get("ratio"),
        tolerances=dict(raw.get("tolerances", {})),
        efficiencies=tuple(EfficiencyCheck(**e) for e in raw.get("efficiencies", ())),
        note=raw.get("note", ""),
    )


@functools.lru_cache(maxsize=1)
def load_golden() -> Dict[str, GoldenRow]:
    text = resources.files("oedcal").joinpath("data", "golden.json").read_text()
    rows = [_row(raw) for raw in json.loads(text)["rows"]]
    logger.debug("loaded %d reference rows", len(rows))
    return {row.key: row for row in rows}


def golden_row(key: str) -> GoldenRow:
    try:
        return load_golden()[key]
    except KeyError:
        raise KeyError(f"no reference row {key!r}; known: {', '.join(load_golden())}") from None


@dataclass(frozen=True)
class Check:
    row: str
    quantity: str
    expected: Any
    actual: Any
    tol: float
    passed: bool


def check_value(row: str, quantity: str, expected: float, actual: Optional[float], tol: float) -> Check:
    passed = actual is not None and abs(actual - expected) <= tol
    return Check(row, quantity, expected, actual, tol, passed)


def check_at_most(row: str, quantity: str, limit: float, actual: Optional[float], tol: float = 0.0) -> Check:
    """Passes when ``actual`` does not exceed ``limit`` by more than the relative ``tol``."""
    passed = actual is not None and actual <= limit * (1.0 + tol)
    return Check(row, quantity, limit, actual, tol, passed)


def check_sequence(
    row: str, quantity: str, expected: Sequence[float], actual: Sequence[float], tol: float
) -> Check:
    """Elementwise comparison; sequences of different lengths never pass."""
    exp = np.asarray(expected, dtype=float)
    act = np.asarray(actual, dtype=float)
    passed = exp.shape == act.shape and bool(np.all(np.abs(exp - act) <= tol))
    rounded = [round(float(v), 4) for v in act]
    return Check(row, quantity, list(map(float, exp)), rounded, tol, passed)


def check_design(row: GoldenRow, design: Design, dose: Optional[Design] = None) -> List[Check]:
    """Point, weight and dose comparisons configured by the row's tolerances."""
    tol = row.tolerances
    checks: List[Check] = []
    if "point" in tol:
        checks.append(check_sequence(row.key, "points", row.points, design.points, tol["point"]))
    if "weight" in tol and row.weights is not None:
        checks.append(check_sequence(row.key, "weights", row.weights, design.weights, tol["weight"]))
    if "dose" in tol and dose is not None:
        checks.append(check_sequence(row.key, "dose points", row.dose_points, dose.points, tol["dose"]))
    return checks
