"""Serialization of solver reports as JSON, plain-text tables and CSV."""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
import math
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .calib_model import Scale
from .design_core import Design
from .reference import Check
from .solvers import DesignReport, FixedDesignReport

__all__ = [
    "OutputFormat",
    "round_sig",
    "report_to_dict",
    "fixed_report_to_dict",
    "design_to_pairs",
    "design_from_pairs",
    "to_json",
    "render_text",
    "render_fixed_text",
    "render_table",
    "write_csv",
    "emit_report",
    "comparison_to_dict",
    "render_comparison",
]

logger = logging.getLogger(__name__)

SIGNIFICANT_DIGITS = 12


class OutputFormat(enum.Enum):
    JSON = "json"
    TEXT = "text"
    CSV = "csv"


def round_sig(value: Any) -> Optional[float]:
    """Round to 12 significant digits; non-finite values become ``None``."""
    if value is None:
        return None
    x = float(value)
    if not math.isfinite(x):
        return None
    return float(f"{x:.{SIGNIFICANT_DIGITS}g}")


def _clean(value: Any) -> Any:
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, int):
        return value
    if isinstance(value, Mapping):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    try:
        return round_sig(value)
    except (TypeError, ValueError):
        return str(value)


def design_to_pairs(design: Design) -> List[List[Optional[float]]]:
    return [[round_sig(p), round_sig(w)] for p, w in design.pairs()]


def design_from_pairs(pairs: Sequence[Sequence[float]], scale: Union[Scale, str]) -> Design:
    """Rebuild a design from serialized pairs; weights are renormalized."""
    scale = Scale(scale) if isinstance(scale, str) else scale
    points = [float(p) for p, _ in pairs]
    weights = [float(w) for _, w in pairs]
    return Design.create(scale, points, weights)


def report_to_dict(report: DesignReport, scenario: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    cert = report.certificate
    data: Dict[str, Any] = {
        "scenario": _clean(dict(scenario or {})),
        "model": report.model_name,
        "theta": _clean(report.theta),
        "criterion": {"name": report.criterion.name, "value": round_sig(report.criterion_value)},
        "design_response": design_to_pairs(report.design_response),
        "design_dose": design_to_pairs(report.design_dose),
        "certificate": {
            "type": cert.kind.value,
            "converged": cert.converged,
            "bound": round_sig(cert.bound),
            "min_sensitivity": round_sig(cert.min_sensitivity),
            "iterations": cert.iterations,
            "diagnostics": _clean(dict(cert.diagnostics)),
        },
        "efficiencies": _clean(dict(report.efficiencies)),
    }
    if report.ratio is not None:
        data["ratio"] = round_sig(report.ratio)
    if report.trace:
        data["trace"] = [[int(i), round_sig(v)] for i, v in report.trace]
    return data


def fixed_report_to_dict(report: FixedDesignReport, scenario: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    return {
        "scenario": _clean(dict(scenario or {})),
        "model": report.model_name,
        "theta": _clean(report.theta),
        "design_response": design_to_pairs(report.design_response),
        "design_dose": design_to_pairs(report.design_dose),
        "values": _clean(dict(report.values)),
        "efficiencies": _clean(dict(report.efficiencies)),
        "errors": dict(report.errors),
    }


def to_json(data: Mapping[str, Any]) -> str:
    return json.dumps(data, indent=2, allow_nan=False) + "\n"


def _weight_label(weight: float) -> str:
    fraction = Fraction(weight).limit_denominator(12)
    if fraction.denominator > 1 and abs(float(fraction) - weight) < 1e-9:
        return f"{fraction.numerator}/{fraction.denominator}"
    return f"{weight:.2f}"


def _support(design: Design) -> str:
    return "  ".join(f"{p:.2f} ({_weight_label(w)})" for p, w in design.pairs())


def render_text(report: DesignReport) -> str:
    """One-design summary in the layout of a design table row."""
    cert = report.certificate
    lines = [
        f"criterion   {report.criterion.name} = {report.criterion_value:.10g}",
        f"model       {report.model_name} theta={tuple(round(v, 6) for v in report.theta)}",
        f"response    {_support(report.design_response)}",
        f"dose        {_support(report.design_dose)}",
    ]
    status = "converged" if cert.converged else "NOT converged"
    bound = "" if cert.bound is None else f", bound {cert.bound:.6f}"
    lines.append(f"certificate {cert.kind.value}: {status}{bound}, {cert.iterations} iterations")
    if report.ratio is not None:
        lines.append(f"ratio       r* = {report.ratio:.4f}")
    for name, value in report.efficiencies.items():
        shown = "singular" if value is None else f"{100.0 * value:.1f}%"
        lines.append(f"efficiency  {name}: {shown}")
    return "\n".join(lines) + "\n"


def render_fixed_text(report: FixedDesignReport) -> str:
    lines = [
        f"response    {_support(report.design_response)}",
        f"dose        {_support(report.design_dose)}",
        "criterion   value            efficiency",
    ]
    for name, value in report.values.items():
        eff = report.efficiencies.get(name)
        shown_value = "-" if value is None or not math.isfinite(value) else f"{value:.8g}"
        shown_eff = "-" if eff is None else f"{eff:.3f}"
        lines.append(f"{name:<11} {shown_value:<16} {shown_eff}")
    for name, message in report.errors.items():
        lines.append(f"! {name}: {message}")
    return "\n".join(lines) + "\n"


def render_table(header: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """Left-aligned fixed-width table."""
    cells = [list(map(str, header))] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
    rendered = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    rendered.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(rendered) + "\n"


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([round_sig(v) if isinstance(v, float) else v for v in row])
    path.write_text(buffer.getvalue())
    return path


def _design_rows(report: DesignReport) -> List[Tuple[str, float, float]]:
    rows = [(Scale.RESPONSE.value, p, w) for p, w in report.design_response.pairs()]
    rows += [(Scale.DOSE.value, p, w) for p, w in report.design_dose.pairs()]
    return rows


def emit_report(
    report: Union[DesignReport, FixedDesignReport],
    fmt: OutputFormat,
    out_dir: Path,
    stem: str,
    scenario: Optional[Mapping[str, Any]] = None,
) -> List[Path]:
    """Write ``report`` under ``out_dir`` as ``<stem>.json``, ``.txt`` or ``.csv``."""
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    fixed = isinstance(report, FixedDesignReport)
    if fmt is OutputFormat.JSON:
        data = fixed_report_to_dict(report, scenario) if fixed else report_to_dict(report, scenario)
        path = out_dir / f"{stem}.json"
        path.write_text(to_json(data))
        written.append(path)
    elif fmt is OutputFormat.TEXT:
        path = out_dir / f"{stem}.txt"
        path.write_text(render_fixed_text(report) if fixed else render_text(report))
        written.append(path)
    else:
        if fixed:
            rows = [(name, report.values.get(name), eff) for name, eff in report.efficiencies.items()]
            written.append(write_csv(out_dir / f"{stem}.csv", ["criterion", "value", "efficiency"], rows))
        else:
            written.append(write_csv(out_dir / f"{stem}.csv", ["scale", "point", "weight"], _design_rows(report)))
            if report.profile:
                written.append(write_csv(out_dir / f"{stem}_profile.csv", ["ratio", "value"], report.profile))
    for path in written:
        logger.info("wrote %s", path)
    return written


def comparison_to_dict(checks: Sequence[Check], scenario: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    failed = [c for c in checks if not c.passed]
    return {
        "scenario": _clean(dict(scenario or {})),
        "passed": not failed,
        "failures": len(failed),
        "checks": [
            {
                "row": c.row,
                "quantity": c.quantity,
                "expected": _clean(c.expected),
                "actual": _clean(c.actual),
                "tol": round_sig(c.tol),
                "passed": c.passed,
            }
            for c in checks
        ],
    }


def _short(value: Any) -> str:
    if value is None:
        return "-"
    if isinstance(value, str):
        return value
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_short(v) for v in value) + "]"
    return f"{float(value):.4g}"


def render_comparison(checks: Sequence[Check]) -> str:
    rows = [
        (c.row, c.quantity, _short(c.expected), _short(c.actual), _short(c.tol), "PASS" if c.passed else "FAIL")
        for c in checks
    ]
    table = render_table(["row", "quantity", "expected", "actual", "tol", "status"], rows)
    failed = sum(not c.passed for c in checks)
    return table + f"\n{len(checks) - failed}/{len(checks)} checks passed\n"
