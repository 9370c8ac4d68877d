"""``oedcal`` command-line front end.

Every verb loads a scenario (``--config`` or the bundled radiochromic one),
runs one solver or evaluation and writes its artifacts under ``--out``. Exit
codes: 0 success, 1 configuration error, 2 solver without a certificate,
3 numerical failure, 4 a reference comparison failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import __version__
from .calib_model import CalibrationModel, RadiochromicModel, RegressorMode, Scale
from .config import ScenarioConfig, load_config, parse_criterion
from .criteria import CriterionKind, CriterionSpec, criterion_value, phi_gi, sensitivity_samples
from .design_core import Design, as_response, efficiency
from .errors import ConfigError, OedCalError, SolverError
from .reference import Check, GoldenRow, check_at_most, check_design, check_value, load_golden
from .reports import (
    OutputFormat,
    comparison_to_dict,
    design_from_pairs,
    emit_report,
    render_comparison,
    render_fixed_text,
    render_table,
    render_text,
    to_json,
    write_csv,
)
from .solvers import (
    DesignReport,
    FixedDesignReport,
    SequenceFamily,
    SequenceSpec,
    evaluate_fixed_design,
    optimize_sequence,
    reference_optima,
    solve_c_optimal,
    solve_d_optimal,
    solve_for,
    solve_gi_optimal,
    solve_vi_optimal,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_NUMERICAL = 3
EXIT_MISMATCH = 4

SENSITIVITY_POINTS = 2001


def _floats(raw: str) -> List[float]:
    try:
        return [float(v) for v in raw.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="scenario INI file (default: bundled radiochromic)")
    common.add_argument("--out", type=Path, default=None, help="output directory (default: [scenario] output)")
    common.add_argument(
        "--format",
        choices=[f.value for f in OutputFormat],
        default=OutputFormat.JSON.value,
        help="artifact format; a JSON report is always written",
    )
    common.add_argument("--seed", type=int, default=None, help="override [scenario] seed")
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG")

    parser = argparse.ArgumentParser(prog="oedcal", description="Optimal designs for calibration models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    d_opt = sub.add_parser("d-opt", parents=[common], help="D-optimal design")
    d_opt.add_argument("--naive", action="store_true", help="use dmu/dtheta as the regressor (naive inverse)")

    c_opt = sub.add_parser("c-opt", parents=[common], help="c-optimal design by the Elfving construction")
    target = c_opt.add_mutually_exclusive_group(required=True)
    target.add_argument("--c", type=_floats, help="c vector, e.g. 0,0,1")
    target.add_argument("--criterion", help="c-criterion named in [criteria]")

    sub.add_parser("gi-opt", parents=[common], help="G_I-optimal design (Wynn)")
    sub.add_parser("vi-opt", parents=[common], help="V_I-optimal design (Wynn)")

    sequence = sub.add_parser("sequence", parents=[common], help="optimize the ratio of a space-filling sequence")
    sequence.add_argument("--family", choices=[f.value for f in SequenceFamily])
    sequence.add_argument("--scale", choices=[s.value for s in Scale])
    sequence.add_argument("--n", type=int)
    sequence.add_argument("--criterion", help="D, GI, VI or a c-criterion named in [criteria]")

    evaluate = sub.add_parser("evaluate", parents=[common], help="criterion values and efficiencies of a fixed design")
    evaluate.add_argument("--points", type=_floats, help="design points (default: [evaluate] points)")
    evaluate.add_argument("--weights", type=_floats, help="design weights (default: equal)")
    evaluate.add_argument("--scale", choices=[s.value for s in Scale], default=None)

    sensitivity = sub.add_parser("sensitivity", parents=[common], help="CSV of the sensitivity function")
    sensitivity.add_argument("--criterion", default="D", help="D, D-naive, VI or a c-criterion")
    sensitivity.add_argument("--design", type=Path, default=None, help="JSON report whose design to use")
    sensitivity.add_argument("--points", type=int, default=SENSITIVITY_POINTS)

    invert = sub.add_parser("invert", parents=[common], help="map dose values to response values")
    invert.add_argument("doses", type=float, nargs="+")

    elfving = sub.add_parser("elfving", parents=[common], help="CSV of the Elfving locus f(y) and -f(y)")
    elfving.add_argument("--points", type=int, default=SENSITIVITY_POINTS)

    sub.add_parser("reproduce-paper", parents=[common], help="compare every bundled reference design")
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


class _Run:
    """State shared by the verb handlers of one invocation."""

    def __init__(self, args: argparse.Namespace, config: ScenarioConfig):
        self.args = args
        self.config = config
        self.model = config.build_model()
        self.options = config.solver
        self.fmt = OutputFormat(args.format)
        self.out = config.output

    def criterion(self, name: str) -> CriterionSpec:
        return parse_criterion(name, self.config.c_vectors, self.options, self.model.m)

    def emit(self, report, stem: str) -> List[Path]:
        formats = [OutputFormat.JSON] if self.fmt is OutputFormat.JSON else [OutputFormat.JSON, self.fmt]
        written: List[Path] = []
        for fmt in formats:
            written += emit_report(report, fmt, self.out, stem, self.config.echo())
        text = render_fixed_text(report) if isinstance(report, FixedDesignReport) else render_text(report)
        sys.stdout.write(text)
        return written

    def finish(self, report: DesignReport, stem: str) -> int:
        self.emit(report, stem)
        return EXIT_OK if report.certificate.converged else EXIT_NOT_CONVERGED


def _d_opt(run: _Run) -> int:
    mode = RegressorMode.NAIVE_INVERSE if run.args.naive else RegressorMode.CALIBRATION
    report = solve_d_optimal(run.model, mode=mode, options=run.options)
    return run.finish(report, "d_optimal_naive" if run.args.naive else "d_optimal")


def _c_opt(run: _Run) -> int:
    if run.args.criterion:
        spec = run.criterion(run.args.criterion)
        if spec.kind is not CriterionKind.C:
            raise ConfigError("--criterion", f"{run.args.criterion} is not a c-criterion")
    else:
        if len(run.args.c) != run.model.m:
            raise ConfigError("--c", f"expected {run.model.m} entries, got {len(run.args.c)}")
        try:
            spec = CriterionSpec.c(run.args.c)
        except ValueError as exc:
            raise ConfigError("--c", str(exc)) from exc
    report = solve_c_optimal(run.model, spec.c_array, options=run.options, label=spec.label)
    stem = "c_optimal_" + (spec.label or "_".join(f"{v:g}" for v in spec.c_vector))
    return run.finish(report, stem)


def _gi_opt(run: _Run) -> int:
    return run.finish(solve_gi_optimal(run.model, options=run.options), "gi_optimal")


def _vi_opt(run: _Run) -> int:
    return run.finish(solve_vi_optimal(run.model, options=run.options), "vi_optimal")


def _sequence(run: _Run) -> int:
    args = run.args
    configured = run.config.sequence
    family = args.family or (configured.spec.family.value if configured else None)
    if family is None:
        raise ConfigError("sequence.family", "missing value")
    scale = args.scale or (configured.spec.scale.value if configured else Scale.RESPONSE.value)
    n = args.n or (configured.spec.n if configured else None)
    if n is None:
        raise ConfigError("sequence.n", "missing value")
    try:
        spec = SequenceSpec(SequenceFamily(family), Scale(scale), n)
    except ValueError as exc:
        raise ConfigError("sequence", str(exc)) from exc
    if args.criterion:
        criterion = run.criterion(args.criterion)
    else:
        criterion = configured.criterion if configured else CriterionSpec.d()

    report = optimize_sequence(run.model, spec, criterion, options=run.options)
    return run.finish(report, f"sequence_{criterion.name}_{spec.family.value}_{spec.scale.value}")


def _evaluate(run: _Run) -> int:
    args = run.args
    if args.points:
        scale = Scale(args.scale or Scale.DOSE.value)
        try:
            design = Design.create(scale, args.points, args.weights)
        except ValueError as exc:
            raise ConfigError("--points", str(exc)) from exc
    elif run.config.evaluate is not None:
        design = run.config.evaluate.design
    else:
        raise ConfigError("evaluate.points", "no design given in the scenario or with --points")

    report = evaluate_fixed_design(design, run.model, run.config.criteria, options=run.options)
    run.emit(report, "evaluate")
    return EXIT_OK


def _load_design(path: Path) -> Design:
    try:
        data = json.loads(path.read_text())
        return design_from_pairs(data["design_response"], Scale.RESPONSE)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError("--design", f"cannot read a design report from {path}: {exc}") from exc


def _sensitivity(run: _Run) -> int:
    spec = run.criterion(run.args.criterion)
    if spec.kind is CriterionKind.GI:
        raise ConfigError("--criterion", "G_I-optimality has no sensitivity function")
    if run.args.design is not None:
        design = _load_design(run.args.design)
    else:
        design = solve_for(spec, run.model, options=run.options).design_response
    ys, psi = sensitivity_samples(design, spec, run.model, points=run.args.points)
    run.out.mkdir(parents=True, exist_ok=True)
    path = write_csv(run.out / f"sensitivity_{spec.name}.csv", ["y", "sensitivity"], zip(ys.tolist(), psi.tolist()))
    logger.info("wrote %s", path)
    sys.stdout.write(f"{spec.name}: min sensitivity {float(np.min(psi)):.6g} on {ys.size} points -> {path}\n")
    return EXIT_OK


def _invert(run: _Run) -> int:
    doses = [float(d) for d in run.args.doses]
    responses = [float(run.model.eta(d)) for d in doses]
    rows = list(zip(doses, responses))
    run.out.mkdir(parents=True, exist_ok=True)
    if run.fmt is OutputFormat.CSV:
        write_csv(run.out / "invert.csv", ["dose", "response"], rows)
    else:
        path = run.out / ("invert.json" if run.fmt is OutputFormat.JSON else "invert.txt")
        if run.fmt is OutputFormat.JSON:
            payload = {"scenario": run.config.echo(), "dose": doses, "response": responses}
            path.write_text(to_json(payload))
        else:
            path.write_text(render_table(["dose", "response"], [(f"{d:g}", f"{y:.10g}") for d, y in rows]))
        logger.info("wrote %s", path)
    sys.stdout.write(render_table(["dose", "response"], [(f"{d:g}", f"{y:.10g}") for d, y in rows]))
    return EXIT_OK


def _elfving(run: _Run) -> int:
    model = run.model
    ys = model.response_space.grid(run.args.points)
    F = model.regressor(ys, model.nominal)
    header = ["branch", "y"] + [f"f_{name}" for name in model.nominal.names]
    rows = [("+", y, *f) for y, f in zip(ys.tolist(), F.tolist())]
    rows += [("-", y, *(-v for v in f)) for y, f in zip(ys.tolist(), F.tolist())]
    run.out.mkdir(parents=True, exist_ok=True)
    path = write_csv(run.out / "elfving_locus.csv", header, rows)
    logger.info("wrote %s", path)
    sys.stdout.write(f"Elfving locus with {ys.size} points per branch -> {path}\n")
    return EXIT_OK


class _Reproduction:
    """Solves every reference optimum once and compares it with the bundled rows."""

    def __init__(self, run: _Run):
        self.run = run
        self.model: CalibrationModel = run.model
        logger.info("solving the reference optima")
        self.optima: Dict[str, DesignReport] = reference_optima(self.model, options=run.options)
        self.naive = solve_d_optimal(self.model, mode=RegressorMode.NAIVE_INVERSE, options=run.options)
        self.not_converged = [
            name for name, r in {**self.optima, "D-naive": self.naive}.items() if not r.certificate.converged
        ]

    def efficiency_checks(self, row: GoldenRow, design: Design, lookup: Callable[[str], Design]) -> List[Check]:
        checks = []
        for check in row.efficiencies:
            ref = self.optima[check.criterion]
            subject = design if check.of == "self" else lookup(check.of)
            value = efficiency(subject, ref.design_response, ref.criterion, self.model)
            checks.append(check_value(row.key, f"{check.criterion}-efficiency", check.value, value, check.tol))
        return checks

    def optimum(self, row: GoldenRow) -> List[Check]:
        report = self.naive if row.mode is RegressorMode.NAIVE_INVERSE else self.optima[row.key]
        checks = check_design(row, report.design_response, report.design_dose)
        tol = row.tolerances
        if "criterion" in tol and not all(c.passed for c in checks):
            tabled = phi_gi(row.design(), self.model)
            actual = phi_gi(report.design_response, self.model)
            checks = [check_at_most(row.key, "G_I value vs tabled design", tabled, actual, tol["criterion"])]
        if "bound" in tol:
            bound = report.certificate.bound
            passed = bound is not None and bound >= tol["bound"]
            checks.append(Check(row.key, "GET bound", tol["bound"], bound, 0.0, passed))
        if "elfving_gap" in tol:
            gap = report.certificate.diagnostics.get("elfving_gap")
            checks.append(check_at_most(row.key, "Elfving gap", tol["elfving_gap"], gap))
        if "random" in tol:
            best = report.certificate.diagnostics.get("random_best")
            checks.append(
                check_at_most(row.key, "value vs best random design", best, report.criterion_value, tol["random"])
            )
        return checks + self.efficiency_checks(
            row, report.design_response, lambda key: self.optima[key].design_response
        )

    def sequence(self, row: GoldenRow) -> List[Check]:
        ref = self.optima[row.criterion]
        spec = SequenceSpec(SequenceFamily(row.family), row.scale, row.n)
        report = optimize_sequence(
            self.model, spec, ref.criterion, reference=ref.design_response, options=self.run.options
        )
        checks = []
        if "ratio" in row.tolerances:
            checks.append(check_value(row.key, "ratio", row.ratio, report.ratio, row.tolerances["ratio"]))
        checks += check_design(row, report.design_response)
        if "criterion" in row.tolerances:
            tabled = criterion_value(as_response(row.dose_design(), self.model), ref.criterion, self.model)
            checks.append(
                check_at_most(
                    row.key,
                    f"{ref.criterion.name} value vs tabled sequence",
                    tabled,
                    report.criterion_value,
                    row.tolerances["criterion"],
                )
            )
        return checks + self.efficiency_checks(
            row, report.design_response, lambda key: self.optima[key].design_response
        )

    def fixed(self, row: GoldenRow) -> List[Check]:
        criteria = [self.optima[c.criterion].criterion for c in row.efficiencies]
        report = evaluate_fixed_design(
            row.dose_design(), self.model, criteria, references=self.optima, options=self.run.options
        )
        checks = check_design(row, report.design_response)
        for check in row.efficiencies:
            actual = report.efficiencies.get(check.criterion)
            checks.append(check_value(row.key, f"{check.criterion}-efficiency", check.value, actual, check.tol))
        return checks

    def checks(self) -> List[Check]:
        handlers = {"optimum": self.optimum, "sequence": self.sequence, "fixed": self.fixed}
        result: List[Check] = []
        for row in load_golden().values():
            logger.info("checking %s", row.key)
            result += handlers[row.kind](row)
        return result


def _reproduce(run: _Run) -> int:
    reference = RadiochromicModel()
    if run.model.name != reference.name or run.model.nominal.values != reference.nominal.values:
        raise ConfigError(
            "model", f"the reference designs are for {reference.name} at theta = {reference.nominal.values}"
        )
    reproduction = _Reproduction(run)
    checks = reproduction.checks()
    run.out.mkdir(parents=True, exist_ok=True)
    data = comparison_to_dict(checks, run.config.echo())
    data["not_converged"] = reproduction.not_converged
    (run.out / "reproduce.json").write_text(to_json(data))
    text = render_comparison(checks)
    if run.fmt is OutputFormat.TEXT:
        (run.out / "reproduce.txt").write_text(text)
    elif run.fmt is OutputFormat.CSV:
        rows = [(c.row, c.quantity, json.dumps(c.expected), json.dumps(c.actual), c.tol, c.passed) for c in checks]
        write_csv(run.out / "reproduce.csv", ["row", "quantity", "expected", "actual", "tol", "passed"], rows)
    sys.stdout.write(text)
    if not data["passed"]:
        logger.error("%d reference comparisons failed", data["failures"])
        return EXIT_MISMATCH
    return EXIT_NOT_CONVERGED if reproduction.not_converged else EXIT_OK


COMMANDS: Dict[str, Callable[[_Run], int]] = {
    "d-opt": _d_opt,
    "c-opt": _c_opt,
    "gi-opt": _gi_opt,
    "vi-opt": _vi_opt,
    "sequence": _sequence,
    "evaluate": _evaluate,
    "sensitivity": _sensitivity,
    "invert": _invert,
    "elfving": _elfving,
    "reproduce-paper": _reproduce,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one verb and return its exit code."""
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = load_config(args.config).with_overrides(seed=args.seed, output=args.out)
        return COMMANDS[args.command](_Run(args, config))
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except SolverError as exc:
        logger.error("%s", exc)
        if exc.report is not None:
            _Run(args, config).emit(exc.report, f"{args.command.replace('-', '_')}_failed")
        return EXIT_NOT_CONVERGED
    except (OedCalError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


def main() -> None:
    sys.exit(run())
