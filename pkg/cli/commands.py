"""Command-line entry point: ``solve``, ``convergence``, ``verify`` and ``robustness``."""

import argparse
import json
import logging
import time as timer
from dataclasses import asdict
from pathlib import Path

import numpy as np
from pydantic import ValidationError as PydanticValidationError

from analysis.errors import ErrorMeter
from analysis.services import convergence_study, energy_decay_check, rate_gate, robustness_compare
from common.exceptions import (
    AssemblyError,
    ConfigError,
    GateFailure,
    MeshError,
    QuadratureError,
    SolverError,
    ValidationError,
)
from forms.checks import coercivity_check
from mms.cases import build_case_mesh, static_case
from poro_hdg import __version__, settings
from spaces.choices import Variant
from spaces.services import build_layout
from system.checks import condensation_oracle, divergence_conformity_report, infsup_sequence, zero_data_check
from system.models import backward_euler, static
from timeloop.checkpoints import load_checkpoint
from timeloop.choices import Scheme
from timeloop.models import TimeGrid
from timeloop.observers import CheckpointObserver, EnergyObserver, ErrorObserver, MaxPressureObserver
from timeloop.services import run, run_static

from .config import build_case, build_mesh, load_config, parse_rates
from .exporters import ExportObserver, line_samples, write_manifest, write_table, write_vtk

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_GATE = 0, 1, 2, 3

CONFIG_KEYS = (
    "case", "variant", "k", "nx", "ny", "mesh", "scheme", "dt", "T", "E", "nu", "c0", "alpha", "kappa",
    "beta", "output_dir", "vtk", "csv", "checkpoints", "checkpoint_every", "restart", "seed", "levels",
    "robustness_E", "robustness_nu", "robustness_level", "max_ratio",
)


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors raise ConfigError instead of exiting, so they map to exit code 1."""

    def error(self, message):
        raise ConfigError(message)


def _add_run_arguments(parser):
    parser.add_argument("--config", type=Path, help="JSON run configuration; flags override its values")
    parser.add_argument("--case", help="benchmark case: static, quasistatic, footing, cantilever")
    parser.add_argument("--variant", choices=[variant.value for variant in Variant])
    parser.add_argument("--k", type=int, help="polynomial degree")
    parser.add_argument("--nx", type=int)
    parser.add_argument("--ny", type=int)
    parser.add_argument("--mesh", type=Path, help="mesh file instead of the structured grid")
    parser.add_argument("--scheme", choices=[scheme.value for scheme in Scheme])
    parser.add_argument("--dt", type=float)
    parser.add_argument("--T", type=float, dest="T", help="final time")
    for name in ("E", "nu", "c0", "alpha", "kappa", "beta"):
        parser.add_argument(f"--{name}", type=float, dest=name)
    parser.add_argument("--output-dir", type=Path, dest="output_dir")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--log-level", dest="log_level")


def build_parser():
    parser = ArgumentParser(prog="poro_hdg", description="HDG solvers for total-pressure poroelasticity")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    solve = commands.add_parser("solve", help="run one case and export fields")
    _add_run_arguments(solve)
    solve.add_argument("--no-vtk", dest="vtk", action="store_const", const=False)
    solve.add_argument("--no-csv", dest="csv", action="store_const", const=False)
    solve.add_argument("--checkpoints", action="store_const", const=True)
    solve.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    solve.add_argument("--restart", type=Path, help="continue from a checkpoint file")

    convergence = commands.add_parser("convergence", help="errors and rates over uniform refinements")
    _add_run_arguments(convergence)
    convergence.add_argument("--levels", type=int)
    convergence.add_argument("--gate-rates", dest="gate_rates", help="minimum rates u,pT,z,p")

    verify = commands.add_parser("verify", help="property checks on small meshes")
    _add_run_arguments(verify)

    robustness = commands.add_parser("robustness", help="static errors across E and nu")
    _add_run_arguments(robustness)
    robustness.add_argument("--E-values", type=float, nargs="+", dest="robustness_E")
    robustness.add_argument("--nu-values", type=float, nargs="+", dest="robustness_nu")
    robustness.add_argument("--level", type=int, dest="robustness_level")
    robustness.add_argument("--max-ratio", type=float, dest="max_ratio")
    return parser


def config_from_args(args):
    overrides = {key: getattr(args, key) for key in CONFIG_KEYS if getattr(args, key, None) is not None}
    for key in ("robustness_E", "robustness_nu"):
        if key in overrides:
            overrides[key] = tuple(overrides[key])
    gate = parse_rates(getattr(args, "gate_rates", None))
    if gate is not None:
        overrides["gate_rates"] = gate
    return load_config(args.config, **overrides)


def _output_directory(config, case):
    directory = Path(config.output_dir) / case.name
    directory.mkdir(parents=True, exist_ok=True)
    return directory


def _boundary_flux(case, time):
    flux = case.problem.flux
    if flux is None:
        return lambda points, normals: np.zeros(len(points))
    return lambda points, normals: flux(points, normals, time)


def _json(value):
    return json.dumps(value, indent=2, sort_keys=True, default=lambda item: item.item() if hasattr(item, "item") else str(item))


def cmd_solve(config):
    case = build_case(config)
    params = case.params
    layout = build_layout(build_mesh(config, case), params.degree, case.variant)
    output = _output_directory(config, case)
    scheme = Scheme(config.scheme or case.scheme)
    logger.info("solving %s with %r", case.name, layout)

    started = timer.perf_counter()
    results = {}
    if scheme is Scheme.STATIC:
        state = run_static(layout, params, case.problem)
        if config.vtk:
            write_vtk(output / "fields_00000.vtk", state)
        if config.csv and case.line_samples:
            line_samples(state, case.line_samples).to_csv(
                output / "lines_00000.csv", index=False, float_format=settings.CSV_FLOAT_FORMAT
            )
        if case.exact is not None:
            record = ErrorMeter(layout, case.exact, params).errors(state, 0.0)
            results["errors"] = record.as_dict()
            if config.csv:
                write_table(output / "errors.csv", [record.as_dict()])
    else:
        grid = TimeGrid.from_step(config.T or case.t_final, config.dt or case.dt)
        energy, maxima = EnergyObserver(layout, params), MaxPressureObserver(layout)
        observers = [energy, maxima]
        errors = ErrorObserver(layout, case.exact, params, grid.dt) if case.exact is not None else None
        if errors is not None:
            observers.append(errors)
        lines = case.line_samples if config.csv else ()
        if config.vtk or lines:
            observers.append(ExportObserver(output, vtk=config.vtk, lines=lines))
        if config.checkpoints:
            observers.append(CheckpointObserver(layout, output / "checkpoints", config.checkpoint_every))

        initial = previous = None
        start_step = 0
        if config.restart is not None:
            checkpoint = load_checkpoint(config.restart, layout)
            initial, previous, start_step = checkpoint.state, checkpoint.previous, checkpoint.step
            logger.info("restarting from step %d at t=%.6g", start_step, initial.time)

        result = run(
            layout, params, grid, scheme, case.problem, observers=observers,
            initial=initial, previous=previous, start_step=start_step,
        )
        state = result.final
        results.update(steps=result.steps, max_abs_p=maxima.overall, final_energy=energy.X[-1])
        if errors is not None and errors.last is not None:
            results["errors"] = errors.last.as_dict()
        if config.csv:
            write_table(output / "energy.csv", energy.as_rows(), ["step", "time", "X", "Y"])
            write_table(output / "max_pressure.csv", maxima.as_rows(), ["step", "time", "max_abs_p"])
            if errors is not None:
                write_table(output / "errors.csv", errors.as_rows())

    conformity = divergence_conformity_report(state, _boundary_flux(case, state.time))
    results.update(final_time=state.time, conformity=asdict(conformity), conformity_passed=conformity.passed())
    elapsed = timer.perf_counter() - started
    write_manifest(output / "manifest.json", config, layout, {"solve": elapsed}, results)
    print(f"{case.name}: {layout!r}, t={state.time:.6g}, {elapsed:.2f}s, output in {output}")
    return EXIT_OK


def cmd_convergence(config):
    if config.mesh is not None:
        raise ConfigError("convergence studies refine the case's structured mesh; drop --mesh")
    case = build_case(config)
    output = _output_directory(config, case)
    started = timer.perf_counter()
    table = convergence_study(
        case,
        degree=case.params.degree,
        variant=case.variant,
        n_levels=config.levels,
        scheme=config.scheme,
        dt=config.dt,
        t_final=config.T,
        nx=config.nx,
        ny=config.ny,
    )
    elapsed = timer.perf_counter() - started
    print(table.to_text())
    if config.csv:
        table.to_csv(output / f"convergence_{case.variant}_k{case.params.degree}.csv")

    results = {"final_rates": table.final_rates()}
    gate = rate_gate(table, config.gate_rates) if config.gate_rates else None
    if gate is not None:
        results["gate"] = {"minimum": gate.minimum, "results": gate.results, "passed": gate.passed}
        print(f"rate gate {'passed' if gate.passed else 'FAILED'}: {gate.results}")
    write_manifest(output / "manifest.json", config, timings={"convergence": elapsed}, results=results)
    if gate is not None and not gate.passed:
        raise GateFailure(f"rates {gate.rates} below {gate.minimum}")
    return EXIT_OK


def _check(name, variant, passed, values):
    return {"property": name, "variant": variant, "passed": bool(passed), "values": values}


def verify_variant(case, variant, nx=2, seed=None):
    """Property suite for one trace variant on small meshes of ``case``."""

    params = case.params
    degree = params.degree
    dt = case.dt or 1.0e-3
    weights = static() if case.is_static else backward_euler(dt)
    meshes = [build_case_mesh(case, nx, nx, level) for level in range(3)]
    layouts = [build_layout(mesh, degree, variant) for mesh in meshes]
    layout = layouts[0]
    checks = []

    if case.is_static:
        state = run_static(layout, params, case.problem)
    else:
        state = run(layout, params, TimeGrid(dt, 1), Scheme.BE, case.problem).final
    conformity = divergence_conformity_report(state, _boundary_flux(case, state.time))
    checks.append(_check("conformity", variant, conformity.passed(), asdict(conformity)))

    two_cells = build_layout(build_case_mesh(case, 1, 1), degree, variant)
    for label, target in (("2 cells", two_cells), (f"{layout.mesh.n_cells} cells", layout)):
        oracle = condensation_oracle(target, params, weights, seed=seed)
        checks.append(
            _check("condensation_oracle", variant, oracle.passed, dict(asdict(oracle), mesh=label))
        )

    zero = zero_data_check(layout, params, weights)
    checks.append(_check("zero_data", variant, zero.passed, asdict(zero)))

    coercivity = coercivity_check(layout, params, seed=seed)
    checks.append(_check("coercivity", variant, coercivity.passed, asdict(coercivity)))

    reports, ratios = infsup_sequence(layouts)
    infsup_passed = all(report.passed for report in reports) and min(ratios.values()) >= 0.5
    values = {"reports": [asdict(report) for report in reports], "ratios": ratios}
    checks.append(_check("inf_sup", variant, infsup_passed, values))

    decay = energy_decay_check(layout, params)
    checks.append(_check("energy_decay", variant, decay.passed, asdict(decay)))
    return checks


def cmd_verify(config):
    case = build_case(config)
    variants = [config.variant.value] if config.variant else [variant.value for variant in Variant]
    output = _output_directory(config, case)
    started = timer.perf_counter()
    checks = []
    for variant in variants:
        checks.extend(verify_variant(case, variant, nx=config.nx or 2, seed=config.seed))
    elapsed = timer.perf_counter() - started

    report = {"case": case.name, "passed": all(check["passed"] for check in checks), "checks": checks}
    text = _json(report)
    (output / "verify.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    write_manifest(output / "manifest.json", config, timings={"verify": elapsed}, results={"passed": report["passed"]})
    failed = [f"{check['property']} ({check['variant']})" for check in checks if not check["passed"]]
    if failed:
        raise GateFailure(f"failed properties: {', '.join(failed)}")
    return EXIT_OK


def cmd_robustness(config):
    """Static errors for each E across the nu values; the max/min ratio per field is gated."""

    if config.case not in ("static", "static_mms") or config.mms is not None:
        raise ConfigError("robustness comparisons use the static manufactured solution")
    degree = config.k or 1
    variant = config.variant.value if config.variant else Variant.HDG.value
    output = Path(config.output_dir) / "static"
    output.mkdir(parents=True, exist_ok=True)

    started = timer.perf_counter()
    rows, summary, passed = [], [], True
    for E in config.robustness_E:
        grid = [(E, nu) for nu in config.robustness_nu]
        report = robustness_compare(static_case, grid, degree, variant, config.robustness_level, config.nx)
        ratios = report.ratios()
        ok = report.passed(config.max_ratio)
        passed = passed and ok
        summary.append({"E": E, "ratios": ratios, "passed": ok})
        for (_, nu), record in zip(report.parameters, report.records):
            rows.append({"E": E, "nu": nu, **record.as_dict()})
        print(f"E={E:g}: " + ", ".join(f"{name} {ratio:.3f}" for name, ratio in ratios.items()))
    elapsed = timer.perf_counter() - started

    if config.csv:
        write_table(output / f"robustness_{variant}_k{degree}.csv", rows)
    write_manifest(output / "manifest.json", config, timings={"robustness": elapsed}, results={"summary": summary})
    if not passed:
        raise GateFailure(f"error ratios across nu exceed {config.max_ratio}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "convergence": cmd_convergence,
    "verify": cmd_verify,
    "robustness": cmd_robustness,
}


def main(argv=None):
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)
    try:
        args = build_parser().parse_args(argv)
        if args.log_level:
            logging.getLogger().setLevel(args.log_level.upper())
        config = config_from_args(args)
        return COMMANDS[args.command](config)
    except GateFailure as error:
        logger.error("%s", error)
        return EXIT_GATE
    except (ConfigError, ValidationError, PydanticValidationError) as error:
        logger.error("%s", error)
        return EXIT_CONFIG
    except (AssemblyError, SolverError, MeshError, QuadratureError) as error:
        logger.error("%s: %s", type(error).__name__, error)
        return EXIT_NUMERICAL
