"""Command-line front end.

Usage:
    superosc construct --config run.json [--out DIR] [--digits D] [--tol T]
    superosc experiment amp-match --config run.json [--out DIR]
    superosc experiment cost-sweep --config sweep.json

Exit status is 0 on success, 2 when the configuration is invalid (the
message names the offending field) and 3 when the numerics fail (the message
names the error kind).  ``SUPEROSC_MAX_DIGITS`` caps precision escalation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import mpmath as mp
import numpy as np

from .constraints import ConstraintSet, Family, PhysicalConfig
from .errors import ConstraintError, SuperoscError
from .experiments import (
    SolverSettings,
    centred_nodes,
    equidistant_nodes,
    run_amplitude_matching,
    run_convergence,
    run_cost_sweep,
    run_derivative_matching,
    run_extreme,
)
from .quadratic import QuadraticKernel, QuadraticProblem, solve_quadratic
from .solver import DEFAULT_DIGITS, DEFAULT_MAX_DIGITS, DEFAULT_TOL, construct, max_digits_from_env
from .wavefield import WaveField, ideal_template, momentum_stats, project_slit

EXPERIMENTS = ("amp-match", "deriv-match", "cost-sweep", "extreme", "convergence")


class ConfigError(ValueError):
    """Invalid run configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class OutputSpec:
    directory: Path = Path(".")
    report: str = "report.json"
    position_grid: str = "position.csv"
    momentum_grid: str = "momentum.csv"
    grid_points: int = 2001
    position_window: tuple[float, float] | None = None


@dataclass
class RunConfig:
    physical: PhysicalConfig
    solver: SolverSettings
    outputs: OutputSpec
    constraints: ConstraintSet | None = None
    quadratic: tuple = ()
    quadratic_targets: tuple = ()
    experiment: dict = field(default_factory=dict)
    # normalized echo, re-feedable to the CLI
    echo: dict = field(default_factory=dict)


# ---------------------------------------------------------------- parsing

def _section(data: dict, name: str) -> dict:
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be an object")
    return sec


def _number(value: Any, path: str, positive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value) or (positive and value <= 0):
        raise ConfigError(path, f"must be {'positive and ' if positive else ''}finite, got {value!r}")
    return value


def _integer(value: Any, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(path, f"must be at least {minimum}, got {value}")
    return value


def _complex(value: Any, path: str) -> complex:
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(path, "complex values are written as [re, im]")
        return complex(_number(value[0], f"{path}[0]"), _number(value[1], f"{path}[1]"))
    return complex(_number(value, path))


def _physical(data: dict) -> PhysicalConfig:
    sec = _section(data, "physical")
    known = {"hbar", "p_max", "slit_half_width", "slit_center"}
    for key in sec:
        if key not in known:
            raise ConfigError(f"physical.{key}", "unknown field")
    kwargs = {}
    for key in known & sec.keys():
        kwargs[key] = _number(sec[key], f"physical.{key}", positive=key != "slit_center")
    return PhysicalConfig(**kwargs)


def _solver(data: dict, digits: int | None, tol: float | None) -> SolverSettings:
    sec = _section(data, "solver")
    t = _number(sec.get("tol", DEFAULT_TOL), "solver.tol", positive=True)
    start = _integer(sec.get("start_digits", DEFAULT_DIGITS), "solver.start_digits", 8)
    top = _integer(sec.get("max_digits", DEFAULT_MAX_DIGITS), "solver.max_digits", 8)
    if digits is not None:
        start = _integer(digits, "--digits", 8)
    if tol is not None:
        t = _number(tol, "--tol", positive=True)
    try:
        top = max_digits_from_env(top)
    except ValueError as exc:
        raise ConfigError("SUPEROSC_MAX_DIGITS", str(exc)) from None
    if start > top:
        raise ConfigError("solver.start_digits", f"{start} exceeds max_digits {top}")
    return SolverSettings(t, start, top)


def _outputs(data: dict, out_dir: str | None) -> OutputSpec:
    sec = _section(data, "outputs")
    spec = OutputSpec()
    if "dir" in sec:
        spec.directory = Path(str(sec["dir"]))
    if out_dir is not None:
        spec.directory = Path(out_dir)
    for key in ("report", "position_grid", "momentum_grid"):
        if key in sec:
            if not isinstance(sec[key], str) or not sec[key]:
                raise ConfigError(f"outputs.{key}", "expected a file name")
            setattr(spec, key, sec[key])
    if "grid_points" in sec:
        spec.grid_points = _integer(sec["grid_points"], "outputs.grid_points", 2)
    if "position_window" in sec:
        win = sec["position_window"]
        if not isinstance(win, list) or len(win) != 2:
            raise ConfigError("outputs.position_window", "expected [lo, hi]")
        lo = _number(win[0], "outputs.position_window[0]")
        hi = _number(win[1], "outputs.position_window[1]")
        if not hi > lo:
            raise ConfigError("outputs.position_window", "hi must exceed lo")
        spec.position_window = (lo, hi)
    return spec


def _node_list(raw: Any, path: str, cfg: PhysicalConfig, digits: int, edges: bool) -> list:
    if isinstance(raw, list):
        nodes = [_number(v, f"{path}[{i}]") for i, v in enumerate(raw)]
        for i in range(1, len(nodes)):
            if not nodes[i] > nodes[i - 1]:
                raise ConfigError(f"{path}[{i}]", "nodes must be strictly increasing")
        for i, x in enumerate(nodes):
            if not cfg.contains(x):
                raise ConfigError(f"{path}[{i}]", f"node {x} lies outside the slit {cfg.slit}")
        return nodes
    if not isinstance(raw, dict):
        raise ConfigError(path, "expected a list of nodes or a placement rule")
    count = _integer(raw.get("count"), f"{path}.count")
    placement = raw.get("placement", "equidistant")
    if edges:
        count += 1
    if placement == "equidistant":
        if count < 2:
            raise ConfigError(f"{path}.count", "edge-to-edge placement needs at least two nodes")
        return equidistant_nodes(cfg, count, digits)
    if placement == "centred":
        spacing = _number(raw.get("spacing"), f"{path}.spacing", positive=True)
        if (count - 1) * spacing > cfg.slit_width * (1 + 1e-12):
            raise ConfigError(f"{path}.spacing", "nodes at this spacing do not fit in the slit")
        return centred_nodes(cfg, count, spacing, digits)
    raise ConfigError(f"{path}.placement", f"unknown placement {placement!r}")


def _targets(raw: Any, path: str, family: Family, nodes: list, n: int, cfg, digits: int) -> list:
    if isinstance(raw, list):
        if len(raw) != n:
            raise ConfigError(path, f"expected {n} targets, got {len(raw)}")
        return [_complex(v, f"{path}[{i}]") for i, v in enumerate(raw)]
    if raw == "alternating":
        return [(-1) ** k for k in range(1, n + 1)]
    if isinstance(raw, dict) and "template" in raw:
        tsec = raw["template"]
        if not isinstance(tsec, dict):
            raise ConfigError(f"{path}.template", "must be an object with pbar")
        pbar = _number(tsec.get("pbar"), f"{path}.template.pbar")
        tmpl = ideal_template(cfg, pbar)
        with mp.workdps(digits + 10):
            if family is Family.POINT_AMPLITUDE:
                return [tmpl.derivative_at(x) for x in nodes]
            if family is Family.DERIVATIVE_AT_POINT:
                return [tmpl.derivative_at(nodes[0], k) for k in range(n)]
            return [tmpl.area(a, b) for a, b in zip(nodes[:-1], nodes[1:])]
    raise ConfigError(path, "expected a list, \"alternating\" or {\"template\": {\"pbar\": ...}}")


def _problem(data: dict, cfg: PhysicalConfig, digits: int) -> tuple[ConstraintSet, tuple, tuple]:
    sec = _section(data, "problem")
    if not sec:
        raise ConfigError("problem", "missing")
    try:
        family = Family(sec.get("family", Family.POINT_AMPLITUDE.value))
    except ValueError:
        names = ", ".join(f.value for f in Family)
        raise ConfigError("problem.family", f"must be one of {names}") from None
    if family is Family.DERIVATIVE_AT_POINT:
        anchor = _number(sec.get("anchor", cfg.slit_center), "problem.anchor")
        if not cfg.contains(anchor):
            raise ConfigError("problem.anchor", f"anchor {anchor} lies outside the slit {cfg.slit}")
        nodes = [anchor]
        if "size" in sec:
            n = _integer(sec["size"], "problem.size")
        elif isinstance(sec.get("targets"), list):
            n = len(sec["targets"])
        else:
            raise ConfigError("problem.size", "required unless targets are listed explicitly")
    else:
        if "nodes" not in sec:
            raise ConfigError("problem.nodes", "missing")
        nodes = _node_list(sec["nodes"], "problem.nodes", cfg, digits,
                           edges=family is Family.INTERVAL_AREA and isinstance(sec["nodes"], dict))
        n = len(nodes) - (family is Family.INTERVAL_AREA)
        if n < 1:
            raise ConfigError("problem.nodes", "interval areas need at least two edges")
    if "targets" not in sec:
        raise ConfigError("problem.targets", "missing")
    values = _targets(sec["targets"], "problem.targets", family, nodes, n, cfg, digits)
    try:
        cs = ConstraintSet(family, tuple(nodes), tuple(values))
        cs.validate(cfg)
    except ConstraintError as exc:
        raise ConfigError("problem", str(exc)) from None
    kernels, qtargets = _quadratic(sec.get("quadratic"))
    return cs, kernels, qtargets


def _quadratic(raw: Any) -> tuple[tuple, tuple]:
    if raw is None:
        return (), ()
    if not isinstance(raw, list):
        raise ConfigError("problem.quadratic", "expected a list of {kind, coefficient, power, target}")
    kernels, targets = [], []
    for i, item in enumerate(raw):
        path = f"problem.quadratic[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(path, "expected an object")
        kind = item.get("kind", "monomial")
        coef = _number(item.get("coefficient", 1.0), f"{path}.coefficient")
        if kind == "constant":
            kernels.append(QuadraticKernel.constant(coef))
        elif kind == "monomial":
            kernels.append(QuadraticKernel.monomial(_integer(item.get("power", 0), f"{path}.power", 0),
                                                    coef))
        else:
            raise ConfigError(f"{path}.kind", "must be 'constant' or 'monomial'")
        targets.append(_number(item.get("target"), f"{path}.target"))
    return tuple(kernels), tuple(targets)


def _experiment_params(name: str, data: dict, cfg: PhysicalConfig, digits: int) -> dict:
    sec = _section(data, "experiment")
    p: dict = {}
    if name in ("amp-match", "deriv-match", "convergence"):
        p["pbar"] = _number(sec.get("pbar", 2.0), "experiment.pbar")
    if name == "amp-match":
        p["n"] = _integer(sec.get("N", 9), "experiment.N", 2)
    elif name == "deriv-match":
        p["n"] = _integer(sec.get("N", 23), "experiment.N", 1)
    elif name == "convergence":
        raw = sec.get("N_list", [5, 9, 15])
        if not isinstance(raw, list) or not raw:
            raise ConfigError("experiment.N_list", "expected a non-empty list")
        ns = [_integer(v, f"experiment.N_list[{i}]", 3) for i, v in enumerate(raw)]
        for i in range(1, len(ns)):
            if ns[i] <= ns[i - 1]:
                raise ConfigError(f"experiment.N_list[{i}]", "must be increasing")
        p["n_list"] = ns
    elif name == "cost-sweep":
        raw = sec.get("N_range", [3, 12])
        if not isinstance(raw, list) or len(raw) != 2:
            raise ConfigError("experiment.N_range", "expected [first, last]")
        lo = _integer(raw[0], "experiment.N_range[0]")
        hi = _integer(raw[1], "experiment.N_range[1]", lo)
        spacing = _number(sec.get("node_spacing", cfg.lambda_min / 4), "experiment.node_spacing",
                          positive=True)
        if (hi - 1) * spacing > cfg.slit_width * (1 + 1e-12):
            raise ConfigError("experiment.node_spacing",
                              f"{hi} nodes at spacing {spacing} do not fit in the slit")
        mode = sec.get("values_mode", "alternating")
        if mode not in ("alternating", "template"):
            raise ConfigError("experiment.values_mode", "must be 'alternating' or 'template'")
        p.update(n_range=list(range(lo, hi + 1)), node_spacing=spacing, values_mode=mode,
                 pbar=_number(sec.get("pbar", 2.0), "experiment.pbar"),
                 variations=_integer(sec.get("variations", 11), "experiment.variations", 3))
    elif name == "extreme":
        raw = sec.get("nodes", {"count": 5, "placement": "centred", "spacing": cfg.lambda_min / 4})
        nodes = _node_list(raw, "experiment.nodes", cfg, digits, edges=False)
        if len(nodes) < 2:
            raise ConfigError("experiment.nodes", "the extreme construction needs at least two nodes")
        p["nodes"] = nodes
    return p


def load_config(data: Any, *, experiment: str | None = None, out_dir: str | None = None,
                digits: int | None = None, tol: float | None = None) -> RunConfig:
    """Validate a parsed JSON document into a RunConfig.

    A previously written report is accepted too: its ``config`` echo is used.
    """
    if not isinstance(data, dict):
        raise ConfigError("<root>", "configuration must be a JSON object")
    if "config" in data and "physical" not in data:
        data = data["config"]
    try:
        cfg = _physical(data)
    except ConstraintError as exc:
        raise ConfigError("physical", str(exc)) from None
    settings = _solver(data, digits, tol)
    outputs = _outputs(data, out_dir)
    run = RunConfig(cfg, settings, outputs)
    if experiment is None:
        run.constraints, run.quadratic, run.quadratic_targets = _problem(data, cfg, settings.start_digits)
    else:
        run.experiment = _experiment_params(experiment, data, cfg, settings.start_digits)
    run.echo = {k: data[k] for k in ("physical", "problem", "experiment", "outputs") if k in data}
    run.echo["solver"] = {"tol": settings.tol, "start_digits": settings.start_digits,
                          "max_digits": settings.max_digits}
    return run


# ---------------------------------------------------------------- output

def _jsonable(obj: Any):
    if isinstance(obj, mp.mpc) or isinstance(obj, complex):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, mp.mpf):
        return float(obj)
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, default=_jsonable, allow_nan=True)
        fh.write("\n")


def write_grid(path: Path, axis: str, xs: np.ndarray, vals: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "re", "im", "abs2"])
        for x, v in zip(xs, vals):
            v = complex(v)
            w.writerow([repr(float(x)), repr(v.real), repr(v.imag), repr(abs(v) ** 2)])


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer, np.bool_)):
        return str(v.item())
    return "" if v is None else str(v)


def write_table(path: Path, table: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(table)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in zip(*(table[c] for c in cols)):
            w.writerow([_cell(v) for v in row])


def _write_wave_grids(run: RunConfig, wave) -> list[str]:
    out, cfg = run.outputs, run.physical
    lo, hi = out.position_window or (cfg.slit_center - 4 * cfg.slit_width,
                                     cfg.slit_center + 4 * cfg.slit_width)
    xs = np.linspace(lo, hi, out.grid_points)
    ps = np.linspace(-cfg.p_max, cfg.p_max, out.grid_points)
    pos = out.directory / out.position_grid
    mom = out.directory / out.momentum_grid
    write_grid(pos, "x", xs, wave.values(xs))
    write_grid(mom, "p", ps, wave.momentum_values(ps))
    return [str(pos), str(mom)]


# ---------------------------------------------------------------- commands

def cmd_construct(run: RunConfig) -> dict:
    """Solve the configured problem and write the report and grids."""
    t0 = time.perf_counter()
    cfg, cs, s = run.physical, run.constraints, run.solver
    if run.quadratic:
        qp = solve_quadratic(QuadraticProblem(cs, run.quadratic, run.quadratic_targets), cfg,
                             s.tol, start_digits=s.start_digits, max_digits=s.max_digits)
        outputs = {"norm_sq": qp.norm_sq, "residual": qp.residual, "iterations": qp.iterations}
        doc = {"command": "construct", "config": run.echo, "solution": qp.as_dict(),
               "outputs": outputs}
        grids = _write_quadratic_grids(run, qp)
    else:
        sol = construct(cfg, cs, s.tol, s.start_digits, s.max_digits)
        wave = WaveField.from_solution(sol)
        outputs = dict(sol.summary())
        outputs.pop("lambdas")
        try:
            stats = momentum_stats(project_slit(wave))
        except SuperoscError as exc:
            outputs["slit_stats_error"] = exc.kind
        else:
            outputs.update(p_mean=stats.p_mean, p_std=stats.p_std, stats_method=stats.method,
                           edge_ratio=stats.edge_ratio)
        doc = {"command": "construct", "config": run.echo, "solution": sol.summary(),
               "outputs": outputs}
        grids = _write_wave_grids(run, wave)
    doc["files"] = grids
    doc["timing"] = {"seconds": time.perf_counter() - t0}
    write_json(run.outputs.directory / run.outputs.report, doc)
    return doc


def _write_quadratic_grids(run: RunConfig, qp: QuadraticProblem) -> list[str]:
    out, cfg = run.outputs, run.physical
    ps = np.linspace(-cfg.p_max, cfg.p_max, out.grid_points)
    mom = out.directory / out.momentum_grid
    write_grid(mom, "p", ps, qp.momentum_values(cfg, ps))
    return [str(mom)]


def cmd_experiment(name: str, run: RunConfig) -> dict:
    """Dispatch to the experiment driver and write JSON plus CSV files."""
    cfg, s, p = run.physical, run.solver, run.experiment
    if name == "amp-match":
        result = run_amplitude_matching(cfg, p["pbar"], p["n"], s)
    elif name == "deriv-match":
        result = run_derivative_matching(cfg, p["pbar"], p["n"], s)
    elif name == "cost-sweep":
        result = run_cost_sweep(cfg, p["node_spacing"], p["n_range"], p["values_mode"], p["pbar"],
                                s, p["variations"])
    elif name == "extreme":
        result = run_extreme(cfg, p["nodes"], s)
    elif name == "convergence":
        result = run_convergence(cfg, p["pbar"], p["n_list"], s)
    else:
        raise ConfigError("experiment", f"unknown experiment {name!r}")
    doc = {"command": "experiment", "config": run.echo, **result.as_dict()}
    out = run.outputs
    files = []
    for tname, table in getattr(result, "tables", {}).items():
        path = out.directory / f"{tname}.csv"
        write_table(path, table)
        files.append(str(path))
    if hasattr(result, "points"):
        rows = [{k: v for k, v in pt.items() if not isinstance(v, (list, dict))} for pt in result.points]
        keys = sorted({k for r in rows for k in r}, key=lambda k: (k != "N", k))
        path = out.directory / "points.csv"
        write_table(path, {k: [r.get(k, "") for r in rows] for k in keys})
        files.append(str(path))
    wave = getattr(result, "artifacts", {}).get("wave")
    if wave is not None:
        files += _write_wave_grids(run, wave)
    doc["files"] = files
    write_json(out.directory / out.report, doc)
    return doc


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="superosc",
                                     description="Superoscillatory wave functions from linear constraints.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required):
        p.add_argument("--config", required=config_required, help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides outputs.dir)")
        p.add_argument("--digits", type=int, help="starting precision in decimal digits")
        p.add_argument("--tol", type=float, help="relative residual tolerance")

    common(sub.add_parser("construct", help="solve one constraint problem"), True)
    exp = sub.add_parser("experiment", help="run a reproduction experiment")
    exp.add_argument("name", choices=EXPERIMENTS)
    common(exp, False)
    return parser


def _read_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    experiment = args.name if args.command == "experiment" else None
    try:
        data = _read_config(args.config)
        run = load_config(data, experiment=experiment, out_dir=args.out,
                          digits=args.digits, tol=args.tol)
    except ConfigError as exc:
        print(f"superosc: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        if experiment is None:
            doc = cmd_construct(run)
        else:
            doc = cmd_experiment(experiment, run)
    except SuperoscError as exc:
        print(f"superosc: {exc.kind}: {exc}", file=sys.stderr)
        return 3
    summary = doc.get("outputs") or doc.get("trend") or {}
    scalars = {k: v for k, v in summary.items() if isinstance(v, (int, float, str)) or v is None}
    print(json.dumps(scalars, default=_jsonable))
    return 0


if __name__ == "__main__":
    sys.exit(main())
