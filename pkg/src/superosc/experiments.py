"""End-to-end drivers: template matching, cost sweeps, extreme waves, convergence.

Every driver returns a plain report object whose ``inputs`` echo the full
configuration, so any number in ``outputs`` can be regenerated from the
report alone.  Wall-clock times are kept in ``timing`` and never mixed into
``outputs``, which must be identical across repeated runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import mpmath as mp
import numpy as np

from .constraints import ConstraintSet, PhysicalConfig
from .errors import SuperoscError
from .quadrature import integrate
from .solver import (
    DEFAULT_DIGITS,
    DEFAULT_MAX_DIGITS,
    DEFAULT_TOL,
    Solution,
    assemble_gram,
    construct,
    extreme_coefficients,
    solve,
    successive_constraint_value,
)
from .wavefield import (
    IdealTemplate,
    WaveField,
    _position_moments,
    ideal_template,
    momentum_norm_squared,
    momentum_stats,
    project_slit,
    zero_crossing_positions,
)

__all__ = [
    "SolverSettings",
    "ExperimentReport",
    "SweepResult",
    "equidistant_nodes",
    "centred_nodes",
    "count_peaks",
    "run_amplitude_matching",
    "run_derivative_matching",
    "run_cost_sweep",
    "run_extreme",
    "run_convergence",
]


@dataclass(frozen=True)
class SolverSettings:
    tol: float = DEFAULT_TOL
    start_digits: int = DEFAULT_DIGITS
    max_digits: int = DEFAULT_MAX_DIGITS


@dataclass
class ExperimentReport:
    experiment: str
    inputs: dict
    outputs: dict
    tables: dict = field(default_factory=dict)
    status: str = "ok"
    error: str | None = None
    timing: dict = field(default_factory=dict)
    # live objects for grid export; never serialized
    artifacts: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "status": self.status,
            "error": self.error,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "tables": self.tables,
            "timing": self.timing,
        }


@dataclass
class SweepResult:
    experiment: str
    variable: str
    inputs: dict
    points: list
    trend: dict
    timing: dict = field(default_factory=dict)

    @property
    def outputs(self) -> dict:
        return self.trend

    def as_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "variable": self.variable,
            "inputs": self.inputs,
            "points": self.points,
            "trend": self.trend,
            "timing": self.timing,
        }


def equidistant_nodes(cfg: PhysicalConfig, n: int, digits: int = DEFAULT_DIGITS) -> list:
    """n points from slit edge to slit edge inclusive."""
    if n < 2:
        raise ValueError("edge-to-edge placement needs at least two nodes")
    with mp.workdps(digits + 10):
        lo = mp.mpf(cfg.slit_center) - mp.mpf(cfg.slit_half_width)
        width = 2 * mp.mpf(cfg.slit_half_width)
        return [lo + k * width / (n - 1) for k in range(n)]


def centred_nodes(cfg: PhysicalConfig, n: int, spacing: float, digits: int = DEFAULT_DIGITS) -> list:
    """n points with fixed spacing, symmetric about the slit centre."""
    with mp.workdps(digits + 10):
        c = mp.mpf(cfg.slit_center)
        h = mp.mpf(spacing)
        return [c + (k - mp.mpf(n - 1) / 2) * h for k in range(n)]


def _snap(values: Sequence, scale, digits: int) -> list:
    """Replace values that are zero to working precision by exact zeros."""
    with mp.workdps(digits):
        floor = abs(scale) * mp.mpf(10) ** (-(digits - 4))
        return [mp.mpc(0) if abs(v) <= floor else mp.mpc(v) for v in values]


def _template_points(tmpl: IdealTemplate, nodes: Sequence, digits: int) -> list:
    with mp.workdps(digits + 10):
        vals = [tmpl.derivative_at(x) for x in nodes]
        scale = mp.sqrt(1 / mp.mpf(tmpl.cfg.slit_half_width))
    return _snap(vals, scale, digits)


def count_peaks(values: np.ndarray, rel_floor: float = 1e-6) -> int:
    """Strict interior local maxima above ``rel_floor`` times the global peak."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return 0
    top = np.max(v)
    inner = v[1:-1]
    mask = (inner > v[:-2]) & (inner >= v[2:]) & (inner > rel_floor * top)
    return int(np.count_nonzero(mask))


def _settings_dict(settings: SolverSettings) -> dict:
    return asdict(settings)


def _solve_report_fields(sol: Solution) -> dict:
    return {
        "norm_sq": float(sol.norm_sq),
        "residual": sol.residual,
        "condition_estimate": sol.condition_estimate,
        "precision_digits_used": sol.precision_digits_used,
    }


def _wavelength(positions: np.ndarray) -> float | None:
    if len(positions) < 2:
        return None
    return float(2 * np.mean(np.diff(positions)))


def _template_report(
    experiment: str,
    cfg: PhysicalConfig,
    pbar: float,
    cs: ConstraintSet,
    settings: SolverSettings,
    inputs: dict,
    grid_points: int,
) -> ExperimentReport:
    t0 = time.perf_counter()
    tmpl = ideal_template(cfg, pbar)
    if all(v == 0 for v in cs.values):
        return ExperimentReport(
            experiment, inputs,
            {"trivial": True, "norm_sq": 0.0, "p_mean": None, "p_std": None},
            status="trivial",
            error="all targets are zero; the minimum-norm solution is psi = 0",
        )
    sol = solve(assemble_gram(cfg, cs, settings.start_digits), cs.values,
                settings.tol, settings.max_digits)
    wave = WaveField.from_solution(sol)
    emerging = project_slit(wave)
    stats = momentum_stats(emerging)
    lo, hi = cfg.slit
    xs = np.linspace(lo, hi, 20001)
    psi_s = emerging.psi_fit(xs)
    phi_s = tmpl.values(xs)
    err2 = np.abs(psi_s - phi_s) ** 2
    l2 = math.sqrt(float(np.real(integrate(
        lambda x: np.abs(emerging.psi_fit(x) - tmpl.values(x)) ** 2, lo, hi, rtol=1e-10))))
    raw_fit_d = emerging.dpsi_fit(xs) / emerging.renorm_factor
    im_roots = zero_crossing_positions(wave, "imag", cfg.slit)
    re_roots = zero_crossing_positions(wave, "real", cfg.slit)
    wl = _wavelength(im_roots)
    out = {
        "trivial": False,
        "p_mean": stats.p_mean,
        "p_std": stats.p_std,
        "p_mean_over_p_max": stats.p_mean / cfg.p_max,
        "p_std_over_p_max": stats.p_std / cfg.p_max,
        "stats_method": stats.method,
        "edge_ratio": stats.edge_ratio,
        "spectral_cutoff": None if stats.cutoff is None else float(stats.cutoff),
        "spectral_tail_mass": stats.tail_mass,
        **_solve_report_fields(sol),
        "renorm_factor": emerging.renorm_factor,
        "sup_abs_error": float(np.max(np.sqrt(err2))),
        "sup_sq_error": float(np.max(err2)),
        "l2_error": l2,
        "error_peaks": count_peaks(err2),
        "crossings_real": int(len(re_roots)),
        "crossings_imag": int(len(im_roots)),
        "crossing_bound": int(math.floor(cfg.slit_width * cfg.p_max / (math.pi * cfg.hbar))),
        "imag_wavelength_over_lambda_min": None if wl is None else wl / cfg.lambda_min,
        "max_abs_dpsi_raw": float(np.max(np.abs(raw_fit_d))),
    }
    if stats.method == "spectral":
        # finite part of <p^2> ignoring the edge jump, for comparison
        mean, second = _position_moments(emerging)
        out["p_mean_position_derivative"] = float(mean)
        out["p_std_position_derivative"] = math.sqrt(max(second - mean ** 2, 0.0))
    tx = np.linspace(lo, hi, grid_points)
    psi_raw = wave.values(tx)
    psi_em = emerging.values(tx)
    phi_t = tmpl.values(tx)
    tables = {
        "slit": {
            "x": tx.tolist(),
            "psi_re": psi_raw.real.tolist(),
            "psi_im": psi_raw.imag.tolist(),
            "Psi_re": psi_em.real.tolist(),
            "Psi_im": psi_em.imag.tolist(),
            "Phi_re": phi_t.real.tolist(),
            "Phi_im": phi_t.imag.tolist(),
            "err2": (np.abs(psi_em - phi_t) ** 2).tolist(),
        }
    }
    return ExperimentReport(
        experiment, inputs, out, tables,
        timing={"seconds": time.perf_counter() - t0},
        artifacts={"solution": sol, "wave": wave, "emerging": emerging, "template": tmpl},
    )


def run_amplitude_matching(
    cfg: PhysicalConfig,
    pbar: float,
    n: int,
    settings: SolverSettings = SolverSettings(),
    grid_points: int = 401,
) -> ExperimentReport:
    """Match the ideal template at n equidistant slit points, edges included."""
    if n < 2:
        raise ValueError("amplitude matching needs N >= 2")
    tmpl = ideal_template(cfg, pbar)
    nodes = equidistant_nodes(cfg, n, settings.start_digits)
    cs = ConstraintSet.point_amplitude(nodes, _template_points(tmpl, nodes, settings.start_digits))
    inputs = {"physical": cfg.as_dict(), "pbar": pbar, "N": n,
              "constraints": cs.as_dict(), "solver": _settings_dict(settings)}
    return _template_report("amp-match", cfg, pbar, cs, settings, inputs, grid_points)


def run_derivative_matching(
    cfg: PhysicalConfig,
    pbar: float,
    n: int,
    settings: SolverSettings = SolverSettings(),
    grid_points: int = 401,
) -> ExperimentReport:
    """Match value and first n-1 derivatives of the template at the slit centre."""
    if n < 1:
        raise ValueError("derivative matching needs N >= 1")
    tmpl = ideal_template(cfg, pbar)
    anchor = cfg.slit_center
    digits = settings.start_digits
    with mp.workdps(digits + 10):
        vals = [tmpl.derivative_at(anchor, k) for k in range(n)]
    scale = (abs(pbar) / cfg.hbar + math.pi / cfg.slit_width) ** max(n - 1, 0)
    cs = ConstraintSet.derivative_at_point(anchor, _snap(vals, scale, digits))
    inputs = {"physical": cfg.as_dict(), "pbar": pbar, "N": n,
              "constraints": cs.as_dict(), "solver": _settings_dict(settings)}
    return _template_report("deriv-match", cfg, pbar, cs, settings, inputs, grid_points)


def _quadratic_fit(ts: np.ndarray, ys: np.ndarray) -> dict:
    coef = np.polyfit(ts, ys, 2)
    fit = np.polyval(coef, ts)
    resid = float(np.linalg.norm(fit - ys) / np.linalg.norm(ys))
    vertex = float(-coef[1] / (2 * coef[0])) if coef[0] != 0 else math.inf
    return {"coefficients": [float(c) for c in coef], "relative_residual": resid, "vertex": vertex}


def run_cost_sweep(
    cfg: PhysicalConfig,
    node_spacing: float,
    n_range: Sequence[int],
    values_mode: str = "alternating",
    pbar: float = 2.0,
    settings: SolverSettings = SolverSettings(),
    variations: int = 11,
) -> SweepResult:
    """Norm and conditioning growth with the number of point constraints.

    Nodes sit at fixed spacing around the slit centre.  For the largest
    solved N a further node is added midway between the two central nodes and
    its target is swept through ``variations`` values around the neutral value
    c; the squared norm is fitted with a quadratic in the offset.
    """
    if values_mode not in ("alternating", "template"):
        raise ValueError(f"values_mode must be 'alternating' or 'template', got {values_mode!r}")
    n_range = sorted(int(n) for n in n_range)
    if not n_range or n_range[0] < 1:
        raise ValueError("N range must contain positive integers")
    if (n_range[-1] - 1) * node_spacing > cfg.slit_width * (1 + 1e-12):
        raise ValueError(f"{n_range[-1]} nodes at spacing {node_spacing} do not fit in the slit")
    t0 = time.perf_counter()
    tmpl = ideal_template(cfg, pbar)
    points = []
    per_point = []
    last = None
    for n in n_range:
        tp = time.perf_counter()
        nodes = centred_nodes(cfg, n, node_spacing, settings.start_digits)
        if values_mode == "alternating":
            vals = [(-1) ** k for k in range(1, n + 1)]
        else:
            vals = _template_points(tmpl, nodes, settings.start_digits)
        cs = ConstraintSet.point_amplitude(nodes, vals)
        try:
            sol = construct(cfg, cs, settings.tol, settings.start_digits, settings.max_digits)
        except SuperoscError as exc:
            points.append({"N": n, "status": "failed", "error": exc.kind, "message": str(exc)})
        else:
            points.append({"N": n, "status": "ok", **_solve_report_fields(sol)})
            last = (cs, sol)
        per_point.append(time.perf_counter() - tp)
    ok = [p for p in points if p["status"] == "ok"]
    trend: dict = {"failures": [p["N"] for p in points if p["status"] != "ok"]}
    if len(ok) >= 2:
        ns = np.array([p["N"] for p in ok], dtype=float)
        logs = np.log([p["norm_sq"] for p in ok])
        conds = [p["condition_estimate"] for p in ok]
        trend["log_norm_slope"] = float(np.polyfit(ns, logs, 1)[0])
        trend["log_norm_increasing"] = bool(np.all(np.diff(logs) > 0))
        trend["condition_increasing"] = bool(np.all(np.diff(conds) > 0))
        trend["log_condition_slope"] = float(np.polyfit(ns, np.log(conds), 1)[0])
    if last is not None:
        trend["successive"] = _successive_study(cfg, *last, settings, variations)
    return SweepResult("cost-sweep", "N", {
        "physical": cfg.as_dict(), "node_spacing": node_spacing, "N_range": n_range,
        "values_mode": values_mode, "pbar": pbar, "solver": _settings_dict(settings),
        "variations": variations,
    }, points, trend, timing={"seconds": time.perf_counter() - t0, "per_point": per_point})


def _successive_study(cfg, cs, sol, settings, variations) -> dict:
    n = cs.size
    nodes = cs.nodes
    if n >= 2:
        i = n // 2
        with mp.workdps(settings.start_digits + 10):
            new_node = (mp.mpf(nodes[i - 1]) + mp.mpf(nodes[i])) / 2
    else:
        new_node = mp.mpf(nodes[0]) + mp.mpf(cfg.slit_half_width) / 2
    ext, idx = cs.extended(new_node, 0)
    digits = sol.precision_digits_used
    gram_ext = assemble_gram(cfg, ext, digits)
    c = successive_constraint_value(gram_ext, sol, idx)
    try:
        at_c = solve(gram_ext, _with(ext.values, idx, c), settings.tol, settings.max_digits)
    except SuperoscError as exc:
        return {"status": "failed", "error": exc.kind}
    with mp.workdps(at_c.precision_digits_used):
        lam_norm = mp.sqrt(mp.fsum(abs(v) ** 2 for v in at_c.lambdas))
        new_lambda_ratio = float(abs(at_c.lambdas[idx]) / lam_norm)
    # the extended solution at a_{N+1} = c must reproduce psi_N
    span = np.linspace(cfg.slit_center - cfg.slit_width, cfg.slit_center + cfg.slit_width, 201)
    before = WaveField.from_solution(sol).values(span)
    after = WaveField.from_solution(at_c).values(span)
    sup_rel = float(np.max(np.abs(after - before)) / np.max(np.abs(before)))
    delta = max(1.0, abs(complex(c)))
    ts = np.linspace(-1.0, 1.0, variations)
    norms = []
    for t in ts:
        with mp.workdps(digits):
            target = c + mp.mpf(float(t)) * delta
        s = solve(gram_ext, _with(ext.values, idx, target), settings.tol, settings.max_digits)
        norms.append(float(s.norm_sq))
    fit = _quadratic_fit(ts, np.array(norms))
    return {
        "status": "ok",
        "new_node": float(new_node),
        "c": [float(mp.re(c)), float(mp.im(c))],
        "new_lambda_ratio": new_lambda_ratio,
        "sup_psi_difference_rel": sup_rel,
        "offset_scale": delta,
        "norms": norms,
        "fit": fit,
        "vertex_offset": fit["vertex"] * delta,
        "leading_positive": fit["coefficients"][0] > 0,
    }


def _with(values: Sequence, idx: int, v) -> list:
    out = list(values)
    out[idx] = v
    return out


def run_extreme(
    cfg: PhysicalConfig,
    nodes: Sequence[float],
    settings: SolverSettings = SolverSettings(),
    profile_points: int = 201,
) -> ExperimentReport:
    """Minimum-norm unit combination of plane waves e^{-i x_r p / hbar}."""
    if len(nodes) < 2:
        raise ValueError("the extreme construction needs at least two nodes")
    t0 = time.perf_counter()
    cs = ConstraintSet.point_amplitude(nodes, [1] * len(nodes))
    gram = assemble_gram(cfg, cs, settings.start_digits)
    pair = extreme_coefficients(gram)
    wave = WaveField.from_eigenpair(gram, pair)
    quad = momentum_norm_squared(wave)
    nu = float(pair.eigenvalue)
    hull = (float(nodes[0]), float(nodes[-1]))
    crossings_re = int(len(zero_crossing_positions(wave, "real", hull)))
    crossings_im = int(len(zero_crossing_positions(wave, "imag", hull)))
    bound = int(math.floor((hull[1] - hull[0]) * cfg.p_max / (math.pi * cfg.hbar)))
    ps = np.linspace(-cfg.p_max, cfg.p_max, profile_points)
    amp = np.abs(wave.momentum_values(ps))
    edge = np.abs(ps) >= 0.9 * cfg.p_max
    centre = np.abs(ps) <= 0.5 * cfg.p_max
    out = {
        "nu_min": nu,
        "next_eigenvalue": None if pair.next_eigenvalue is None else float(pair.next_eigenvalue),
        "degenerate": pair.degenerate,
        "eigen_residual": pair.residual,
        "iterations": pair.iterations,
        "norm_sq_quadrature": quad,
        "norm_identity_rel_error": abs(quad - nu) / nu,
        "crossings_real": crossings_re,
        "crossings_imag": crossings_im,
        "crossing_bound": bound,
        "edge_to_centre_amplitude": float(np.mean(amp[edge]) / np.mean(amp[centre])),
        "q": [[float(mp.re(v)), float(mp.im(v))] for v in pair.vector],
    }
    inputs = {"physical": cfg.as_dict(), "nodes": [float(x) for x in nodes],
              "solver": _settings_dict(settings)}
    tables = {"momentum_profile": {"p": ps.tolist(), "abs_psi": amp.tolist()}}
    return ExperimentReport("extreme", inputs, out, tables,
                            timing={"seconds": time.perf_counter() - t0},
                            artifacts={"wave": wave, "gram": gram, "pair": pair})


def run_convergence(
    cfg: PhysicalConfig,
    pbar: float,
    n_list: Sequence[int],
    settings: SolverSettings = SolverSettings(),
) -> SweepResult:
    """Template-matching error and derivative size as N grows."""
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or min(n_list) < 3:
        raise ValueError("N list must be increasing with every N >= 3")
    t0 = time.perf_counter()
    points = []
    per_point = []
    for n in n_list:
        tp = time.perf_counter()
        try:
            rep = run_amplitude_matching(cfg, pbar, n, settings, grid_points=3)
        except SuperoscError as exc:
            points.append({"N": n, "status": "failed", "error": exc.kind})
            per_point.append(time.perf_counter() - tp)
            continue
        per_point.append(time.perf_counter() - tp)
        o = rep.outputs
        points.append({
            "N": n, "status": "ok",
            "sup_abs_error": o["sup_abs_error"], "l2_error": o["l2_error"],
            "error_peaks": o["error_peaks"], "max_abs_dpsi_raw": o["max_abs_dpsi_raw"],
            "p_mean": o["p_mean"], "p_std": o["p_std"], "norm_sq": o["norm_sq"],
            "precision_digits_used": o["precision_digits_used"],
        })
    ok = [p for p in points if p["status"] == "ok"]
    sup = [p["sup_abs_error"] for p in ok]
    l2 = [p["l2_error"] for p in ok]
    trend = {
        "sup_error_decreasing": bool(np.all(np.diff(sup) < 0)),
        "l2_error_decreasing": bool(np.all(np.diff(l2) < 0)),
        "max_abs_dpsi_raw": [p["max_abs_dpsi_raw"] for p in ok],
        "failures": [p["N"] for p in points if p["status"] != "ok"],
    }
    return SweepResult("convergence", "N", {
        "physical": cfg.as_dict(), "pbar": pbar, "N_list": n_list,
        "solver": _settings_dict(settings),
    }, points, trend, timing={"seconds": time.perf_counter() - t0, "per_point": per_point})
