"""Command line interface: ``fopc run | sweep | bounds``.

Experiments are described by a JSON file; ``--set key=value`` overrides
individual entries (dotted keys reach into nested sections, values are
parsed as JSON when possible).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .bounds import certify
from .harness import (
    STRATEGIES,
    allocate_budget,
    asymptotic_error,
    budget_configs,
    default_k_bar,
    fit_loglog_slope,
    fmt,
    write_run_csv,
)
from .oracle import reference_trajectory
from .problem import SamplingGrid, SmoothnessConstants, WholeSpace
from .scenarios import (
    DerScenario,
    ScalarScenario,
    VectorScenario,
    build_der,
    build_scalar,
    build_vector,
    generate_load_trace,
    load_trace_csv,
)
from .solvers import DivergenceError, SolverConfig, run_tracking

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


class ConfigError(ValueError):
    pass


SCENARIO_KEYS = {
    "scalar": {"omega", "kappa", "mu"},
    "vector": {"n", "omega", "mu", "lower", "upper", "rng_seed"},
    "der": {
        "N", "tracking_weight", "p_cost", "q_cost", "p_bounds", "q_bounds", "target_L",
        "trace_csv", "base_kW", "daily_amplitude_kW", "noise_kW", "ar_coeff",
        "smoothing_window", "sensitivity_seed",
    },
}

SOLVER_KEYS = {f.name for f in fields(SolverConfig)}

DEFAULT_SOLVER = {"alpha": 0.56, "beta": 0.56, "P": 1, "C": 3, "gamma": 1.0}


@dataclass
class ExperimentConfig:
    """Parsed experiment description.

    Fields and defaults:

    scenario (required)  "scalar", "vector" or "der"
    scenario_params      scenario-specific parameters, default {}
    h                    sampling period, default 0.1
    horizon              simulated time span; default 40 drift periods (scalar),
                         one drift period (vector) or 600 samples (der)
    k_max                number of steps, default None
    t0                   initial time, default 0
    solver               SolverConfig fields, default alpha=beta=0.56, P=1, C=3
    constrained          force the constrained / unconstrained driver, default auto
    x0                   initial point (number or list), default zeros
    oracle_tol           oracle tolerance, default relative 1e-11
    k_bar                burn-in index, default max(100, k_max / 2)
    tau                  local rate for certificates, default None
    seed                 seed for random scenario draws, default 0
    h_list               sampling periods for ``sweep``, default []
    variants             name -> solver overrides for ``sweep``, default
                         {"default": {}}
    """

    scenario: str
    scenario_params: dict = field(default_factory=dict)
    h: float = 0.1
    horizon: Optional[float] = None
    k_max: Optional[int] = None
    t0: float = 0.0
    solver: dict = field(default_factory=dict)
    constrained: Optional[bool] = None
    x0: object = None
    oracle_tol: Optional[float] = None
    k_bar: Optional[int] = None
    tau: Optional[float] = None
    seed: int = 0
    h_list: list = field(default_factory=list)
    variants: dict = field(default_factory=lambda: {"default": {}})


CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def _parse_P(value, key):
    if isinstance(value, str) and value.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return value
    raise ConfigError(f"{key}: expected an integer or 'inf', got {value!r}")


def parse_config(data):
    """Validate a config mapping; unknown keys raise ConfigError naming them."""
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be a JSON object")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"{unknown[0]}: unknown config key")
    if "scenario" not in data:
        raise ConfigError("scenario: missing required key")
    cfg = ExperimentConfig(**data)
    if cfg.scenario not in SCENARIO_KEYS:
        raise ConfigError(f"scenario: must be one of {sorted(SCENARIO_KEYS)}, got {cfg.scenario!r}")
    if not isinstance(cfg.scenario_params, dict):
        raise ConfigError("scenario_params: must be an object")
    bad = sorted(set(cfg.scenario_params) - SCENARIO_KEYS[cfg.scenario])
    if bad:
        raise ConfigError(f"scenario_params.{bad[0]}: unknown key for scenario {cfg.scenario}")
    if not isinstance(cfg.solver, dict):
        raise ConfigError("solver: must be an object")
    bad = sorted(set(cfg.solver) - SOLVER_KEYS)
    if bad:
        raise ConfigError(f"solver.{bad[0]}: unknown solver key")
    if not isinstance(cfg.variants, dict) or not cfg.variants:
        raise ConfigError("variants: must be a non-empty object")
    for name, over in cfg.variants.items():
        if not isinstance(over, dict):
            raise ConfigError(f"variants.{name}: must be an object")
        bad = sorted(set(over) - SOLVER_KEYS)
        if bad:
            raise ConfigError(f"variants.{name}.{bad[0]}: unknown solver key")
    for key in ("h", "t0"):
        if not isinstance(getattr(cfg, key), (int, float)):
            raise ConfigError(f"{key}: must be a number")
    if not cfg.h > 0:
        raise ConfigError("h: must be positive")
    if cfg.k_max is not None and (not isinstance(cfg.k_max, int) or cfg.k_max < 1):
        raise ConfigError("k_max: must be a positive integer")
    if cfg.horizon is not None and not (isinstance(cfg.horizon, (int, float)) and cfg.horizon > 0):
        raise ConfigError("horizon: must be a positive number")
    if not isinstance(cfg.h_list, list):
        raise ConfigError("h_list: must be a list")
    return cfg


def solver_config(base, overrides=None, prefix="solver"):
    merged = dict(DEFAULT_SOLVER)
    merged.update(base)
    merged.update(overrides or {})
    if "P" in merged:
        merged["P"] = _parse_P(merged["P"], f"{prefix}.P")
    try:
        return SolverConfig(**merged)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{prefix}: {err}") from None


def _set_override(data, assignment):
    if "=" not in assignment:
        raise ConfigError(f"{assignment}: override must look like key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: cannot descend into a non-object")
    node[parts[-1]] = value


def load_config(path, overrides=(), seed=None):
    data = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as err:
            raise ConfigError(f"config: cannot read {path}: {err}") from None
        except json.JSONDecodeError as err:
            raise ConfigError(f"config: invalid JSON: {err}") from None
    for item in overrides:
        _set_override(data, item)
    if seed is not None:
        data["seed"] = seed
    return parse_config(data)


# -- scenario construction ----------------------------------------------------------


def _default_horizon(cfg, h):
    if cfg.scenario == "scalar":
        omega = cfg.scenario_params.get("omega", ScalarScenario.omega)
        return 40 * 2 * math.pi / abs(omega)
    if cfg.scenario == "vector":
        omega = cfg.scenario_params.get("omega", VectorScenario.omega)
        return 2 * math.pi / abs(omega)
    return 600 * h


def make_grid(cfg, h=None):
    h = cfg.h if h is None else h
    if cfg.k_max is not None and h == cfg.h:
        return SamplingGrid(h=h, k_max=cfg.k_max, t0=cfg.t0)
    horizon = cfg.horizon if cfg.horizon is not None else _default_horizon(cfg, h)
    return SamplingGrid.covering(h, horizon, cfg.t0)


def build_problem(cfg, grid):
    sp = dict(cfg.scenario_params)
    try:
        if cfg.scenario == "scalar":
            return build_scalar(ScalarScenario(**sp))
        if cfg.scenario == "vector":
            sp.setdefault("rng_seed", cfg.seed)
            return build_vector(VectorScenario(**sp))
        trace_csv = sp.pop("trace_csv", None)
        gen = {k: sp.pop(k) for k in ("base_kW", "daily_amplitude_kW", "noise_kW", "ar_coeff",
                                      "smoothing_window") if k in sp}
        sens_seed = sp.pop("sensitivity_seed", cfg.seed)
        for k in ("p_bounds", "q_bounds"):
            if k in sp:
                sp[k] = tuple(sp[k])
        if trace_csv is not None:
            trace = load_trace_csv(trace_csv)
            if abs(trace.h - grid.h) > 1e-9 * grid.h:
                raise ConfigError(f"h: trace period {trace.h} differs from h={grid.h}")
        else:
            trace = generate_load_trace(cfg.seed, grid.k_max + 1, h=grid.h, **gen)
        return build_der(DerScenario(trace=trace, seed=sens_seed, **sp))
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        raise ConfigError(f"scenario_params: {err}") from None


def initial_point(cfg, dim):
    if cfg.x0 is None:
        return np.zeros(dim)
    x0 = np.asarray(cfg.x0, dtype=float).reshape(-1)
    if x0.size == 1 and dim > 1:
        x0 = np.full(dim, x0[0])
    if x0.size != dim:
        raise ConfigError(f"x0: expected {dim} entries, got {x0.size}")
    return x0


def _constrained(cfg, feasible_set):
    if cfg.constrained is not None:
        return bool(cfg.constrained)
    return not isinstance(feasible_set, WholeSpace)


# -- commands ---------------------------------------------------------------------------


def cmd_run(cfg, out_dir):
    grid = make_grid(cfg)
    problem, fset, consts = build_problem(cfg, grid)
    scfg = solver_config(cfg.solver)
    x0 = initial_point(cfg, problem.dim)
    constrained = _constrained(cfg, fset)
    ref = reference_trajectory(problem, fset, grid, x0, tol=cfg.oracle_tol)
    gap = float(np.linalg.norm(fset.project(x0) - ref[0]))
    report = certify(consts, scfg.alpha, scfg.beta, scfg.P, scfg.C, grid.h,
                     gamma=None if constrained else scfg.gamma, tau=cfg.tau, initial_gap=gap)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            run = run_tracking(problem, fset, grid, scfg, x0, ref, constrained)
    except DivergenceError as err:
        print(f"diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    os.makedirs(out_dir, exist_ok=True)
    write_run_csv(run, os.path.join(out_dir, "run.csv"), report)
    kb = cfg.k_bar if cfg.k_bar is not None else default_k_bar(grid.k_max)
    print(f"asymptotic_error {fmt(asymptotic_error(run, kb))}")
    print(f"regime {report.regime.value}")
    return EXIT_OK


SWEEP_HEADER = ("variant", "h", "asymptotic_error", "slope_contrib", "P", "C", "certified")


def _parse_budget(text):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ConfigError("budget: expected r1,r2,t_C,t_P,t_bar") from None
    if len(vals) != 5:
        raise ConfigError("budget: expected r1,r2,t_C,t_P,t_bar")
    return vals


def cmd_sweep(cfg, out_dir, budget=None):
    h_list = sorted(float(h) for h in cfg.h_list)
    if not h_list:
        raise ConfigError("h_list: must contain at least one sampling period")
    base = solver_config(cfg.solver)
    rows = []
    for h in h_list:
        grid = make_grid(cfg, h)
        problem, fset, consts = build_problem(cfg, grid)
        x0 = initial_point(cfg, problem.dim)
        constrained = _constrained(cfg, fset)
        ref = reference_trajectory(problem, fset, grid, x0, tol=cfg.oracle_tol)
        gap = float(np.linalg.norm(fset.project(x0) - ref[0]))
        kb = cfg.k_bar if cfg.k_bar is not None else default_k_bar(grid.k_max)
        if budget is not None:
            plan = allocate_budget(h, *budget)
            variants = budget_configs(plan, base.alpha, base.beta)
        else:
            variants = {name: solver_config(cfg.solver, over, f"variants.{name}")
                        for name, over in cfg.variants.items()}
        for name, scfg in variants.items():
            if scfg is None:
                rows.append([name, h, math.nan, 0, plan.C, False])
                continue
            rep = certify(consts, scfg.alpha, scfg.beta, scfg.P, scfg.C, h,
                          gamma=None if constrained else scfg.gamma, tau=cfg.tau, initial_gap=gap)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", RuntimeWarning)
                    run = run_tracking(problem, fset, grid, scfg, x0, ref, constrained)
                err = asymptotic_error(run, kb)
            except DivergenceError:
                err = math.inf
            rows.append([name, h, err, scfg.P, scfg.C, rep.certified])
    order = list(STRATEGIES) if budget is not None else list(cfg.variants)
    rows.sort(key=lambda r: (order.index(r[0]), r[1]))
    os.makedirs(out_dir, exist_ok=True)
    slopes = {}
    contrib = {}
    for name in order:
        sel = [r for r in rows if r[0] == name]
        slope, _, resid = fit_loglog_slope([r[1] for r in sel], [r[2] for r in sel])
        slopes[name] = slope
        for r, res in zip(sel, resid):
            contrib[(name, r[1])] = res
    with open(os.path.join(out_dir, "sweep.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for name, h, err, P, C, cert in rows:
            res = contrib[(name, h)]
            w.writerow([name, fmt(h), "" if math.isnan(err) else fmt(err),
                        "" if math.isnan(res) else fmt(res),
                        "inf" if P == math.inf else int(P), int(C), "true" if cert else "false"])
    for name in order:
        print(f"slope {name} {fmt(slopes[name]) if not math.isnan(slopes[name]) else 'nan'}")
    return EXIT_OK


def cmd_bounds(args):
    C1 = args.C1
    C2 = args.C2 if args.C2 is not None else (0.0 if C1 is not None else None)
    C3 = args.C3 if args.C3 is not None else (0.0 if C1 is not None else None)
    try:
        consts = SmoothnessConstants(m=args.m, L=args.L, C0=args.C0, C1=C1, C2=C2, C3=C3)
        P = _parse_P(args.P, "P")
        report = certify(consts, args.alpha, args.beta, P, args.C, args.h,
                         gamma=args.gamma, tau=args.tau, initial_gap=args.gap)
    except (ValueError, ConfigError) as err:
        raise ConfigError(str(err)) from None
    print(report.to_json(indent=2))
    return EXIT_OK


def _number_or_inf(text):
    return math.inf if text.lower() in ("inf", "infinity") else float(text)


class _Parser(argparse.ArgumentParser):
    # usage errors are config errors (exit 1); exit 2 is reserved for divergence
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(prog="fopc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def shared(p):
        p.add_argument("--config", help="JSON experiment file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="seed for random draws")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config entry, e.g. solver.P=3")

    p_run = sub.add_parser("run", help="run one tracking experiment, write run.csv")
    shared(p_run)
    p_sweep = sub.add_parser("sweep", help="sweep sampling periods, write sweep.csv")
    shared(p_sweep)
    p_sweep.add_argument("--h", type=float, nargs="*", help="sampling periods (overrides h_list)")
    p_sweep.add_argument("--budget", help="r1,r2,t_C,t_P,t_bar timing model (same time unit as h)")

    p_b = sub.add_parser("bounds", help="print convergence certificates as JSON")
    shared(p_b)
    p_b.add_argument("--m", type=float, required=True)
    p_b.add_argument("--L", type=float, required=True)
    p_b.add_argument("--alpha", type=float, required=True)
    p_b.add_argument("--beta", type=float, required=True)
    p_b.add_argument("--P", type=_number_or_inf, default=1)
    p_b.add_argument("--C", type=int, default=1)
    p_b.add_argument("--gamma", type=float, help="unconstrained dial; omit for the constrained analysis")
    p_b.add_argument("--h", type=float, default=0.0)
    p_b.add_argument("--C0", type=float, default=0.0)
    p_b.add_argument("--C1", type=float)
    p_b.add_argument("--C2", type=float)
    p_b.add_argument("--C3", type=float)
    p_b.add_argument("--tau", type=float)
    p_b.add_argument("--gap", type=float, help="initial optimality gap")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "bounds":
            return cmd_bounds(args)
        cfg = load_config(args.config, args.set, args.seed)
        if args.command == "run":
            return cmd_run(cfg, args.out)
        if args.h is not None:
            cfg.h_list = list(args.h)
        budget = _parse_budget(args.budget) if args.budget else None
        return cmd_sweep(cfg, args.out, budget)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
