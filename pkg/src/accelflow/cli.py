"""Command line entry points: run, compare, verify.

Exit codes: 0 success, 1 failed verification checks, 2 invalid
configuration, 3 runtime failure (divergence or an infeasible-rate
abort). Artifacts land in the config's output directory: trajectory or
iterate CSV, summary JSON, and an echo of the resolved config.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import Any, Optional

import numpy as np

from .config import (
    ConfigError,
    DiscreteMethodConfig,
    FlowMethodConfig,
    RunConfig,
    flow_integrator,
    flow_mode,
    load_config,
)
from .control import InfeasibleStateError
from .discrete import (
    IterateSequence,
    accelerated_newton_iterate,
    cg_iterate,
    constant,
    exact_line_search_alpha,
    fletcher_reeves_beta,
    heavy_ball_iterate,
    nesterov_one_step_iterate,
    nesterov_two_step_iterate,
)
from .export import (
    discrete_summary,
    flow_summary,
    read_trajectory_csv,
    trajectory_from_arrays,
    write_compare_csv,
    write_iterates_csv,
    write_summary_json,
    write_trajectory_csv,
)
from .flow import TrajectoryRecord, initial_state, integrate
from .metric import MetricKind, MetricSpec
from .objective import ProblemInstance
from .verify import VerificationReport, check_stationarity, run_checks

EXIT_OK = 0
EXIT_CHECKS = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _run_flow(config: RunConfig, problem: ProblemInstance) -> TrajectoryRecord:
    method = config.method
    spec = method.build_controller()
    v0 = None if method.v0 is None else np.array(method.v0, dtype=float)
    state0 = initial_state(problem.oracle, problem.x0, v0)
    return integrate(spec, problem.oracle, state0, method.h, method.t_max,
                     method=flow_integrator(method), mode=flow_mode(method),
                     stop=method.stopping_rule(),
                     record_stride=config.output.stride)


def _run_discrete(config: RunConfig,
                  problem: ProblemInstance) -> IterateSequence:
    m = config.method
    oracle, x0 = problem.oracle, problem.x0
    if m.name == "heavy_ball":
        return heavy_ball_iterate(oracle, x0, m.max_iters, constant(m.alpha),
                                  constant(m.beta), tol_g=m.tol_g)
    if m.name == "nesterov1":
        gamma = None if m.gamma is None else constant(m.gamma)
        return nesterov_one_step_iterate(oracle, x0, m.max_iters,
                                         constant(m.alpha), constant(m.beta),
                                         gamma, tol_g=m.tol_g)
    if m.name == "nesterov2":
        return nesterov_two_step_iterate(oracle, x0, m.max_iters,
                                         constant(m.alpha), constant(m.beta),
                                         tol_g=m.tol_g)
    if m.name == "cg":
        if m.alpha == "exact_line_search":
            alpha_rule = exact_line_search_alpha
        else:
            step = float(m.alpha)
            alpha_rule = lambda o, k, x, g, v: step
        if m.beta_cg == "fletcher_reeves":
            beta_rule = fletcher_reeves_beta
        else:
            coeff = float(m.beta_cg)
            beta_rule = lambda o, k, g, gp: coeff
        return cg_iterate(oracle, x0, m.max_iters, alpha_rule, beta_rule,
                          tol_g=m.tol_g)
    kind = MetricKind.HESSIAN if m.name == "accel_newton" \
        else MetricKind.QUASI_NEWTON
    metric = MetricSpec(kind, eig_floor=m.eig_floor)
    return accelerated_newton_iterate(oracle, metric, x0,
                                      (m.gamma_a, m.gamma_b), m.h,
                                      m.max_iters, tol_g=m.tol_g)


def _verify_flow_record(config: RunConfig, problem: ProblemInstance,
                        record: TrajectoryRecord) -> Optional[VerificationReport]:
    v = config.verify
    if not v.checks:
        return None
    return run_checks(record, problem.oracle, config.method.clf_params(),
                      v.checks, dissipation_mode=v.mode(), eta=v.eta,
                      tol=v.effective_tol(), adjoint_coeff=v.adjoint_coeff,
                      singular_tol=v.singular_tol)


def _check_discrete_verify(config: RunConfig) -> None:
    extra = [c for c in config.verify.checks if c != "stationarity"]
    if extra:
        raise ConfigError(f"verify.checks: only 'stationarity' applies to "
                          f"discrete methods, got {extra}")


def _emit(config: RunConfig, payload: dict[str, Any],
          report: Optional[VerificationReport]) -> None:
    out_dir = config.output.out_dir
    if report is not None:
        payload["checks"] = report.to_dict()
    write_summary_json(payload, os.path.join(out_dir, "summary.json"))
    with open(os.path.join(out_dir, "config_echo.yaml"), "w") as fh:
        fh.write(config.to_yaml())
    print(f"wrote {os.path.join(out_dir, 'summary.json')}")
    if report is not None:
        for line in report.lines():
            print(line)


def _execute_run(config: RunConfig) -> tuple[int, dict[str, Any]]:
    """Run one config to artifacts; returns (exit code, summary payload)."""
    problem = config.problem.build()
    out_dir = config.output.out_dir
    label = config.run_label()

    if isinstance(config.method, FlowMethodConfig):
        record = _run_flow(config, problem)
        csv_path = os.path.join(out_dir, "trajectory.csv")
        write_trajectory_csv(record, csv_path)
        print(f"wrote {csv_path}")
        payload = flow_summary(record, problem.oracle, label)
        report = _verify_flow_record(config, problem, record)
        _emit(config, payload, report)
        if record.diverged:
            print("run diverged", file=sys.stderr)
            return EXIT_RUNTIME, payload
        if report is not None and not report.ok:
            return EXIT_CHECKS, payload
        return EXIT_OK, payload

    _check_discrete_verify(config)
    seq = _run_discrete(config, problem)
    csv_path = os.path.join(out_dir, "iterates.csv")
    write_iterates_csv(seq, problem.oracle, csv_path)
    print(f"wrote {csv_path}")
    payload = discrete_summary(seq, problem.oracle, label,
                               config.method.tol_g)
    report = None
    if "stationarity" in config.verify.checks:
        report = check_stationarity(seq, problem.oracle,
                                    tol_g=config.method.tol_g)
    _emit(config, payload, report)
    if payload["diverged"]:
        print("run diverged", file=sys.stderr)
        return EXIT_RUNTIME, payload
    if report is not None and not report.ok:
        return EXIT_CHECKS, payload
    return EXIT_OK, payload


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "out_dir", None):
        config = config.with_out_dir(args.out_dir)
    if getattr(args, "stride", None):
        config = config.with_stride(args.stride)
    if getattr(args, "seed_override", None) is not None:
        config = config.with_seed(args.seed_override)
    return config


def cmd_run(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    code, _ = _execute_run(config)
    return code


def cmd_compare(args: argparse.Namespace) -> int:
    configs = [load_config(path) for path in args.configs]
    if len(configs) < 2:
        raise ConfigError("compare needs at least two configs")
    base = configs[0].problem
    for path, cfg in zip(args.configs[1:], configs[1:]):
        if cfg.problem != base:
            raise ConfigError(f"{path}: problem block differs from "
                              f"{args.configs[0]}; compare needs one shared "
                              f"problem")
    labels = [c.run_label() for c in configs]
    if len(set(labels)) != len(labels):
        raise ConfigError("duplicate run labels; set distinct label: fields")

    out_dir = args.out_dir or configs[0].output.out_dir
    worst = EXIT_OK
    rows = []
    for cfg, label in zip(configs, labels):
        cfg = _apply_overrides(cfg, args).with_out_dir(
            os.path.join(out_dir, label))
        code, payload = _execute_run(cfg)
        worst = max(worst, code)
        if payload["kind"] == "flow":
            cells = payload["time_to_grad"]
        else:
            cells = payload["iterations_to_grad"]
        rows.append({"label": label, "cells": cells,
                     "final_E": payload["final"]["E"]})

    table_path = os.path.join(out_dir, "compare.csv")
    write_compare_csv(rows, table_path)
    print(f"wrote {table_path}")
    _print_table(rows)
    return worst


def _print_table(rows: list[dict[str, Any]]) -> None:
    from .export import GRAD_DECADES, decade_label
    labels = [decade_label(t) for t in GRAD_DECADES]
    width = max(12, max(len(r["label"]) for r in rows) + 2)
    print("".join(["method".ljust(width)]
                  + [lab.rjust(10) for lab in labels] + ["final_E".rjust(14)]))
    for r in rows:
        cells = []
        for lab in labels:
            value = r["cells"].get(lab)
            cells.append(("-" if value is None else f"{value:g}").rjust(10))
        final_e = r["final_E"]
        tail = ("-" if final_e is None else f"{final_e:.3e}").rjust(14)
        print("".join([r["label"].ljust(width)] + cells + [tail]))


def cmd_verify(args: argparse.Namespace) -> int:
    config = _apply_overrides(load_config(args.config), args)
    method = config.method
    if not isinstance(method, FlowMethodConfig):
        raise ConfigError("verify works on flow trajectories; the config's "
                          "method block is discrete")
    if method.metric == "quasi_newton" or method.controller == "quasi_newton":
        raise ConfigError(
            "method: quasi_newton metric state is path-dependent and cannot "
            "be rebuilt from a CSV; rerun with a verify block instead")

    problem = config.problem.build()
    spec = method.build_controller()
    try:
        data = read_trajectory_csv(args.trajectory)
    except (OSError, ValueError) as e:
        raise ConfigError(f"{args.trajectory}: {e}") from e
    if data["x"].shape[1] != problem.oracle.dim:
        raise ConfigError(f"{args.trajectory}: trajectory dimension "
                          f"{data['x'].shape[1]} does not match the "
                          f"config problem ({problem.oracle.dim})")

    meta = {"mode": method.mode, "method": method.integrator, "h": method.h,
            "t_max": method.t_max, "dim": problem.oracle.dim,
            "tol_g": method.tol_g, "tol_v": method.tol_v,
            "controller": method.controller}
    record = trajectory_from_arrays(data, problem.oracle, spec, meta)

    checks = config.verify.checks or ("dissipation", "adjoint_consistency",
                                      "singular_arc", "stationarity")
    v = config.verify
    report = run_checks(record, problem.oracle, method.clf_params(), checks,
                        dissipation_mode=v.mode(), eta=v.eta,
                        tol=v.effective_tol(), adjoint_coeff=v.adjoint_coeff,
                        singular_tol=v.singular_tol)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_CHECKS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accelflow",
        description="Run, compare, and verify optimization flows and their "
                    "discrete counterparts.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out-dir", help="override output.out_dir")
        p.add_argument("--stride", type=int,
                       help="override output.stride (flow sampling)")
        p.add_argument("--seed-override", type=int,
                       help="override problem.seed")

    p_run = sub.add_parser("run", help="run one config to artifacts")
    p_run.add_argument("config")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare",
                           help="run several configs on one problem and "
                                "tabulate progress")
    p_cmp.add_argument("configs", nargs="+")
    add_common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_ver = sub.add_parser("verify",
                           help="re-check an exported trajectory against "
                                "its config")
    p_ver.add_argument("trajectory")
    p_ver.add_argument("config")
    add_common(p_ver)
    p_ver.set_defaults(func=cmd_verify)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleStateError as e:
        print(f"infeasible state: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
