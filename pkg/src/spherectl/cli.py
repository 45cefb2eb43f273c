"""Command-line driver.

    spherectl simulate  --config run.txt --out results/
    spherectl optimize  --config run.txt --order 2
    spherectl compare   --config run.txt --seed 7
    spherectl gradcheck --config small.txt

Exit codes: 0 success, 1 configuration error, 2 integrator abort,
3 optimizer step failure (and, for ``gradcheck``, 4 when the check fails).
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from spherectl.config import load_config
from spherectl.diagnostics import check_invariants, initial_speed, velocity_bound_cv, wellposedness_margin
from spherectl.errors import ConfigError, IntegrationError
from spherectl.integrate import TimeGrid, integrate_forward, zero_control
from spherectl.objective import evaluate_cost, gradient_check, position_variance, probe_control, velocity_variance
from spherectl.optimizer import STEP_FAILURE, ControlProblem, optimize
from spherectl import output

log = logging.getLogger("spherectl")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_INTEGRATOR = 2
EXIT_STEP_FAILURE = 3
EXIT_GRADCHECK_FAILED = 4


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not integrator aborts
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config_echo(cfg):
    return {f"config_{k}": v for k, v in cfg.echo().items()}


def _write_config(out, cfg):
    output.atomic_write(out / "config.txt", cfg.to_text())


def _metrics(traj):
    nodes = traj.grid.nodes
    pv = position_variance(traj.x)
    header = ["t", "position_variance"]
    cols = [nodes, pv]
    if traj.v is not None:
        header.append("velocity_variance")
        cols.append(velocity_variance(traj.v))
    return header, list(zip(*cols))


def _trajectory_report(cfg, params, traj, u):
    inv = check_invariants(traj, u)
    rep = dict(inv.as_dict())
    rep["raw_norm_drift"] = traj.norm_drift
    rep["raw_tangency_drift"] = traj.tangency_drift
    rep["terminal_position_variance"] = float(position_variance(traj.x[-1]))
    if traj.v is not None:
        rep["terminal_velocity_variance"] = float(velocity_variance(traj.v[-1]))
        V0 = initial_speed(traj.v[0])
        margin = wellposedness_margin(params, V0, inv.control_bound_M)
        rep["wellposedness_margin"] = margin
        rep["velocity_bound_cv"] = velocity_bound_cv(params, V0, inv.control_bound_M) if margin < 1 else None
    return rep


def _failed(out, cfg, message, **extra):
    rep = {"status": output.FAILED, "error": message, **extra, **_config_echo(cfg)}
    output.write_json(out / "report.json", rep)


def cmd_simulate(cfg, out):
    params = cfg.model_params()
    u = zero_control(params)
    _write_config(out, cfg)
    try:
        traj = integrate_forward(cfg.order, cfg.initial_state(), u, params, renorm=cfg.renorm)
    except IntegrationError as exc:
        _failed(out, cfg, str(exc), step=exc.step)
        log.error("integration aborted: %s", exc)
        return EXIT_INTEGRATOR
    output.write_trajectory(out / "trajectory.csv", traj)
    output.write_csv(out / "metrics.csv", *_metrics(traj))
    rep = {"status": "ok", **_trajectory_report(cfg, params, traj, u), **_config_echo(cfg)}
    output.write_json(out / "report.json", rep)
    return EXIT_OK


def _history_rows(report):
    steps = [0.0] + list(report.step_history)
    for k, (cost, gnorm) in enumerate(zip(report.cost_history, report.grad_norm_history)):
        yield [k, cost.total, cost.tracking, cost.energy, gnorm, steps[k]]


HISTORY_HEADER = ["iteration", "total", "tracking", "energy", "grad_norm", "step"]


def _optimize_report(report):
    best = report.best_cost
    j0 = report.cost_history[0]
    return {
        "termination": report.termination,
        "iterations": report.iterations,
        "best_iteration": report.best_iteration,
        "best_total": best.total,
        "best_tracking": best.tracking,
        "best_energy": best.energy,
        "zero_control_total": j0.total,
        "final_grad_norm": report.grad_norm_history[-1],
        "bb_fallbacks": report.bb_fallbacks,
        "warnings": list(report.warnings),
    }


def _run_optimizer(cfg, out):
    """Shared by optimize and compare. Returns (exit code, report, controlled trajectory)."""
    params = cfg.model_params()
    problem = ControlProblem(cfg.order, cfg.initial_state(), params, renorm=cfg.renorm)
    grid = TimeGrid.from_params(params)
    try:
        report = optimize(problem, cfg.optimize_config())
    except IntegrationError as exc:
        _failed(out, cfg, str(exc), step=exc.step)
        log.error("integration aborted: %s", exc)
        return EXIT_INTEGRATOR, None, None
    output.write_csv(out / "history.csv", HISTORY_HEADER, _history_rows(report))
    output.write_control(out / "control.csv", grid, report.u_star)
    traj = integrate_forward(cfg.order, problem.initial, report.u_star, params, renorm=cfg.renorm)
    code = EXIT_STEP_FAILURE if report.termination == STEP_FAILURE else EXIT_OK
    return code, report, traj


def cmd_optimize(cfg, out):
    _write_config(out, cfg)
    code, report, traj = _run_optimizer(cfg, out)
    if report is None:
        return code
    params = cfg.model_params()
    output.write_trajectory(out / "trajectory.csv", traj)
    output.write_csv(out / "metrics.csv", *_metrics(traj))
    rep = {
        "status": output.FAILED if code == EXIT_STEP_FAILURE else "ok",
        **_optimize_report(report),
        **_trajectory_report(cfg, params, traj, report.u_star),
        **_config_echo(cfg),
    }
    output.write_json(out / "report.json", rep)
    return code


def cmd_compare(cfg, out):
    _write_config(out, cfg)
    params = cfg.model_params()
    try:
        free = integrate_forward(cfg.order, cfg.initial_state(), zero_control(params), params, renorm=cfg.renorm)
    except IntegrationError as exc:
        _failed(out, cfg, str(exc), step=exc.step)
        return EXIT_INTEGRATOR
    code, report, ctrl = _run_optimizer(cfg, out)
    if report is None:
        return code
    output.write_trajectory(out / "trajectory_controlled.csv", ctrl)
    output.write_trajectory(out / "trajectory_uncontrolled.csv", free)
    header = ["t", "position_variance_controlled", "position_variance_uncontrolled"]
    cols = [free.grid.nodes, position_variance(ctrl.x), position_variance(free.x)]
    if cfg.order == 2:
        header += ["velocity_variance_controlled", "velocity_variance_uncontrolled"]
        cols += [velocity_variance(ctrl.v), velocity_variance(free.v)]
    output.write_csv(out / "compare.csv", header, zip(*cols))
    vc = float(position_variance(ctrl.x[-1]))
    vf = float(position_variance(free.x[-1]))
    rep = {
        "status": output.FAILED if code == EXIT_STEP_FAILURE else "ok",
        **_optimize_report(report),
        "terminal_variance_controlled": vc,
        "terminal_variance_uncontrolled": vf,
        "terminal_variance_ratio": vc / vf if vf > 0 else None,
        "uncontrolled_total": evaluate_cost(free, zero_control(params), params).total,
        **_config_echo(cfg),
    }
    output.write_json(out / "report.json", rep)
    return code


def cmd_gradcheck(cfg, out):
    _write_config(out, cfg)
    params = cfg.model_params()
    if params.has_omega:
        raise ConfigError("omega_scale", "gradient check requires zero natural frequencies")
    u = probe_control(params, cfg.oracle_seed)
    try:
        res = gradient_check(
            cfg.order, cfg.initial_state(), params, u,
            eps=cfg.fd_eps, n_coords=cfg.fd_coords, seed=cfg.oracle_seed,
            threshold=cfg.gradcheck_threshold, flip_sign=cfg.gradcheck_flip_sign, renorm=cfg.renorm,
        )
    except IntegrationError as exc:
        _failed(out, cfg, str(exc), step=exc.step)
        return EXIT_INTEGRATOR
    rep = {
        "status": "ok" if res.passed else output.FAILED,
        "passed": res.passed,
        "relative_error": res.relative_error,
        "threshold": res.threshold,
        "n_coordinates": int(len(res.indices)),
        "coordinates": res.indices,
        **_config_echo(cfg),
    }
    output.write_json(out / "gradcheck.json", rep)
    print(f"gradcheck order={cfg.order}: relative error {res.relative_error:.3e} "
          f"({'pass' if res.passed else 'FAIL'} at {res.threshold:g})")
    return EXIT_OK if res.passed else EXIT_GRADCHECK_FAILED


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
}


def build_parser():
    parser = _Parser(prog="spherectl", description="Optimal consensus control on the sphere.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", help="output directory (overrides the config's 'out')")
        p.add_argument("--seed", type=int, help="initial-data seed (overrides the config)")
        p.add_argument("--order", type=int, choices=(1, 2), help="model order (overrides the config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config, seed=args.seed, order=args.order, out=args.out)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
