"""Command-line front end.

Pipeline per run: build the plant model, obtain a controller (LQR weights,
explicit matrices, or Bayesian-optimization synthesis), analyze closed-loop
stability, and simulate the noisy discrete loop.  Artifacts land in the
output directory as CSV (``model.csv``, ``controller.csv``, ``stability.csv``,
``history.csv`` for synthesis runs, ``trace.csv`` + ``trace.dat``,
``metrics.csv``, ``prefilter.csv``) next to a ``manifest`` file that echoes
the fully-resolved configuration and can be re-ingested as a config.

Exit codes: 0 success, 2 synthesis/analysis failure, 3 configuration error.
``FURUTA_SYNTH_THREADS`` caps the worker threads used to evaluate the
synthesis initial design.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from functools import partial
from pathlib import Path

import numpy as np

from . import bayesopt, config as cfgmod, control, plant, sim
from .errors import ConfigError, ToolkitError

ALL_STAGES = ("model", "controller", "analysis", "simulation")

_STAGES_BY_COMMAND = {
    "linearize": ("model",),
    "lqr": ("model", "controller", "analysis"),
    "synthesize": ("model", "controller", "analysis"),
    "analyze": ("model", "controller", "analysis"),
    "simulate": ALL_STAGES,
    "preset": ALL_STAGES,
}


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _write_matrix_csv(path: Path, matrices: dict[str, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("matrix,row,col,value\n")
        for name, m in matrices.items():
            m = np.atleast_2d(m)
            for i in range(m.shape[0]):
                for j in range(m.shape[1]):
                    fh.write(f"{name},{i},{j},{_fmt(m[i, j])}\n")


def _write_controller_csv(path: Path, K: np.ndarray | None, ctrl) -> None:
    """Static gains serialize as bare rows (gain first); dynamic controllers
    as labelled blocks."""
    with open(path, "w", encoding="utf-8") as fh:
        if K is not None:
            for row in np.atleast_2d(K):
                fh.write(",".join(_fmt(v) for v in row) + "\n")
        else:
            for name, m in (
                ("A_c", ctrl.A_c), ("B_c", ctrl.B_c), ("C_c", ctrl.C_c), ("D_c", ctrl.D_c)
            ):
                m = np.atleast_2d(m)
                fh.write(f"# {name},{m.shape[0]},{m.shape[1]}\n")
                for row in m:
                    fh.write(",".join(_fmt(v) for v in row) + "\n")


def _write_stability_csv(path: Path, report: control.StabilityReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("quantity,value\n")
        fh.write(f"domain,{report.domain}\n")
        fh.write(f"spectral_abscissa,{_fmt(report.spectral_abscissa)}\n")
        fh.write(f"spectral_radius,{_fmt(report.spectral_radius)}\n")
        fh.write(f"stable,{int(report.stable)}\n")
        for i, ev in enumerate(report.eigenvalues):
            fh.write(f"eigenvalue_{i}_re,{_fmt(ev.real)}\n")
            fh.write(f"eigenvalue_{i}_im,{_fmt(ev.imag)}\n")


def _write_metrics_csv(path: Path, metrics: sim.Metrics) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        fh.write(f"peak_control,{_fmt(metrics.peak_control)}\n")
        settling = "" if metrics.settling_step is None else str(metrics.settling_step)
        fh.write(f"settling_step,{settling}\n")
        fh.write(f"settled,{int(metrics.settled)}\n")
        fh.write(f"tracking_rmse,{_fmt(metrics.tracking_rmse)}\n")
        fh.write(f"steady_state_error,{_fmt(metrics.steady_state_error)}\n")


def _build_model(cfg: cfgmod.ExperimentConfig) -> plant.StateSpace:
    pn = cfg.process_noise
    mn = cfg.measurement_noise
    if cfg.plant == "toy":
        ss = plant.toy_plant()
    elif cfg.plant == "canonical-rip":
        ss = plant.canonical_rip_model()
    elif cfg.plant == "table1-symbolic":
        ss = plant.linearize(plant.table1())
    else:  # file:<path>
        params = cfgmod.load_pendulum_params(cfg.plant[len("file:"):])
        ss = plant.linearize(params)
    if pn is not None:
        ss = dataclasses.replace(ss, P_v=pn * np.eye(ss.n_states))
    if mn is not None:
        ss = dataclasses.replace(ss, P_w=mn * np.eye(ss.n_outputs))
    return ss


def _synthesize(cfg: cfgmod.ExperimentConfig, ss: plant.StateSpace, out: Path, max_workers: int):
    """Run the tuning loop, streaming history.csv; returns the controller."""
    space = cfgmod.sized_search_space(
        cfg.space_bounds, cfg.n_controller_states, ss.n_states, ss.n_inputs
    )
    objective = partial(
        bayesopt.synthesis_objective,
        ss=ss,
        objective=cfg.objective,
        n_controller_states=cfg.n_controller_states,
    )
    bo_cfg = dataclasses.replace(cfg.bo, rng_seed=cfg.seed)
    with open(out / "history.csv", "w", encoding="utf-8") as fh:
        fh.write(
            "iteration,"
            + ",".join(f"theta_{i}" for i in range(space.dimension))
            + ",objective,best_so_far\n"
        )

        def on_step(i: int, x: np.ndarray, y: float, best: float) -> None:
            fh.write(f"{i}," + ",".join(_fmt(v) for v in x) + f",{_fmt(y)},{_fmt(best)}\n")

        result = bayesopt.bo_minimize(
            objective, space, bo_cfg, on_step=on_step, max_workers=max_workers
        )
    ctrl = bayesopt.decode_controller(
        result.best_point,
        n_plant_states=ss.n_states,
        n_controller_states=cfg.n_controller_states,
        n_inputs=ss.n_inputs,
    )
    return ctrl, result


def run(cfg: cfgmod.ExperimentConfig, stages=ALL_STAGES) -> int:
    """Execute the pipeline stages and write artifacts; returns the exit code."""
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    max_workers = max(1, int(os.environ.get("FURUTA_SYNTH_THREADS", "1")))

    ss = _build_model(cfg)
    _write_matrix_csv(out / "model.csv", {"A": ss.A, "B": ss.B, "C": ss.C, "D": ss.D})

    K = None
    ctrl = None
    resolved: dict[str, str] = {}
    if "controller" in stages:
        if cfg.controller == "lqr":
            if ss.is_discrete:
                raise ConfigError("lqr synthesis requires a continuous plant model")
            Q = cfg.lqr_q if cfg.lqr_q is not None else np.eye(ss.n_states)
            R = cfg.lqr_r if cfg.lqr_r is not None else np.eye(ss.n_inputs)
            control.validate_lqr_weights(Q, R)
            K = control.lqr_gain(ss.A, ss.B, Q, R)
            resolved["lqr.q"] = cfgmod.format_matrix(Q)
            resolved["lqr.r"] = cfgmod.format_matrix(R)
            _write_controller_csv(out / "controller.csv", K, None)
        elif cfg.controller == "dynamic":
            ctrl = cfg.dynamic
            _write_controller_csv(out / "controller.csv", None, ctrl)
        else:  # synthesize
            ctrl, _ = _synthesize(cfg, ss, out, max_workers)
            resolved.update({
                "dynamic.a_c": cfgmod.format_matrix(ctrl.A_c),
                "dynamic.b_c": cfgmod.format_matrix(ctrl.B_c),
                "dynamic.c_c": cfgmod.format_matrix(ctrl.C_c),
                "dynamic.d_c": cfgmod.format_matrix(ctrl.D_c),
            })
            _write_controller_csv(out / "controller.csv", None, ctrl)

    if "analysis" in stages and (K is not None or ctrl is not None):
        domain = "discrete" if ss.is_discrete else "continuous"
        closed = ss.A - ss.B @ K if K is not None else control.augmented_matrix(ss, ctrl)
        report = control.stability_report(closed, domain)
        _write_stability_csv(out / "stability.csv", report)

    if "simulation" in stages and (K is not None or ctrl is not None):
        if ss.is_discrete:
            ss_d = ss
            ctrl_d = ctrl
        else:
            ss_d = control.c2d_zoh(ss, cfg.sample_time)
            ctrl_d = control.c2d_controller(ctrl, cfg.sample_time) if ctrl is not None else None
        # Zero references never excite the prefilter; skip it so regulation
        # runs cannot fail on a singular steady-state map.
        if cfg.reference.kind == "zero":
            F = np.eye(ss_d.n_inputs)
        elif K is not None:
            F = control.static_prefilter(ss_d, K)
        else:
            F = control.dynamic_prefilter(ss_d, ctrl_d)
        _write_matrix_csv(out / "prefilter.csv", {"F": F})
        if K is not None:
            result = sim.simulate_static(
                ss_d, K, F, cfg.reference, cfg.horizon, cfg.seed, x0=cfg.initial_state
            )
        else:
            result = sim.simulate_dynamic(
                ss_d, ctrl_d, F, cfg.reference, cfg.horizon, cfg.seed, x0=cfg.initial_state
            )
        result.to_csv(out / "trace.csv")
        result.to_dat(out / "trace.dat")
        _write_metrics_csv(out / "metrics.csv", sim.compute_metrics(result))

    (out / "manifest").write_text(cfgmod.manifest_text(cfg, resolved), encoding="utf-8")
    return 0


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="config file (flat key=value or JSON)")
    parser.add_argument("--preset", help="base the run on a named preset")
    parser.add_argument("--seed", type=int, help="override the run seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument(
        "--objective",
        choices=sorted(cfgmod.OBJECTIVE_TAGS),
        help="synthesis objective (spectral abscissa or |Re eig| infinity norm)",
    )


def _resolve(args: argparse.Namespace) -> cfgmod.ExperimentConfig:
    mapping: dict[str, str] = {}
    preset = getattr(args, "name", None) or args.preset
    if preset:
        mapping.update(cfgmod.preset_mapping(preset))
    if args.config:
        mapping.update(cfgmod.parse_config_file(args.config))
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    if args.out is not None:
        mapping["out"] = str(args.out)
    if args.objective is not None:
        mapping["objective"] = args.objective
    if args.command == "linearize" and "plant" not in mapping:
        mapping["plant"] = "table1-symbolic"
    cfg = cfgmod.build_experiment(mapping)
    if args.command == "lqr":
        cfg.controller = "lqr"
    elif args.command == "synthesize":
        cfg.controller = "synthesize"
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ripsynth",
        description="Rotary-inverted-pendulum controller synthesis and simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("linearize", "emit the plant model matrices"),
        ("lqr", "synthesize an LQR gain and analyze the loop"),
        ("synthesize", "tune a dynamic controller by Bayesian optimization"),
        ("analyze", "closed-loop stability analysis for the configured controller"),
        ("simulate", "full pipeline including the noisy closed-loop trace"),
    ):
        p = sub.add_parser(name, help=help_text)
        _common_flags(p)
    p = sub.add_parser("preset", help="run a named preset end to end")
    p.add_argument("name", choices=sorted(cfgmod.PRESETS))
    _common_flags(p)

    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
        return run(cfg, stages=_STAGES_BY_COMMAND[args.command])
    except ConfigError as exc:
        print(f"ripsynth: config error: {exc}", file=sys.stderr)
        return 3
    except ToolkitError as exc:
        print(f"ripsynth: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
