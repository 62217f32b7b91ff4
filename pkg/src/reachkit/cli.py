"""Experiment driver: config-driven subcommands with stable exit codes.

Exit codes: 0 success, 2 config or input error, 3 solver non-convergence,
4 task infeasibility, 5 artifact mismatch between inputs.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, derive_seed
from .errors import GridMismatchError, InfeasibleTaskError
from .evaluate import (classification_report, nesting_report, support_mask,
                       transfer_experiment)
from .grid import (BoolMask, ScalarField, read_field, read_mask, sublevel_set,
                   write_field, write_mask)
from .icl import (ConstraintField, ICLConfig, density_from_records, run_mt_icl,
                  solve_experts)
from .reachability import brt_of_set, failure_sdf, solve_brt, BRTResult
from .svg import render_slice
from .tasks import (aggregate_density, rollout, sample_ring_tasks,
                    tasks_from_json, tasks_to_json, trajectory_lines)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_INFEASIBLE = 4
EXIT_ARTIFACT_MISMATCH = 5

SLICE_HEADINGS = (-np.pi / 2, 0.0, np.pi / 2)


class _Manifest:
    def __init__(self, config: RunConfig, out: Path):
        self.data = {
            "tool_version": __version__,
            "seed": config.seed,
            "config": json.loads(config.to_json()),
            "stages": {},
        }
        self.out = out

    def stage(self, name: str, seconds: float, artifacts: list[str]) -> None:
        self.data["stages"][name] = {
            "seconds": round(seconds, 3),
            "artifacts": artifacts,
        }

    def write(self) -> None:
        for stage in self.data["stages"].values():
            for rel in stage["artifacts"]:
                if not (self.out / rel).exists():
                    raise FileNotFoundError(f"manifest lists missing artifact {rel}")
        path = self.out / "run_manifest.json"
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True))


def _load_config(args) -> RunConfig:
    if args.config:
        text = Path(args.config).read_text()
        config = RunConfig.from_json(text)
    else:
        config = RunConfig()
        config.validate()
    if args.out:
        config.output = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    else:
        env = os.environ.get("REACHKIT_THREADS")
        if env:
            config.threads = int(env)
    return config


def _sample_tasks(config: RunConfig, grid):
    ts = config.tasks
    kwargs = {}
    if ts.goal_arcs is not None:
        kwargs["goal_arcs"] = tuple(ts.goal_arcs)
    return sample_ring_tasks(
        grid, ts.count, ring_radius=ts.ring_radius,
        seed=derive_seed(config.seed, "tasks"),
        goal_radius=ts.goal_radius, jitter=ts.jitter, **kwargs)


def _write_brt_artifacts(out: Path, result, config: RunConfig, grid,
                         obstacle=None, prefix: str = "") -> list[str]:
    names = [f"{prefix}value.vfld", f"{prefix}mask.vfld", f"{prefix}brt.json"]
    write_field(out / names[0], result.value)
    write_mask(out / names[1], result.unsafe)
    sidecar = {
        "iterations": result.iterations,
        "residual": result.residual,
        "converged": result.converged,
        "model_name": config.model_name(),
        "grid": config.grid,
    }
    (out / names[2]).write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    for theta in SLICE_HEADINGS:
        name = f"{prefix}slice_{theta:+.3f}.svg"
        render_slice(out / name, grid, theta, obstacle=obstacle,
                     contours=[(result.value, 0.0, "#1f77b4", "unsafe tube")])
        names.append(name)
    return names


def cmd_brt(config: RunConfig) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    model = config.build_model()
    obstacle = config.build_obstacle()
    manifest = _Manifest(config, out)

    t0 = time.time()
    h = failure_sdf(obstacle, grid)
    result = solve_brt(model, grid, h, tolerance=config.solver.tolerance,
                       cfl=config.solver.cfl, max_iters=config.solver.max_iters)
    names = _write_brt_artifacts(out, result, config, grid, obstacle)
    manifest.stage("brt", time.time() - t0, names)
    manifest.write()
    if not result.converged:
        print(f"brt: no convergence after {result.iterations} sweeps "
              f"(residual {result.residual:.3e})", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    print(f"brt: converged in {result.iterations} sweeps; "
          f"unsafe cells {result.unsafe.count()} of {grid.num_cells}")
    return EXIT_OK


def cmd_demos(config: RunConfig) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    model = config.build_model()
    obstacle = config.build_obstacle()
    manifest = _Manifest(config, out)

    t0 = time.time()
    h = failure_sdf(obstacle, grid)
    f_mask = sublevel_set(h, 0.0)
    brt = solve_brt(model, grid, h, tolerance=config.solver.tolerance,
                    cfl=config.solver.cfl, max_iters=config.solver.max_iters)
    tasks = _sample_tasks(config, grid)
    icl_cfg = ICLConfig(tasks=tasks, epochs=config.icl.epochs,
                        epsilon=config.icl.epsilon, penalty=config.icl.penalty,
                        temperature=config.icl.temperature,
                        threshold=config.icl.threshold, mdp=config.mdp)
    from .grid import nearest_index
    bad = [t.id for t in tasks if brt.unsafe.bits[nearest_index(grid, t.start)]]
    if bad:
        print(f"demos: task starts inside the unsafe tube: {bad}", file=sys.stderr)
        return EXIT_INFEASIBLE

    mdp = config.mdp.build(model, grid)
    try:
        experts = solve_experts(icl_cfg, mdp, brt.unsafe, config.threads)
    except InfeasibleTaskError as err:
        print(f"demos: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE

    (out / "tasks.json").write_text(tasks_to_json(tasks))
    lines = []
    for task, sol in zip(tasks, experts):
        for r_idx in range(config.tasks.rollouts_per_task):
            seed = derive_seed(config.seed, f"demo-task{task.id}-rollout{r_idx}")
            records = rollout(mdp, sol["policy"], task, seed,
                              sol.get("disturbance"))
            lines.extend(trajectory_lines(records))
    (out / "demos.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""))
    expert_density = aggregate_density([s["density"] for s in experts])
    write_field(out / "expert_density.vfld", expert_density.density)

    manifest.stage("demos", time.time() - t0,
                   ["tasks.json", "demos.jsonl", "expert_density.vfld"])
    manifest.write()
    n_traj = config.tasks.count * config.tasks.rollouts_per_task
    print(f"demos: wrote {n_traj} trajectories over {config.tasks.count} tasks")
    return EXIT_OK


def cmd_icl(config: RunConfig, expert_density_path: str | None,
            demos_path: str | None) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    model = config.build_model()
    obstacle = config.build_obstacle()
    manifest = _Manifest(config, out)

    from .tasks import VisitationField
    expert_density = None
    if expert_density_path:
        field = read_field(expert_density_path)
        expert_density = VisitationField(field)
    elif demos_path:
        records = [json.loads(line) for line in
                   Path(demos_path).read_text().splitlines() if line.strip()]
        expert_density = density_from_records(grid, records)

    t0 = time.time()
    h = failure_sdf(obstacle, grid)
    f_mask = sublevel_set(h, 0.0)
    brt = solve_brt(model, grid, h, tolerance=config.solver.tolerance,
                    cfl=config.solver.cfl, max_iters=config.solver.max_iters)
    tasks = _sample_tasks(config, grid)
    icl_cfg = ICLConfig(tasks=tasks, epochs=config.icl.epochs,
                        epsilon=config.icl.epsilon, penalty=config.icl.penalty,
                        temperature=config.icl.temperature,
                        threshold=config.icl.threshold, mdp=config.mdp)
    try:
        history = run_mt_icl(icl_cfg, model, grid, f_mask, brt=brt,
                             expert_density=expert_density,
                             threads=config.threads)
    except InfeasibleTaskError as err:
        print(f"icl: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GridMismatchError as err:
        print(f"icl: {err}", file=sys.stderr)
        return EXIT_ARTIFACT_MISMATCH

    artifacts = []
    for epoch, constraint in enumerate(history.constraints, 1):
        name = f"constraint_epoch{epoch}.vfld"
        write_field(out / name, constraint.values)
        sidecar = f"constraint_epoch{epoch}.json"
        (out / sidecar).write_text(json.dumps(
            {"threshold": constraint.threshold, "epsilon": icl_cfg.epsilon,
             "epoch": epoch}, indent=2, sort_keys=True))
        artifacts.extend([name, sidecar])
    write_field(out / "learner_mixture.vfld", history.learner_mixture().density)
    write_field(out / "expert_density.vfld", history.expert_density.density)
    (out / "icl_metrics.json").write_text(json.dumps(
        history.metrics, indent=2, sort_keys=True))
    artifacts += ["learner_mixture.vfld", "expert_density.vfld", "icl_metrics.json"]

    manifest.stage("icl", time.time() - t0, artifacts)
    manifest.write()
    final = history.metrics[-1]
    print(f"icl: {history.epochs_done} epochs; final unsafe cells "
          f"{final['unsafe_cells']}; iou vs tube {final['vs_brt']['iou']:.3f}")
    return EXIT_OK


def cmd_eval(config: RunConfig, brt_dir: str, icl_dirs: list[str]) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    obstacle = config.build_obstacle()
    manifest = _Manifest(config, out)

    t0 = time.time()
    brt_value = read_field(Path(brt_dir) / "value.vfld")
    brt_mask = read_mask(Path(brt_dir) / "mask.vfld")
    if brt_mask.grid != grid:
        print("eval: BRT artifacts live on a different grid than the config",
              file=sys.stderr)
        return EXIT_ARTIFACT_MISMATCH
    h = failure_sdf(obstacle, grid)
    f_mask = sublevel_set(h, 0.0)

    from .tasks import VisitationField
    per_seed = []
    artifacts = []
    for icl_dir in icl_dirs:
        icl_path = Path(icl_dir)
        epochs = sorted(icl_path.glob("constraint_epoch*.vfld"))
        if not epochs:
            print(f"eval: no constraint artifacts in {icl_dir}", file=sys.stderr)
            return EXIT_CONFIG
        values = read_field(epochs[-1])
        sidecar = json.loads(
            epochs[-1].with_suffix(".json").read_text())
        if values.grid != grid:
            print(f"eval: constraint grid mismatch in {icl_dir}", file=sys.stderr)
            return EXIT_ARTIFACT_MISMATCH
        constraint = ConstraintField(values, sidecar["threshold"])
        predicted = constraint.unsafe_mask()
        mixture = VisitationField(read_field(icl_path / "learner_mixture.vfld"))
        expert = VisitationField(read_field(icl_path / "expert_density.vfld"))
        support = support_mask(grid, [mixture, expert])
        blocks = {
            "vs_brt_full": classification_report(predicted, brt_mask),
            "vs_brt_support": classification_report(predicted, brt_mask, support),
            "vs_failure_full": classification_report(predicted, f_mask),
            "vs_failure_support": classification_report(predicted, f_mask, support),
        }
        per_seed.append({k: v.as_dict() for k, v in blocks.items()})

        stem = icl_path.name or "icl"
        for theta in SLICE_HEADINGS:
            name = f"overlay_{stem}_{theta:+.3f}.svg"
            render_slice(out / name, grid, theta, obstacle=obstacle, contours=[
                (brt_value, 0.0, "#1f77b4", "unsafe tube"),
                (constraint.values, constraint.threshold, "#2ca02c",
                 "inferred constraint"),
            ])
            artifacts.append(name)

    report = {"runs": per_seed}
    if len(per_seed) > 1:
        summary = {}
        for block in per_seed[0]:
            summary[block] = {}
            for metric in ("accuracy", "precision", "recall", "f1", "iou"):
                vals = [run[block][metric] for run in per_seed]
                summary[block][metric] = {
                    "mean": float(np.mean(vals)), "stddev": float(np.std(vals))}
        report["aggregate"] = summary
    (out / "metrics.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    artifacts.append("metrics.json")
    manifest.stage("eval", time.time() - t0, artifacts)
    manifest.write()
    print(f"eval: wrote metrics for {len(per_seed)} run(s)")
    return EXIT_OK


TRANSFER_SCENARIOS = (
    # (source b, target a): the paper's three transfer directions
    ("ultra_agile", "non_agile"),
    ("non_agile", "ultra_agile"),
    ("agile", "non_agile"),
)


def cmd_transfer(config: RunConfig) -> int:
    out = Path(config.output)
    out.mkdir(parents=True, exist_ok=True)
    grid = config.build_grid()
    obstacle = config.build_obstacle()
    manifest = _Manifest(config, out)

    t0 = time.time()
    h = failure_sdf(obstacle, grid)
    f_mask = sublevel_set(h, 0.0)
    tasks = _sample_tasks(config, grid)
    from .dynamics import get_preset
    brts = {}
    for name in {m for pair in TRANSFER_SCENARIOS for m in pair}:
        brts[name] = solve_brt(get_preset(name), grid, h,
                               tolerance=config.solver.tolerance,
                               cfl=config.solver.cfl,
                               max_iters=config.solver.max_iters)

    scenarios = []
    failures = []
    for source, target in TRANSFER_SCENARIOS:
        try:
            report = transfer_experiment(
                get_preset(target), brts[source].unsafe, tasks, grid, f_mask,
                brt_a=brts[target], mdp_params=config.mdp,
                penalty=config.icl.penalty, temperature=config.icl.temperature,
                source_name=source, target_name=target)
        except InfeasibleTaskError as err:
            failures.append({"source": source, "target": target, "error": str(err)})
            continue
        block = report.as_dict()
        gap = report.return_with_own_brt - report.return_with_source_constraint
        rel = abs(gap) / abs(report.return_with_own_brt) if report.return_with_own_brt else 0.0
        block["return_gap"] = gap
        block["relative_return_gap"] = rel
        block["conservative"] = bool(rel > 0.05)
        scenarios.append(block)

    payload = {"scenarios": scenarios, "infeasible_scenarios": failures}
    (out / "transfer.json").write_text(json.dumps(payload, indent=2, sort_keys=True))
    manifest.stage("transfer", time.time() - t0, ["transfer.json"])
    manifest.write()
    if not scenarios:
        print("transfer: every scenario infeasible", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"transfer: wrote {len(scenarios)} scenario block(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="reachkit",
        description="Unsafe-tube computation, safe demonstrations, and "
                    "inverse constraint learning experiments.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--threads", type=int,
                       help="worker threads (default REACHKIT_THREADS or 1)")

    common(sub.add_parser("brt", help="solve the unsafe tube for one model"))
    common(sub.add_parser("demos", help="expert policies, rollouts, density"))
    p_icl = sub.add_parser("icl", help="run the constraint-learning loop")
    common(p_icl)
    p_icl.add_argument("--expert-density", help="precomputed density VFLD")
    p_icl.add_argument("--demos", help="JSON-lines demonstrations to ingest")
    p_eval = sub.add_parser("eval", help="score constraints against labels")
    common(p_eval)
    p_eval.add_argument("--brt-dir", required=True, help="cmd_brt output directory")
    p_eval.add_argument("--icl-dir", required=True, nargs="+",
                        help="one or more cmd_icl output directories")
    common(sub.add_parser("transfer", help="cross-dynamics constraint transfer"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
    except (OSError, ValueError, KeyError, TypeError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "brt":
            return cmd_brt(config)
        if args.command == "demos":
            return cmd_demos(config)
        if args.command == "icl":
            if not args.expert_density and not args.demos:
                print("icl: need --expert-density or --demos", file=sys.stderr)
                return EXIT_CONFIG
            return cmd_icl(config, args.expert_density, args.demos)
        if args.command == "eval":
            return cmd_eval(config, args.brt_dir, args.icl_dir)
        if args.command == "transfer":
            return cmd_transfer(config)
    except FileNotFoundError as err:
        print(f"input error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except GridMismatchError as err:
        print(f"artifact mismatch: {err}", file=sys.stderr)
        return EXIT_ARTIFACT_MISMATCH
    except InfeasibleTaskError as err:
        print(f"infeasible: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
