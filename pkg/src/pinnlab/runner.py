"""Experiment orchestration: run directories, manifests, comparisons."""

from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ResolvedConfig, format_config
from .diagnostics import failure_indicator
from .network import load_checkpoint, save_checkpoint
from .problems import write_grid
from .training import (
    DIAG_FIELDS,
    TrainingDiverged,
    default_grid_resolution,
    records_to_csv,
    train,
)
from .sampling import write_snapshot

__all__ = ["run_experiment", "compare_runs", "read_diagnostics", "export_grid", "run_lab"]


def _write_manifest(path: Path, config: ResolvedConfig, **run_info) -> None:
    values = dict(config.values)
    values["run.code_version"] = __version__
    for key, value in run_info.items():
        values[f"run.{key}"] = value
    path.write_text(format_config(values))


def run_experiment(config: ResolvedConfig, out_dir, dry_run: bool = False) -> int:
    """Train per config and populate out_dir; returns a process exit status."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.txt"
    _write_manifest(manifest, config, created_unix=time.time())
    if dry_run:
        return 0

    problem = config.build_problem()
    net = config.build_network(problem)
    train_config = config.build_train_config()

    snapshot_dir = None
    if train_config.snapshot_period:
        snapshot_dir = out / "snapshots"
        snapshot_dir.mkdir(exist_ok=True)
    checkpoint_dir = out / "checkpoints"
    checkpoint_dir.mkdir(exist_ok=True)

    try:
        result = train(
            problem,
            net,
            train_config,
            snapshot_dir=str(snapshot_dir) if snapshot_dir else None,
            checkpoint_dir=str(checkpoint_dir),
        )
    except TrainingDiverged as abort:
        (out / "diagnostics.csv").write_text(records_to_csv(abort.records))
        _write_manifest(manifest, config, created_unix=time.time(), aborted_at=abort.iteration)
        return 1

    (out / "diagnostics.csv").write_text(records_to_csv(result.records))
    save_checkpoint(checkpoint_dir / "final.bin", result.net)

    resolution = train_config.grid_resolution or default_grid_resolution(problem)
    _export(result.net, problem, resolution, out / "final_solution.txt", what="solution")
    _export(result.net, problem, resolution, out / "final_residual.txt", what="residual")
    fitness = np.full(result.points.shape[0], np.nan)
    write_snapshot(out / "population_final.txt", result.points, fitness, result.provenance)
    _write_manifest(
        manifest, config, created_unix=time.time(), wall_clock_s=result.wall_clock_s
    )
    return 0


def _grid_axes(problem, resolution):
    axes = []
    for lo, hi, r in zip(problem.domain.lo, problem.domain.hi, resolution):
        step = (hi - lo) / r
        axes.append(lo + step * (np.arange(r) + 0.5))
    return axes


def _export(net, problem, resolution, path, what: str) -> None:
    points = problem.domain.grid(resolution, centers=True)
    if what == "solution":
        values = net.values(points)
    elif what == "residual":
        jets = net.forward_jets(points, order=problem.residual_order)
        values = np.abs(problem.residual_batch(jets))
    else:
        raise ValueError(f"unknown export {what!r}")
    axes = _grid_axes(problem, resolution)
    if len(axes) == 1:
        write_grid(path, axes[0], np.zeros(1), values.reshape(-1, 1))
    else:
        write_grid(path, axes[0], axes[1], values.reshape(resolution))


def export_grid(config: ResolvedConfig, checkpoint_path, out_path, what: str, resolution=None):
    problem = config.build_problem()
    net = load_checkpoint(checkpoint_path)
    if resolution is None:
        resolution = default_grid_resolution(problem)
    _export(net, problem, resolution, out_path, what)


def read_diagnostics(run_dir):
    """diagnostics.csv of a run directory as a dict of column arrays."""
    path = Path(run_dir) / "diagnostics.csv"
    if not path.exists():
        raise FileNotFoundError(f"{run_dir}: missing diagnostics.csv")
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    if tuple(header) != DIAG_FIELDS:
        raise ValueError(f"{path}: unexpected columns {header}")
    columns = {name: [] for name in header}
    for line in lines[1:]:
        for name, cell in zip(header, line.split(",")):
            columns[name].append(float(cell))
    return {name: np.asarray(vals) for name, vals in columns.items()}


def compare_runs(run_dirs) -> list[dict]:
    """One summary row per run: final error, evaluation count, failure flags."""
    run_dirs = list(run_dirs)
    if not run_dirs:
        raise ValueError("compare_runs needs at least one run directory")
    rows = []
    for run_dir in run_dirs:
        diag = read_diagnostics(run_dir)
        manifest_path = Path(run_dir) / "manifest.txt"
        label = Path(run_dir).name
        thresholds = dict(skew=10.0, kurt=100.0, duration=1000, slack=0.05)
        if manifest_path.exists():
            from .config import load_config

            cfg = load_config(manifest_path)
            label = cfg["run.preset"] or label
            thresholds = dict(
                skew=cfg["diagnostics.skew_threshold"],
                kurt=cfg["diagnostics.kurt_threshold"],
                duration=cfg["diagnostics.min_duration"],
                slack=cfg["diagnostics.error_slack"],
            )
        report = failure_indicator(
            diag["skewness"],
            diag["kurtosis"],
            diag["rel_l2_pct"],
            diag["iteration"],
            skew_threshold=thresholds["skew"],
            kurt_threshold=thresholds["kurt"],
            min_duration=thresholds["duration"],
            error_slack=thresholds["slack"],
        )
        rows.append(
            {
                "run": str(run_dir),
                "label": label,
                "final_rel_l2_pct": float(diag["rel_l2_pct"][-1]),
                "eval_count": int(diag["eval_count"][-1]),
                "failure_windows": len(report.windows),
            }
        )
    return rows


def run_lab(objective_name, n_points, iterations, seed, out_dir, dense_size=100_000, record_every=10):
    """Frozen-fitness accumulation run; writes the series and dense p-norm levels."""
    from .lab import frozen_rrr_run, lp_norm
    from .objectives import get_objective

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    objective = get_objective(objective_name)
    seq = np.random.SeedSequence(seed).spawn(2)
    rng = np.random.Generator(np.random.PCG64(seq[0]))
    result = frozen_rrr_run(objective, n_points, iterations, rng, record_every=record_every)

    dense = objective.domain.uniform(dense_size, np.random.Generator(np.random.PCG64(seq[1])))
    dense_values = objective.fitness(dense)
    with open(out / "lab_series.csv", "w") as fh:
        fh.write("iteration,retained_mean,retained_size\n")
        for it, mean, size in zip(result.iterations, result.retained_mean, result.retained_size):
            fh.write(f"{it},{mean!r},{size}\n")
    with open(out / "lp_levels.csv", "w") as fh:
        fh.write("p,level\n")
        for p in (2, 4, 6):
            fh.write(f"{p},{lp_norm(dense_values, p)!r}\n")
        fh.write(f"inf,{float(dense_values.max())!r}\n")
    return result
