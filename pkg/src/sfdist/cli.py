"""
Command-line driver: load a configuration, run every seed, write CSVs.

Output files (all floats printed with 17 significant digits)::

    trajectory_seed{seed}.csv  k,agent,dim0..dim{m-1},consensus_error,sq_dist
    aggregate.csv              k,mean_sq_dist,se_sq_dist,mean_consensus_error,se_consensus_error
    comparison.csv             k,sq_dist_a,sq_dist_b
    validation.txt             topology and schedule reports

Trajectory rows are per agent; ``consensus_error`` and ``sq_dist`` there are
the agent's own terms, so summing them over agents gives the swarm totals.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import network
from .analysis import TrajectoryMetrics, aggregate_over_seeds, fit_rate
from .config import ConfigError, ExperimentConfig, load_config, validate_config
from .engine import EngineError, RunRecord, run_seeds
from .schedules import predicted_rate, validate_h4

__all__ = [
    "OutputBundle",
    "ALGORITHM_CHOICES",
    "run_experiment",
    "compare",
    "write_trajectory_csv",
    "write_aggregate_csv",
    "validation_text",
    "main",
]

ALGORITHM_CHOICES = {
    "sf-two": ("sf", "two-sided"),
    "sf-left": ("sf", "left-sided"),
    "sf-right": ("sf", "right-sided"),
    "baseline": ("baseline", "two-sided"),
}

EXIT_OK, EXIT_CONFIG, EXIT_ENGINE = 0, 2, 3


def _fmt(v) -> str:
    return format(float(v), ".17g")


@dataclass
class OutputBundle:
    directory: Path
    trajectories: List[Path]
    aggregate: Path
    validation: Path
    records: List[RunRecord]
    metrics: TrajectoryMetrics
    figures: List[Path] = field(default_factory=list)
    summary: str = ""


def write_trajectory_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    K, n, m = record.iterates.shape
    mean = record.iterates.mean(axis=1, keepdims=True)
    cons = np.sum((record.iterates - mean) ** 2, axis=-1)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "agent", *(f"dim{d}" for d in range(m)), "consensus_error", "sq_dist"])
        for r, k in enumerate(record.rounds):
            for i in range(n):
                w.writerow(
                    [
                        int(k),
                        i + 1,
                        *(_fmt(v) for v in record.iterates[r, i]),
                        _fmt(cons[r, i]),
                        _fmt(record.agent_sq_dist[r, i]),
                    ]
                )
    return path


def write_aggregate_csv(metrics: TrajectoryMetrics, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "mean_sq_dist", "se_sq_dist", "mean_consensus_error", "se_consensus_error"])
        for r, k in enumerate(metrics.rounds):
            w.writerow(
                [
                    int(k),
                    _fmt(metrics.sq_dist[r]),
                    _fmt(metrics.se_sq_dist[r]),
                    _fmt(metrics.consensus_error[r]),
                    _fmt(metrics.se_consensus_error[r]),
                ]
            )
    return path


def validation_text(cfg: ExperimentConfig) -> str:
    reports = [network.validate(cfg.topology), validate_h4(cfg.schedule)]
    text = "\n".join(str(r) for r in reports)
    if all(r.ok for r in reports):
        text += f"\npredicted mean-square rate exponent: {predicted_rate(cfg.schedule):.6g}"
    return text + "\n"


def _summary(cfg: ExperimentConfig, metrics: TrajectoryMetrics) -> str:
    r = cfg.run
    label = r.algorithm if r.algorithm == "baseline" else f"sf ({r.difference})"
    lines = [
        f"{label}: {len(r.seeds)} seed(s), {metrics.rounds[-1]} rounds",
        f"  final mean sum of squared distances: {metrics.sq_dist[-1]:.6g} (se {metrics.se_sq_dist[-1]:.3g})",
        f"  final mean consensus error:          {metrics.consensus_error[-1]:.6g}",
    ]
    T = int(metrics.rounds[-1])
    window = (max(10, T // 10), T)
    if window[0] < window[1]:
        try:
            fit = fit_rate(metrics, window)
            lines.append(f"  fitted log-log slope on [{fit.k_lo}, {fit.k_hi}]: {fit.slope:.4f}")
        except ValueError:
            pass
    return "\n".join(lines)


def run_experiment(cfg: ExperimentConfig, out=None, echo=print) -> OutputBundle:
    """Run all seeds of ``cfg`` and write the output bundle.

    ``out`` overrides ``cfg.output.directory``.  Seeds are advanced together
    as one batch; results are identical to running them one at a time.
    """
    directory = Path(out if out is not None else cfg.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    validation = directory / "validation.txt"
    validation.write_text(validation_text(cfg), encoding="utf-8")

    rc = cfg.run_config()
    records = run_seeds(rc, cfg.run.seeds, reference=rc.reference())
    paths = [write_trajectory_csv(rec, directory / f"trajectory_seed{rec.seed}.csv") for rec in records]
    metrics = aggregate_over_seeds(records)
    aggregate = write_aggregate_csv(metrics, directory / "aggregate.csv")

    figures = []
    if cfg.output.plots:
        from . import plotting

        figures.append(plotting.plot_trajectories(records[0], directory / f"trajectory_seed{records[0].seed}.png", records[0].reference))
        figures.append(plotting.plot_aggregate(metrics, directory / "aggregate.png"))
        figures.append(plotting.plot_agent_sq_dist(metrics, directory / "agent_sq_dist.png"))

    summary = _summary(cfg, metrics)
    if echo is not None:
        echo(summary)
    return OutputBundle(directory, paths, aggregate, validation, records, metrics, figures, summary)


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode("utf-8")).hexdigest()


def compare(cfg_a: ExperimentConfig, cfg_b: ExperimentConfig, out, plots: bool = False, metrics_a=None):
    """Aggregate squared distance of two runs of the same problem, aligned by round.

    ``metrics_a`` reuses an already computed aggregate for ``cfg_a``.
    Returns ``(path, rounds, sq_dist_a, sq_dist_b)``.
    """
    if _digest(cfg_a.problem.to_dict()) != _digest(cfg_b.problem.to_dict()):
        raise ValueError("cannot compare runs of different problems (problem fingerprints differ)")
    if _digest(cfg_a.topology.to_dict()) != _digest(cfg_b.topology.to_dict()):
        raise ValueError("cannot compare runs on different topologies (topology fingerprints differ)")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ma = metrics_a if metrics_a is not None else aggregate_over_seeds(run_seeds(cfg_a.run_config(), cfg_a.run.seeds))
    mb = aggregate_over_seeds(run_seeds(cfg_b.run_config(), cfg_b.run.seeds))
    rounds, ia, ib = np.intersect1d(ma.rounds, mb.rounds, return_indices=True)
    a, b = ma.sq_dist[ia], mb.sq_dist[ib]
    path = out / "comparison.csv"
    with open(path, "w", newline="", encoding="ascii") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "sq_dist_a", "sq_dist_b"])
        for k, va, vb in zip(rounds, a, b):
            w.writerow([int(k), _fmt(va), _fmt(vb)])
    if plots:
        from . import plotting

        plotting.plot_comparison(rounds, a, b, out / "comparison.png", (_label(cfg_a), _label(cfg_b)))
    return path, rounds, a, b


def _label(cfg):
    r = cfg.run
    return "baseline" if r.algorithm == "baseline" else f"sf {r.difference}"


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.algorithm is not None:
        algorithm, diff = ALGORITHM_CHOICES[args.algorithm]
        changes.update(algorithm=algorithm, difference=diff)
    if args.iterations is not None:
        changes["iterations"] = args.iterations
    first = cfg.run.seeds[0] if args.seed is None else args.seed
    if args.seeds is not None:
        changes["seeds"] = tuple(range(first, first + args.seeds))
    elif args.seed is not None:
        changes["seeds"] = (args.seed,)
    if changes:
        cfg = cfg.with_run(**changes)
    if args.out is not None:
        cfg = cfg.with_output(directory=args.out)
    if args.plot:
        cfg = cfg.with_output(plots=True)
    return cfg


def _parser():
    p = argparse.ArgumentParser(
        prog="sfdist",
        description="Simulate distributed subgradient-free optimization over a time-varying network.",
    )
    p.add_argument("--config", required=True, help="TOML configuration file or bundled preset name (sec5)")
    p.add_argument("--seed", type=int, help="first seed (overrides the configuration)")
    p.add_argument("--seeds", type=int, help="number of consecutive seeds to run")
    p.add_argument("--algorithm", choices=sorted(ALGORITHM_CHOICES))
    p.add_argument("--iterations", type=int, metavar="T")
    p.add_argument("--out", metavar="DIR", help="output directory")
    p.add_argument("--validate-only", action="store_true", help="check the configuration and exit")
    p.add_argument(
        "--compare",
        metavar="OTHER",
        help="second run for comparison.csv: an algorithm name or another configuration",
    )
    p.add_argument("--plot", action="store_true", help="also render PNG figures")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.seeds is not None and args.seeds < 1:
        print("error: --seeds must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.iterations is not None and args.iterations < 0:
        print("error: --iterations must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _apply_overrides(load_config(args.config, validate=False), args)
        print(validation_text(cfg), end="")
        validate_config(cfg)
        if args.validate_only:
            return EXIT_OK
        other = None
        if args.compare is not None:
            if args.compare in ALGORITHM_CHOICES:
                algorithm, diff = ALGORITHM_CHOICES[args.compare]
                other = cfg.with_run(algorithm=algorithm, difference=diff)
            else:
                other = _apply_overrides(load_config(args.compare), _without_algorithm(args))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        bundle = run_experiment(cfg)
        print(f"wrote {len(bundle.trajectories)} trajectory file(s) to {bundle.directory}")
        if other is not None:
            path, *_ = compare(cfg, other, bundle.directory, plots=cfg.output.plots, metrics_a=bundle.metrics)
            print(f"wrote {path}")
    except EngineError as exc:
        print(f"engine error: {exc}", file=sys.stderr)
        return EXIT_ENGINE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def _without_algorithm(args):
    ns = argparse.Namespace(**vars(args))
    ns.algorithm = None
    return ns


if __name__ == "__main__":
    sys.exit(main())
