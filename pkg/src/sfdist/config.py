"""
Experiment configuration files (TOML).

Agents are numbered from 1 in configuration files, as in the edge lists of
the bundled presets; internally they are 0-based.  Unknown keys are
rejected, and every error names the offending key path.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import tomli_w

from . import network
from .engine import RunConfig
from .perturbation import DifferenceKind, DitherDistribution
from .problem import (
    NoiseModel,
    ProblemSpec,
    constraint_from_dict,
    find_feasible_point,
    objective_from_dict,
)
from .schedules import ScheduleParams, validate_h4

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "RunOptions",
    "OutputOptions",
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "write_config",
    "dump_config",
    "preset_path",
    "PRESETS",
]

PRESETS = ("sec5",)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` is the dotted path of the culprit."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class RunOptions:
    algorithm: str = "sf"
    difference: str = "two-sided"
    iterations: int = 500
    seeds: Tuple[int, ...] = (0,)
    baseline_exponent: float = 0.5
    dense_until: int = 1000
    per_decade: int = 50
    initial: Optional[tuple] = None
    early_stop: Optional[float] = None


@dataclass(frozen=True)
class OutputOptions:
    directory: str = "out"
    plots: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    problem: ProblemSpec
    dither: DitherDistribution
    topology: network.TopologySchedule
    schedule: ScheduleParams
    run: RunOptions = field(default_factory=RunOptions)
    output: OutputOptions = field(default_factory=OutputOptions)

    def run_config(self, seed: Optional[int] = None) -> RunConfig:
        r = self.run
        return RunConfig(
            problem=self.problem,
            topology=self.topology,
            schedule=self.schedule,
            dither=self.dither,
            difference=DifferenceKind(r.difference),
            algorithm=r.algorithm,
            iterations=r.iterations,
            seed=self.run.seeds[0] if seed is None else seed,
            initial=r.initial,
            baseline_exponent=r.baseline_exponent,
            dense_until=r.dense_until,
            per_decade=r.per_decade,
            early_stop=r.early_stop,
        )

    def with_run(self, **changes) -> "ExperimentConfig":
        return replace(self, run=replace(self.run, **changes))

    def with_output(self, **changes) -> "ExperimentConfig":
        return replace(self, output=replace(self.output, **changes))


# -- parsing ------------------------------------------------------------------

_TOP = {"problem", "topology", "schedule", "run", "output"}
_PROBLEM = {"dimension", "noise", "dither", "agents", "optimum"}
_AGENT = {"objective", "constraint"}
_TOPOLOGY = {"weights", "kappa", "pattern", "matrices", "eta_floor"}
_SCHEDULE = {"epsilon", "delta", "scale_iota", "scale_c"}
_RUN = {
    "algorithm",
    "difference",
    "iterations",
    "seed",
    "seeds",
    "baseline_exponent",
    "dense_until",
    "per_decade",
    "initial",
    "early_stop",
}
_OUTPUT = {"directory", "plots"}


def _table(d, key, allowed, required=()):
    if not isinstance(d, dict):
        raise ConfigError(key, "expected a table")
    for k in d:
        if k not in allowed:
            raise ConfigError(f"{key}.{k}" if key else k, "unknown key")
    for k in required:
        if k not in d:
            raise ConfigError(f"{key}.{k}" if key else k, "missing required key")
    return d


def _build(key, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError, OSError) as exc:
        raise ConfigError(key, str(exc)) from None


def _parse_problem(d):
    _table(d, "problem", _PROBLEM, ("agents",))
    agents = d["agents"]
    if not isinstance(agents, list) or not agents:
        raise ConfigError("problem.agents", "expected a non-empty array of tables")
    objectives, constraints = [], []
    for i, a in enumerate(agents):
        key = f"problem.agents[{i}]"
        _table(a, key, _AGENT, ("objective", "constraint"))
        objectives.append(_build(f"{key}.objective", objective_from_dict, a["objective"]))
        constraints.append(_build(f"{key}.constraint", constraint_from_dict, a["constraint"]))
    dims = [o.dim for o in objectives] + [c.dim for c in constraints]
    expected = d.get("dimension", dims[0])
    for i, (o, c) in enumerate(zip(objectives, constraints)):
        if o.dim != expected or c.dim != expected:
            raise ConfigError(
                f"problem.agents[{i}]",
                f"dimension mismatch (objective {o.dim}, constraint {c.dim}, expected {expected})",
            )
    noise = _build("problem.noise", lambda n: NoiseModel(**_table(n, "problem.noise", {"kind", "sigma"})), d.get("noise", {}))
    dither = _build(
        "problem.dither",
        lambda n: DitherDistribution(**_table(n, "problem.dither", {"kind", "lo", "hi"})),
        d.get("dither", {}),
    )
    problem = _build("problem", ProblemSpec, objectives, constraints, noise, d.get("optimum"))
    return problem, dither


def _parse_topology(d, n, base):
    _table(d, "topology", _TOPOLOGY)
    rule = d.get("weights", "metropolis")
    kappa = d.get("kappa", 1)
    if rule == "explicit":
        if "matrices" not in d:
            raise ConfigError("topology.matrices", "explicit weights need matrices")
        mats = []
        for j, W in enumerate(d["matrices"]):
            if isinstance(W, str):
                path = Path(W) if base is None else base / W
                W = _build(f"topology.matrices[{j}]", network.load_matrix, path)
            mats.append(W)
        return _build(
            "topology",
            network.TopologySchedule,
            n=n,
            rule=rule,
            kappa=kappa,
            matrices=tuple(mats),
            eta_floor=d.get("eta_floor"),
        )
    if "pattern" not in d:
        raise ConfigError("topology.pattern", "missing required key")
    pattern = []
    for j, E in enumerate(d["pattern"]):
        edges = []
        for e in E:
            if len(e) != 2 or not all(isinstance(v, int) and 1 <= v <= n for v in e):
                raise ConfigError(f"topology.pattern[{j}]", f"edge {e} must be a pair of agent labels in 1..{n}")
            edges.append((e[0] - 1, e[1] - 1))
        pattern.append(tuple(edges))
    return _build(
        "topology",
        network.TopologySchedule,
        n=n,
        pattern=tuple(pattern),
        rule=rule,
        kappa=kappa,
        eta_floor=d.get("eta_floor"),
    )


_ALGORITHMS = ("sf", "baseline")


def _parse_run(d):
    _table(d, "run", _RUN)
    algorithm = d.get("algorithm", "sf")
    if algorithm not in _ALGORITHMS:
        raise ConfigError("run.algorithm", f"expected one of {_ALGORITHMS}")
    difference = d.get("difference", "two-sided")
    try:
        DifferenceKind(difference)
    except ValueError:
        raise ConfigError("run.difference", f"expected one of {[k.value for k in DifferenceKind]}") from None
    seed = d.get("seed", 0)
    seeds = d.get("seeds", 1)
    if isinstance(seeds, int):
        if seeds < 1:
            raise ConfigError("run.seeds", "seed count must be >= 1")
        seeds = tuple(range(seed, seed + seeds))
    else:
        seeds = tuple(int(s) for s in seeds)
        if not seeds:
            raise ConfigError("run.seeds", "empty seed list")
    if any(s < 0 for s in seeds):
        raise ConfigError("run.seeds", "seeds must be non-negative")
    iterations = d.get("iterations", 500)
    if not isinstance(iterations, int) or iterations < 0:
        raise ConfigError("run.iterations", "must be a non-negative integer")
    initial = d.get("initial")
    return RunOptions(
        algorithm=algorithm,
        difference=difference,
        iterations=iterations,
        seeds=seeds,
        baseline_exponent=float(d.get("baseline_exponent", 0.5)),
        dense_until=int(d.get("dense_until", 1000)),
        per_decade=int(d.get("per_decade", 50)),
        initial=None if initial is None else tuple(tuple(float(v) for v in row) for row in initial),
        early_stop=d.get("early_stop"),
    )


def parse_config(data: dict, base: Optional[Path] = None, validate: bool = True) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a parsed TOML document."""
    _table(data, "", _TOP, ("problem", "topology", "schedule"))
    problem, dither = _parse_problem(data["problem"])
    topology = _parse_topology(data["topology"], problem.n, base)
    sched_d = _table(data["schedule"], "schedule", _SCHEDULE)
    schedule = _build("schedule", ScheduleParams, **sched_d)
    run = _parse_run(data.get("run", {}))
    out_d = _table(data.get("output", {}), "output", _OUTPUT)
    output = OutputOptions(directory=str(out_d.get("directory", "out")), plots=bool(out_d.get("plots", False)))
    cfg = ExperimentConfig(problem, dither, topology, schedule, run, output)
    if run.initial is not None:
        x0 = np.asarray(run.initial)
        if x0.shape != (problem.n, problem.dim):
            raise ConfigError("run.initial", f"expected {problem.n} points of dimension {problem.dim}")
    if validate:
        validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig):
    """Raise :class:`ConfigError` on the first failed check."""
    for key, rep in (("topology", network.validate(cfg.topology)), ("schedule", validate_h4(cfg.schedule))):
        bad = rep.failures()
        if bad:
            raise ConfigError(key, "; ".join(str(c) for c in bad))
    try:
        find_feasible_point(cfg.problem.constraints)
    except ValueError as exc:
        raise ConfigError("problem.agents", str(exc)) from None
    try:
        cfg.run_config().validate()
    except ValueError as exc:
        raise ConfigError("run.initial", str(exc)) from None


def preset_path(name: str) -> Path:
    stem = name[:-5] if name.endswith(".toml") else name
    if stem not in PRESETS:
        raise FileNotFoundError(f"no bundled preset named {name!r}")
    return Path(str(resources.files("sfdist") / "presets" / f"{stem}.toml"))


def load_config(path, validate: bool = True) -> ExperimentConfig:
    """Load a configuration file, or a bundled preset by name (``sec5``)."""
    p = Path(path)
    if not p.exists():
        try:
            p = preset_path(str(path))
        except FileNotFoundError:
            raise FileNotFoundError(f"configuration file {path} not found") from None
    try:
        with open(p, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("", f"{p}: TOML parse error: {exc}") from None
    return parse_config(data, base=p.parent, validate=validate)


# -- writing ------------------------------------------------------------------


def _agent_label_pattern(topology):
    return [[[i + 1, j + 1] for i, j in E] for E in topology.pattern]


def config_to_dict(cfg: ExperimentConfig) -> dict:
    p = cfg.problem
    problem = {
        "dimension": p.dim,
        "noise": p.noise.to_dict(),
        "dither": cfg.dither.to_dict(),
        "agents": [
            {"objective": o.to_dict(), "constraint": c.to_dict()} for o, c in zip(p.objectives, p.constraints)
        ],
    }
    if p.optimum is not None:
        problem["optimum"] = p.optimum.tolist()
    t = cfg.topology
    topology = {"weights": t.rule, "kappa": t.kappa}
    if t.rule == "explicit":
        topology["matrices"] = [[list(r) for r in W] for W in t.matrices]
    else:
        topology["pattern"] = _agent_label_pattern(t)
    if t.eta_floor is not None:
        topology["eta_floor"] = t.eta_floor
    r = cfg.run
    run = {
        "algorithm": r.algorithm,
        "difference": r.difference,
        "iterations": r.iterations,
        "seeds": list(r.seeds),
        "baseline_exponent": r.baseline_exponent,
        "dense_until": r.dense_until,
        "per_decade": r.per_decade,
    }
    if r.initial is not None:
        run["initial"] = [list(row) for row in r.initial]
    if r.early_stop is not None:
        run["early_stop"] = r.early_stop
    return {
        "problem": problem,
        "topology": topology,
        "schedule": cfg.schedule.to_dict(),
        "run": run,
        "output": {"directory": cfg.output.directory, "plots": cfg.output.plots},
    }


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def write_config(cfg: ExperimentConfig, path) -> Path:
    path = Path(path)
    path.write_text(dump_config(cfg), encoding="utf-8")
    return path
