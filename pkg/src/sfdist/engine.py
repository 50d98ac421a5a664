"""
Synchronous simulation of the distributed subgradient-free method and of
the distributed stochastic subgradient projection baseline.

One iteration ``k`` (1-based) of the subgradient-free method, for every
agent ``i``:

1. mix neighbour states, ``x_i = sum_j W_k[i, j] xi_j``;
2. draw a dither and form a randomized difference of ``f^i`` at ``x_i``
   with gain ``c_k``;
3. descend, ``x_i - iota_k d_i``;
4. project back onto ``X_i``.

Runs over several seeds are batched along a leading axis.  Randomness comes
from keyed streams (:mod:`sfdist.streams`), so batching, the order in which
agents are processed, and the chunking of stream draws never change the
result.  Snapshot ``k`` in a record is the state after ``k`` iterations;
``k = 0`` is the initialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import network
from .perturbation import (
    DifferenceKind,
    DitherDistribution,
    _observation_points,
    difference,
)
from .problem import ProblemSpec
from .schedules import ScheduleParams, dither_gain, step_size, validate_h4
from .streams import StreamBank, derive_stream, open_uniform

__all__ = [
    "EngineError",
    "SwarmState",
    "RunConfig",
    "RunRecord",
    "derive_stream",
    "snapshot_rounds",
    "initial_state",
    "step_sf",
    "step_baseline",
    "run",
    "run_seeds",
]

ALGORITHMS = ("sf", "baseline")


class EngineError(RuntimeError):
    """Raised when an iterate stops being finite."""

    def __init__(self, message, round=None, seed=None):
        super().__init__(message)
        self.round = round
        self.seed = seed


@dataclass
class SwarmState:
    """States of all agents after ``k`` iterations, with the last dithers and differences."""

    k: int
    iterates: np.ndarray
    dithers: Optional[np.ndarray] = None
    differences: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RunConfig:
    problem: ProblemSpec
    topology: network.TopologySchedule
    schedule: ScheduleParams = field(default_factory=ScheduleParams)
    dither: DitherDistribution = field(default_factory=DitherDistribution)
    difference: DifferenceKind = DifferenceKind.TWO_SIDED
    algorithm: str = "sf"
    iterations: int = 500
    seed: int = 0
    initial: Optional[tuple] = None
    baseline_exponent: float = 0.5
    dense_until: int = 1000
    per_decade: int = 50
    early_stop: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "difference", DifferenceKind(self.difference))
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.topology.n != self.problem.n:
            raise ValueError(f"topology has {self.topology.n} agents, problem has {self.problem.n}")
        if self.initial is not None:
            x0 = np.array(self.initial, dtype=np.float64).reshape(self.problem.n, self.problem.dim)
            object.__setattr__(self, "initial", tuple(map(tuple, x0.tolist())))

    def validate(self):
        """Raise ``ValueError`` listing every failed precondition."""
        problems = []
        for rep in (network.validate(self.topology), validate_h4(self.schedule)):
            problems += [f"{rep.title}: {c}" for c in rep.failures()]
        x0 = initial_state(self).iterates
        for i, cset in enumerate(self.problem.constraints):
            if not cset.contains(x0[i], tol=1e-12):
                problems.append(f"initial iterate of agent {i} lies outside its constraint set")
        if problems:
            raise ValueError("invalid run configuration:\n  " + "\n  ".join(problems))

    def canonical(self) -> dict:
        """Everything that determines a trajectory, except the seed."""
        d = {
            "problem": self.problem.to_dict(),
            "topology": self.topology.to_dict(),
            "schedule": self.schedule.to_dict(),
            "dither": self.dither.to_dict(),
            "difference": self.difference.value,
            "algorithm": self.algorithm,
            "iterations": self.iterations,
            "initial": None if self.initial is None else [list(r) for r in self.initial],
            "baseline_exponent": self.baseline_exponent,
            "snapshots": [self.dense_until, self.per_decade],
            "early_stop": self.early_stop,
        }
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def reference(self) -> np.ndarray:
        """Reference optimum for metrics: pinned if given, else solved centrally."""
        if self.problem.optimum is not None:
            return self.problem.optimum
        from .analysis import centralized_minimize

        return centralized_minimize(self.problem)


@dataclass
class RunRecord:
    """Thinned trajectory of one seed.

    ``iterates`` has shape ``(len(rounds), n, m)``; ``consensus_error`` and
    ``sq_dist`` are swarm totals, ``agent_sq_dist`` the per-agent terms.
    """

    rounds: np.ndarray
    iterates: np.ndarray
    consensus_error: np.ndarray
    sq_dist: np.ndarray
    agent_sq_dist: np.ndarray
    reference: np.ndarray
    seed: int
    fingerprint: str

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]


def snapshot_rounds(T: int, dense_until: int = 1000, per_decade: int = 50) -> np.ndarray:
    """Every round up to ``dense_until``, then ``per_decade`` log-spaced rounds per decade, plus ``T``."""
    dense = np.arange(0, min(T, dense_until) + 1)
    if T <= dense_until:
        return dense
    decades = np.log10(T / dense_until)
    count = max(int(np.ceil(decades * per_decade)), 1) + 1
    sparse = np.unique(np.round(np.logspace(np.log10(dense_until), np.log10(T), count)).astype(np.int64))
    return np.unique(np.concatenate([dense, sparse, [T]]))


def initial_state(cfg: RunConfig) -> SwarmState:
    """Configured initial iterates, else each agent's projection of the origin."""
    p = cfg.problem
    if cfg.initial is not None:
        x0 = np.array(cfg.initial, dtype=np.float64)
    else:
        x0 = np.stack([c.project(np.zeros(p.dim)) for c in p.constraints])
    return SwarmState(0, x0)


# -- per-iteration kernels (batched over a leading seed axis) ----------------


def _mix(W, xi):
    # sum over j in index order, elementwise: bitwise independent of batch size
    x = W[:, 0, None] * xi[:, 0, None, :]
    for j in range(1, W.shape[1]):
        x = x + W[:, j, None] * xi[:, j, None, :]
    return x


def _sf_kernel(cfg, xi, k, bank, order):
    p = cfg.problem
    W = network.weights_at(cfg.topology, k)
    iota = float(step_size(cfg.schedule, k))
    c = float(dither_gain(cfg.schedule, k))
    x = _mix(W, xi)
    m = p.dim
    u = open_uniform(bank.draws("dither", k)[..., :m])
    delta = cfg.dither.from_uniform(u)
    noise_words = None if p.noise.silent else bank.draws("noise", k)
    recip = 1.0 / delta
    d = np.empty_like(x)
    new = np.empty_like(x)
    points = _observation_points(cfg.difference)
    for i in order:
        obj, xi_i, dl = p.objectives[i], x[:, i, :], delta[:, i, :]
        obs = []
        for slot, sgn in enumerate(points):
            y = obj.value(xi_i + sgn * c * dl)
            if noise_words is not None:
                y = y + p.noise.from_raw(noise_words[:, i, slot])
            obs.append(y)
        d[:, i, :] = difference(cfg.difference, obs[0], obs[1], c, recip[:, i, :])
        new[:, i, :] = p.constraints[i].project(xi_i - iota * d[:, i, :])
    return new, delta, d


def _baseline_kernel(cfg, xi, k, bank, order):
    p = cfg.problem
    W = network.weights_at(cfg.topology, k)
    alpha = float(k) ** -cfg.baseline_exponent
    x = _mix(W, xi)
    noise_words = None if p.noise.silent else bank.draws("noise", k)
    g = np.empty_like(x)
    new = np.empty_like(x)
    for i in order:
        gi = p.objectives[i].subgradient(x[:, i, :])
        if noise_words is not None:
            gi = gi + p.noise.from_raw(noise_words[:, i, : p.dim])
        g[:, i, :] = gi
        new[:, i, :] = p.constraints[i].project(x[:, i, :] - alpha * gi)
    return new, None, g


def _width(cfg):
    return max(2, cfg.problem.dim)


def _bank(cfg, seeds):
    return StreamBank(seeds, cfg.problem.n, _width(cfg))


def _order(cfg, order):
    if order is None:
        return range(cfg.problem.n)
    order = list(order)
    if sorted(order) != list(range(cfg.problem.n)):
        raise ValueError("order must be a permutation of the agent indices")
    return order


def _step(kernel, state, cfg, streams, order):
    bank = streams if streams is not None else _bank(cfg, [cfg.seed])
    k = state.k + 1
    xi = np.asarray(state.iterates, dtype=np.float64)[None]
    new, delta, d = kernel(cfg, xi, k, bank, _order(cfg, order))
    return SwarmState(k, new[0], None if delta is None else delta[0], d[0])


def step_sf(state: SwarmState, cfg: RunConfig, streams: Optional[StreamBank] = None, order=None) -> SwarmState:
    """Advance the subgradient-free method by one iteration.

    ``streams`` must be a single-seed :class:`StreamBank`; by default one is
    built from ``cfg.seed``.  ``order`` permutes the agent processing order.
    """
    return _step(_sf_kernel, state, cfg, streams, order)


def step_baseline(state: SwarmState, cfg: RunConfig, streams: Optional[StreamBank] = None, order=None) -> SwarmState:
    """Advance the projected stochastic subgradient baseline by one iteration."""
    return _step(_baseline_kernel, state, cfg, streams, order)


def _metrics(xi, ref):
    mean = xi.mean(axis=-2, keepdims=True)
    cons = np.sum((xi - mean) ** 2, axis=(-2, -1))
    agent = np.sum((xi - ref) ** 2, axis=-1)
    return cons, agent


def run_seeds(cfg: RunConfig, seeds: Sequence[int], order=None, reference=None) -> list:
    """Run ``cfg`` once per seed, batched; returns one :class:`RunRecord` per seed."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        return []
    S, T = len(seeds), cfg.iterations
    kernel = _sf_kernel if cfg.algorithm == "sf" else _baseline_kernel
    order = _order(cfg, order)
    ref = cfg.reference() if reference is None else np.asarray(reference, dtype=np.float64)
    bank = _bank(cfg, seeds)
    fp = cfg.fingerprint()

    xi = np.repeat(initial_state(cfg).iterates[None], S, axis=0)
    snaps = snapshot_rounds(T, cfg.dense_until, cfg.per_decade)
    wanted = np.zeros(T + 1, dtype=bool)
    wanted[snaps] = True
    kept_rounds, kept = [0], [xi.copy()]
    for k in range(1, T + 1):
        new, _, _ = kernel(cfg, xi, k, bank, order)
        if not np.all(np.isfinite(new)):
            bad = np.flatnonzero(~np.all(np.isfinite(new), axis=(1, 2)))[0]
            raise EngineError(
                f"non-finite iterate at round {k} (seed {seeds[bad]}); check schedule scaling",
                round=k,
                seed=seeds[bad],
            )
        stop = cfg.early_stop is not None and k >= 2 and _converged(xi, new, cfg.early_stop)
        xi = new
        if wanted[k] or stop:
            kept_rounds.append(k)
            kept.append(xi.copy())
        if stop:
            break

    rounds = np.array(kept_rounds, dtype=np.int64)
    traj = np.stack(kept, axis=1)  # (S, K, n, m)
    cons, agent = _metrics(traj, ref)
    return [
        RunRecord(
            rounds=rounds,
            iterates=traj[s],
            consensus_error=cons[s],
            sq_dist=agent[s].sum(axis=-1),
            agent_sq_dist=agent[s],
            reference=np.array(ref),
            seed=seeds[s],
            fingerprint=fp,
        )
        for s in range(S)
    ]


def _converged(old, new, tol):
    cons, _ = _metrics(new, 0.0)
    moved = np.max(np.abs(new - old))
    return bool(np.all(cons < tol) and moved < tol)


def run(cfg: RunConfig, order=None, reference=None) -> RunRecord:
    """Run ``cfg`` for ``cfg.iterations`` rounds with ``cfg.seed``."""
    return run_seeds(cfg, [cfg.seed], order=order, reference=reference)[0]


def with_overrides(cfg: RunConfig, **changes) -> RunConfig:
    return replace(cfg, **changes)
