"""
Time-varying communication topology.

A :class:`TopologySchedule` cycles through a fixed list of edge sets,
``E_k = pattern[k mod p]``, and turns each into a doubly stochastic weight
matrix.  Edges are undirected pairs of 0-based agent indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy.sparse.csgraph import connected_components

from .validation import ValidationReport

__all__ = [
    "TopologySchedule",
    "TransitionProduct",
    "metropolis_weights",
    "uniform_neighbor_weights",
    "weights_at",
    "validate",
    "transition_product",
    "mixing_deviation",
    "mixing_sequence",
    "load_matrix",
    "five_agent_cycle",
]

WEIGHT_RULES = ("metropolis", "uniform-neighbor", "explicit")


def _adjacency(n, edges):
    A = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) outside 0..{n - 1}")
        if i != j:
            A[i, j] = A[j, i] = True
    return A


def metropolis_weights(n: int, edges) -> np.ndarray:
    """``w_ij = 1/(1 + max(d_i, d_j))`` on edges, remainder on the diagonal."""
    A = _adjacency(n, edges)
    deg = A.sum(axis=1)
    W = np.where(A, 1.0 / (1.0 + np.maximum.outer(deg, deg)), 0.0)
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


def uniform_neighbor_weights(n: int, edges) -> np.ndarray:
    """Max-degree rule: every edge gets ``1/(1 + d_max)``."""
    A = _adjacency(n, edges)
    dmax = A.sum(axis=1).max() if n else 0
    W = np.where(A, 1.0 / (1.0 + dmax), 0.0)
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


@dataclass(frozen=True)
class TopologySchedule:
    n: int
    pattern: Tuple[Tuple[Tuple[int, int], ...], ...] = ((),)
    rule: str = "metropolis"
    kappa: int = 1
    matrices: Optional[tuple] = None
    eta_floor: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one agent")
        if self.rule not in WEIGHT_RULES:
            raise ValueError(f"unknown weight rule {self.rule!r}")
        if self.kappa < 1:
            raise ValueError("kappa must be >= 1")
        if self.rule == "explicit":
            if not self.matrices:
                raise ValueError("explicit rule needs matrices")
            mats = tuple(np.array(W, dtype=np.float64) for W in self.matrices)
            for W in mats:
                if W.shape != (self.n, self.n):
                    raise ValueError(f"explicit matrix shape {W.shape} != ({self.n}, {self.n})")
                _check_explicit(W, self.eta_floor)
            object.__setattr__(self, "matrices", tuple(tuple(map(tuple, W.tolist())) for W in mats))
            pattern = tuple(
                tuple((int(i), int(j)) for i, j in zip(*np.nonzero(W)) if i != j) for W in mats
            )
            object.__setattr__(self, "pattern", pattern)
        else:
            pattern = tuple(tuple(tuple(int(v) for v in e) for e in E) for E in self.pattern)
            if not pattern:
                raise ValueError("pattern needs at least one edge set")
            for E in pattern:
                _adjacency(self.n, E)
            object.__setattr__(self, "pattern", pattern)

    @property
    def period(self) -> int:
        return len(self.pattern)

    @cached_property
    def _weights(self):
        if self.rule == "explicit":
            mats = tuple(np.array(W) for W in self.matrices)
        else:
            build = metropolis_weights if self.rule == "metropolis" else uniform_neighbor_weights
            mats = tuple(build(self.n, E) for E in self.pattern)
        for W in mats:
            W.setflags(write=False)
        return mats

    @property
    def eta(self) -> float:
        """Weight floor: user-supplied, else the smallest positive entry over one period."""
        if self.eta_floor is not None:
            return float(self.eta_floor)
        return float(min(W[W > 0].min() for W in self._weights))

    def edges_at(self, k: int):
        return self.pattern[k % self.period]

    def graph_at(self, k: int) -> np.ndarray:
        """Boolean matrix with ``[i, j]`` set when agent ``i`` hears agent ``j`` in round ``k``."""
        if self.rule == "explicit":
            G = self._weights[k % self.period] > 0
            np.fill_diagonal(G, False)
            return G
        return _adjacency(self.n, self.edges_at(k))

    def to_dict(self):
        d = {"n": self.n, "rule": self.rule, "kappa": self.kappa}
        if self.rule == "explicit":
            d["matrices"] = [[list(r) for r in W] for W in self.matrices]
        else:
            d["pattern"] = [[list(e) for e in E] for E in self.pattern]
        if self.eta_floor is not None:
            d["eta_floor"] = self.eta_floor
        return d


def _check_explicit(W, eta):
    if np.any(W < 0):
        raise ValueError("explicit weight matrix has negative entries")
    if not (np.allclose(W.sum(0), 1, rtol=0, atol=1e-12) and np.allclose(W.sum(1), 1, rtol=0, atol=1e-12)):
        raise ValueError("explicit weight matrix is not doubly stochastic")
    if eta is not None:
        pos = W[W > 0]
        if np.any(np.diag(W) < eta) or (pos.size and pos.min() < eta):
            raise ValueError(f"explicit weight matrix violates weight floor {eta}")


def weights_at(sched: TopologySchedule, k: int) -> np.ndarray:
    """Weight matrix of round ``k`` (1-based)."""
    if k < 1:
        raise ValueError("rounds are 1-based; got k < 1")
    return sched._weights[k % sched.period]


def validate(sched: TopologySchedule) -> ValidationReport:
    """Check weight floor, double stochasticity and joint connectivity over one period."""
    rep = ValidationReport("communication topology")
    p, n, eta = sched.period, sched.n, sched.eta
    # rounds k and k+p share a matrix, so rounds 1..p cover every distinct case
    rounds = range(1, p + 1)

    bad = None
    for k in rounds:
        W = weights_at(sched, k)
        A = sched.graph_at(k)
        if np.any(np.diag(W) < eta - 1e-15) or np.any(W[A] < eta - 1e-15):
            bad = k
            break
    rep.add("(a) self and neighbour weights >= eta", bad is None, f"eta = {eta:.6g}", bad)

    bad = None
    for k in rounds:
        W = weights_at(sched, k)
        if (
            np.any(W < 0)
            or np.max(np.abs(W.sum(0) - 1)) > 1e-12
            or np.max(np.abs(W.sum(1) - 1)) > 1e-12
        ):
            bad = k
            break
    rep.add("(b) doubly stochastic", bad is None, "", bad)

    bad = None
    for k in rounds:
        union = np.zeros((n, n), dtype=bool)
        for t in range(k, k + sched.kappa):
            union |= sched.graph_at(t)
        ncomp, _ = connected_components(union, directed=True, connection="strong")
        if ncomp != 1:
            bad = k
            break
    rep.add(
        "(c) union of kappa consecutive graphs strongly connected",
        bad is None,
        f"kappa = {sched.kappa}",
        bad,
    )
    return rep


@dataclass(frozen=True)
class TransitionProduct:
    """``W_k W_{k-1} ... W_s``."""

    k: int
    s: int
    matrix: np.ndarray


def transition_product(sched: TopologySchedule, k: int, s: int) -> TransitionProduct:
    if k < s:
        raise ValueError(f"transition product needs k >= s, got k={k}, s={s}")
    if s < 1:
        raise ValueError("rounds are 1-based; got s < 1")
    P = weights_at(sched, s).copy()
    for t in range(s + 1, k + 1):
        P = weights_at(sched, t) @ P
    return TransitionProduct(k, s, P)


def mixing_deviation(sched: TopologySchedule, k: int, s: int) -> float:
    """``max_ij |[W_k ... W_s]_ij - 1/n|``."""
    P = transition_product(sched, k, s).matrix
    return float(np.max(np.abs(P - 1.0 / sched.n)))


def mixing_sequence(sched: TopologySchedule, s: int, k_max: int) -> np.ndarray:
    """``mixing_deviation(k, s)`` for ``k = s..k_max`` in one pass."""
    if k_max < s:
        raise ValueError("k_max must be >= s")
    out = np.empty(k_max - s + 1)
    P = np.eye(sched.n)
    for idx, k in enumerate(range(s, k_max + 1)):
        P = weights_at(sched, k) @ P
        out[idx] = np.max(np.abs(P - 1.0 / sched.n))
    return out


def load_matrix(path) -> np.ndarray:
    """Read a whitespace-separated square matrix, one row per line."""
    W = np.loadtxt(path, dtype=np.float64, ndmin=2)
    if W.shape[0] != W.shape[1]:
        raise ValueError(f"{path}: matrix is not square ({W.shape})")
    return W


# agents 1..5 relabelled 0..4
FIVE_AGENT_PATTERN = (
    ((0, 1), (1, 2), (0, 2)),
    ((1, 2), (2, 3), (1, 3)),
    ((3, 4), (0, 4)),
)


def five_agent_cycle(rule: str = "metropolis") -> TopologySchedule:
    """Period-3 cycle on five agents: triangle {1,2,3}, triangle {2,3,4}, path 4-5-1.

    No single round is connected; any three consecutive rounds are.
    """
    return TopologySchedule(n=5, pattern=FIVE_AGENT_PATTERN, rule=rule, kappa=3)
