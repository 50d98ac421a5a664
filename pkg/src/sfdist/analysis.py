"""
Trajectory metrics, seed aggregation, rate fitting and brute-force oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .perturbation import DifferenceKind, DitherDistribution, estimate, sample_dither
from .problem import ConstraintSet, NoiseModel, Objective, ProblemSpec, find_feasible_point, project_intersection

__all__ = [
    "TrajectoryMetrics",
    "RateFit",
    "GeometricFit",
    "MomentReport",
    "consensus_error",
    "sq_dist_to",
    "metrics_of",
    "aggregate_over_seeds",
    "fit_rate",
    "fit_geometric",
    "centralized_minimize",
    "moment_probe",
]


def _states(states) -> np.ndarray:
    x = np.asarray(states, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[-2] == 0:
        raise ValueError("need at least one state")
    return x


def consensus_error(states) -> float:
    """``sum_i ||x_i - mean||^2`` over the rows of ``states``."""
    x = _states(states)
    return np.sum((x - x.mean(axis=-2, keepdims=True)) ** 2, axis=(-2, -1))[()]


def sq_dist_to(states, ref) -> float:
    """``sum_i ||x_i - ref||^2``."""
    x = _states(states)
    ref = np.asarray(ref, dtype=np.float64).reshape(-1)
    if ref.size != x.shape[-1]:
        raise ValueError(f"reference has dimension {ref.size}, states have {x.shape[-1]}")
    return np.sum((x - ref) ** 2, axis=(-2, -1))[()]


@dataclass
class TrajectoryMetrics:
    rounds: np.ndarray
    consensus_error: np.ndarray
    sq_dist: np.ndarray
    agent_sq_dist: np.ndarray
    se_consensus_error: np.ndarray
    se_sq_dist: np.ndarray
    seeds: int = 1


def metrics_of(record) -> TrajectoryMetrics:
    zeros = np.zeros_like(record.sq_dist)
    return TrajectoryMetrics(
        record.rounds,
        record.consensus_error,
        record.sq_dist,
        record.agent_sq_dist,
        zeros,
        zeros.copy(),
    )


def _mean_se(stack):
    mean = stack.mean(axis=0)
    if stack.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, stack.std(axis=0, ddof=1) / np.sqrt(stack.shape[0])


def aggregate_over_seeds(records: Sequence) -> TrajectoryMetrics:
    """Pointwise seed means and standard errors of the swarm metrics."""
    records = list(records)
    if not records:
        raise ValueError("no records to aggregate")
    fps = {r.fingerprint for r in records}
    if len(fps) != 1:
        raise ValueError("records come from different configurations (fingerprints differ)")
    rounds = records[0].rounds
    if any(not np.array_equal(r.rounds, rounds) for r in records):
        raise ValueError("records were logged on different rounds")
    sq, se_sq = _mean_se(np.stack([r.sq_dist for r in records]))
    ce, se_ce = _mean_se(np.stack([r.consensus_error for r in records]))
    agent = np.stack([r.agent_sq_dist for r in records]).mean(axis=0)
    return TrajectoryMetrics(rounds, ce, sq, agent, se_ce, se_sq, len(records))


@dataclass
class RateFit:
    slope: float
    intercept: float
    k_lo: int
    k_hi: int
    residual_rms: float
    points: int


def fit_rate(metrics, window, values: Optional[np.ndarray] = None) -> RateFit:
    """Least-squares line through ``(log k, log value)`` for ``k`` in ``window``.

    ``metrics`` is a :class:`TrajectoryMetrics` (its mean ``sq_dist`` is
    fitted) or an array of rounds, in which case ``values`` must be given.
    """
    if isinstance(metrics, TrajectoryMetrics):
        rounds, vals = metrics.rounds, metrics.sq_dist
    else:
        rounds, vals = np.asarray(metrics), np.asarray(values)
    k_lo, k_hi = window
    if not k_lo < k_hi:
        raise ValueError("window needs k_lo < k_hi")
    sel = (rounds >= k_lo) & (rounds <= k_hi)
    if sel.sum() < 10:
        raise ValueError(f"window [{k_lo}, {k_hi}] holds {sel.sum()} logged rounds; need >= 10")
    k, v = rounds[sel].astype(np.float64), vals[sel].astype(np.float64)
    if np.any(v <= 0):
        raise ValueError("non-positive values in fit window; shrink the window")
    lx, ly = np.log(k), np.log(v)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return RateFit(float(slope), float(intercept), int(k[0]), int(k[-1]), float(np.sqrt(np.mean(resid**2))), int(sel.sum()))


@dataclass
class GeometricFit:
    """``log v_k ~ log C + k log rho``."""

    rho: float
    scale: float
    residual_rms: float
    relative_residual: float


def fit_geometric(values, ks=None) -> GeometricFit:
    """Fit ``C * rho**k`` to a positive sequence by least squares in log space.

    ``relative_residual`` is the residual RMS divided by the RMS of the log
    values.
    """
    v = np.asarray(values, dtype=np.float64)
    ks = np.arange(1, v.size + 1) if ks is None else np.asarray(ks, dtype=np.float64)
    if np.any(v <= 0):
        raise ValueError("geometric fit needs positive values")
    ly = np.log(v)
    slope, intercept = np.polyfit(ks, ly, 1)
    resid = ly - (slope * ks + intercept)
    rms = float(np.sqrt(np.mean(resid**2)))
    return GeometricFit(float(np.exp(slope)), float(np.exp(intercept)), rms, rms / float(np.sqrt(np.mean(ly**2))))


# -- centralized ground truth -------------------------------------------------


def _interval(constraints):
    """Exact feasible interval of one-dimensional sets."""
    lo, hi = -np.inf, np.inf
    for c in constraints:
        if c.kind == "ball":
            lo, hi = max(lo, c.center[0] - c.radius), min(hi, c.center[0] + c.radius)
        elif c.kind == "box":
            lo, hi = max(lo, c.lo[0]), min(hi, c.hi[0])
        elif c.kind == "halfspace":
            a, b = c.a[0], c.b
            if a > 0:
                hi = min(hi, b / a)
            else:
                lo = max(lo, b / a)
    return lo, hi


def _subgradient_phase(problem, x0, iters=4000):
    sets = problem.constraints
    x = x0.copy()
    best, best_val = x.copy(), float(problem.total(x))
    avg, weight = np.zeros_like(x), 0.0
    g0 = sum(o.subgradient(x) for o in problem.objectives)
    scale = max(1.0, float(np.linalg.norm(g0)))
    for t in range(1, iters + 1):
        g = sum(o.subgradient(x) for o in problem.objectives)
        gn = float(np.linalg.norm(g))
        if gn == 0:
            return x
        step = 1.0 / (scale * np.sqrt(t))
        x = project_intersection(sets, x - step * g / max(gn / scale, 1.0))
        avg, weight = avg + step * x, weight + step
        val = float(problem.total(x))
        if val < best_val:
            best, best_val = x.copy(), val
    avg = project_intersection(sets, avg / weight)
    return avg if float(problem.total(avg)) <= best_val else best


def _zoom_scan(problem, center, half, tol=1e-10, points=41):
    sets = problem.constraints
    best = center
    while half > tol:
        g = np.linspace(-half, half, points)
        X, Y = np.meshgrid(best[0] + g, best[1] + g, indexing="ij")
        P = np.stack([X.ravel(), Y.ravel()], axis=1)
        ok = np.all([s.contains(P, tol=1e-12) for s in sets], axis=0)
        if not ok.any():
            break
        vals = np.where(ok, problem.total(P), np.inf)
        cand = P[np.argmin(vals)]
        if problem.total(cand) <= problem.total(best) or not all(s.contains(best) for s in sets):
            best = cand
        half /= 4.0
    return best


def _polish(F, t, lo, hi, iters=200):
    """Shrink a bracket around ``t`` by ternary search; Brent stops near sqrt(eps)."""
    w = 1e-6 * max(1.0, abs(t))
    a, b = max(lo, t - w), min(hi, t + w)
    for _ in range(iters):
        m1, m2 = a + (b - a) / 3, b - (b - a) / 3
        if F(m1) <= F(m2):
            b = m2
        else:
            a = m1
        if b - a <= 4 * np.finfo(float).eps * max(1.0, abs(a)):
            break
    best = min((t, 0.5 * (a + b)), key=F)
    return best


def centralized_minimize(problem: ProblemSpec) -> np.ndarray:
    """Minimizer of ``sum_i f^i`` over the intersection of all ``X_i``.

    One dimension: exact feasible interval, bounded Brent search, then a
    ternary-search polish below Brent's sqrt(eps) stopping point.  Two
    dimensions: projected subgradient followed by a zooming grid scan.
    Higher dimensions: projected subgradient with averaging only.
    """
    x0 = find_feasible_point(problem.constraints)
    m = problem.dim
    if m == 1:
        lo, hi = _interval(problem.constraints)
        if lo > hi:
            raise ValueError("constraint sets do not intersect")
        if lo == hi:
            return np.array([lo])

        def F(t):
            return float(problem.total(np.array([t])))

        if not (np.isfinite(lo) and np.isfinite(hi)):
            anchor = float(_subgradient_phase(problem, x0)[0])
            width = max(1.0, abs(anchor))
            # widen any open side until the minimiser is strictly inside
            while True:
                a = lo if np.isfinite(lo) else anchor - width
                b = hi if np.isfinite(hi) else anchor + width
                res = minimize_scalar(F, bounds=(a, b), method="bounded", options={"xatol": 1e-12})
                near_open = (not np.isfinite(lo) and res.x - a < 1e-6 * width) or (
                    not np.isfinite(hi) and b - res.x < 1e-6 * width
                )
                if not near_open:
                    return np.array([_polish(F, res.x, a, b)])
                width *= 4.0
        res = minimize_scalar(F, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
        cands = [_polish(F, res.x, lo, hi), lo, hi]
        vals = [float(problem.total(np.array([t]))) for t in cands]
        return np.array([cands[int(np.argmin(vals))]])
    x = _subgradient_phase(problem, x0)
    if m == 2:
        reach = [c.max_distance(x) for c in problem.constraints]
        half = min(min(reach), 10.0 * max(1.0, float(np.linalg.norm(x))))
        x = _zoom_scan(problem, x, half)
    return x


# -- Monte Carlo probes -------------------------------------------------------


@dataclass
class MomentReport:
    mean_norm: float
    se_norm: float
    mean_sq_norm: float
    se_sq_norm: float
    bound_norm: float
    bound_sq_norm: float
    lipschitz: float
    noise_term: float
    samples: int

    @property
    def norm_ok(self) -> bool:
        return self.mean_norm <= self.bound_norm + 3.0 * self.se_norm

    @property
    def sq_norm_ok(self) -> bool:
        return self.mean_sq_norm <= self.bound_sq_norm + 3.0 * self.se_sq_norm


def moment_probe(
    kind,
    obj: Objective,
    cset: ConstraintSet,
    noise: NoiseModel,
    dither: DitherDistribution,
    x,
    c: float,
    samples: int,
    rng,
) -> MomentReport:
    """Sample mean of ``||d||`` and ``||d||^2`` against their moment bounds.

    Bound: ``L + sqrt(m) * b * e / (2c)`` for the two-sided difference, with
    ``e`` the RMS of the difference of two noise draws, ``b`` the reciprocal
    dither bound and ``L`` the subgradient bound of ``obj`` on ``cset``.  A
    one-sided difference divides by ``c`` rather than ``2c``.
    """
    if samples < 1000:
        raise ValueError("moment probe needs at least 1000 samples")
    kind = DifferenceKind(kind)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    m = x.size
    norms = np.empty(samples)
    for s in range(samples):
        delta = sample_dither(dither, m, rng)
        norms[s] = np.linalg.norm(estimate(kind, obj, noise, x, c, delta, rng))
    L = obj.lipschitz(cset)
    denom = 2.0 * c if kind is DifferenceKind.TWO_SIDED else c
    noise_term = np.sqrt(m) * dither.reciprocal_bound * noise.difference_rms / denom
    bound = L + noise_term
    sq = norms**2
    root_n = np.sqrt(samples)
    return MomentReport(
        float(norms.mean()),
        float(norms.std(ddof=1) / root_n),
        float(sq.mean()),
        float(sq.std(ddof=1) / root_n),
        float(bound),
        float(bound**2),
        float(L),
        float(noise_term),
        samples,
    )
