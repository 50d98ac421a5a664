"""
Local objectives, constraint sets and the noisy zero-order oracle.

All point arguments may carry leading batch axes; the last axis is the
ambient dimension ``m``.  Subgradients are provided for the first-order
baseline and for tests -- the subgradient-free algorithm never calls them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .streams import raw_draws, standard_normal

__all__ = [
    "DimensionError",
    "Objective",
    "Affine",
    "Quadratic",
    "AbsSum",
    "MaxAffine",
    "Custom",
    "ConstraintSet",
    "Ball",
    "Box",
    "Halfspace",
    "WholeSpace",
    "NoiseModel",
    "ProblemSpec",
    "evaluate",
    "noisy_observe",
    "project",
    "subgradient",
    "lipschitz_bound",
    "objective_from_dict",
    "constraint_from_dict",
    "find_feasible_point",
    "project_intersection",
]


class DimensionError(ValueError):
    """A point does not match the dimension of the object it is used with."""


def _vec(values, name="vector") -> np.ndarray:
    a = np.array(values, dtype=np.float64).reshape(-1)
    if a.size == 0:
        raise ValueError(f"{name} must be non-empty")
    return a


def _check_point(x, m: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x.reshape(1)
    if x.shape[-1] != m:
        raise DimensionError(f"expected trailing dimension {m}, got shape {x.shape}")
    return x


class _Canonical:
    """Equality and hashing through the canonical ``to_dict`` form."""

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(json.dumps(self.to_dict(), sort_keys=True))


# -- objectives ---------------------------------------------------------------


class Objective(_Canonical):
    """Convex local objective ``f^i : R^m -> R``."""

    kind: str = ""
    dim: int

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def lipschitz(self, cset: "ConstraintSet") -> float:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Affine(Objective):
    """``f(x) = a.x + b``."""

    a: np.ndarray
    b: float = 0.0
    kind = "affine"

    def __post_init__(self):
        object.__setattr__(self, "a", _vec(self.a, "a"))
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def value(self, x):
        x = _check_point(x, self.dim)
        return x @ self.a + self.b

    def subgradient(self, x):
        x = _check_point(x, self.dim)
        return np.broadcast_to(self.a, x.shape).copy()

    def lipschitz(self, cset):
        return float(np.linalg.norm(self.a))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class Quadratic(Objective):
    """``f(x) = (x - s)^T Q (x - s)`` with ``Q`` symmetric positive semidefinite."""

    shift: np.ndarray
    matrix: Optional[np.ndarray] = None

    kind = "quadratic"

    def __post_init__(self):
        s = _vec(self.shift, "shift")
        q = np.eye(s.size) if self.matrix is None else np.array(self.matrix, dtype=np.float64)
        q = q.reshape(s.size, s.size)
        if not np.allclose(q, q.T, rtol=0, atol=1e-12):
            raise ValueError("quadratic matrix must be symmetric")
        if np.linalg.eigvalsh(q).min() < -1e-12:
            raise ValueError("quadratic matrix must be positive semidefinite (convexity)")
        object.__setattr__(self, "shift", s)
        object.__setattr__(self, "matrix", q)

    @property
    def dim(self):
        return self.shift.size

    def value(self, x):
        r = _check_point(x, self.dim) - self.shift
        return np.sum(r * (r @ self.matrix.T), axis=-1)

    def subgradient(self, x):
        r = _check_point(x, self.dim) - self.shift
        return 2.0 * (r @ self.matrix.T)

    def lipschitz(self, cset):
        reach = cset.max_distance(self.shift)
        if not np.isfinite(reach):
            raise ValueError("quadratic gradient is unbounded on an unbounded set")
        return float(2.0 * np.linalg.norm(self.matrix, 2) * reach)

    def to_dict(self):
        return {"kind": self.kind, "shift": self.shift.tolist(), "matrix": self.matrix.tolist()}


@dataclass(frozen=True, eq=False)
class AbsSum(Objective):
    """``f(x) = sum_p w_p |x_p - s_p|`` with non-negative weights."""

    weights: np.ndarray
    shift: Optional[np.ndarray] = None

    kind = "abs-sum"

    def __post_init__(self):
        w = _vec(self.weights, "weights")
        if np.any(w < 0):
            raise ValueError("abs-sum weights must be non-negative (convexity)")
        s = np.zeros_like(w) if self.shift is None else _vec(self.shift, "shift")
        if s.size != w.size:
            raise ValueError("weights and shift differ in length")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "shift", s)

    @property
    def dim(self):
        return self.weights.size

    def value(self, x):
        x = _check_point(x, self.dim)
        return np.sum(self.weights * np.abs(x - self.shift), axis=-1)

    def subgradient(self, x):
        # np.sign(0) == 0 picks the minimum-norm element at kinks
        x = _check_point(x, self.dim)
        return self.weights * np.sign(x - self.shift)

    def lipschitz(self, cset):
        return float(np.linalg.norm(self.weights))

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(), "shift": self.shift.tolist()}


@dataclass(frozen=True, eq=False)
class MaxAffine(Objective):
    """``f(x) = max_r (A_r . x + b_r)``."""

    slopes: np.ndarray
    offsets: Optional[np.ndarray] = None

    kind = "max-affine"

    def __post_init__(self):
        A = np.array(self.slopes, dtype=np.float64)
        if A.ndim == 1:
            A = A.reshape(-1, 1)
        if A.ndim != 2 or A.size == 0:
            raise ValueError("slopes must be a non-empty (pieces, m) array")
        b = np.zeros(A.shape[0]) if self.offsets is None else _vec(self.offsets, "offsets")
        if b.size != A.shape[0]:
            raise ValueError("one offset per affine piece required")
        object.__setattr__(self, "slopes", A)
        object.__setattr__(self, "offsets", b)

    @property
    def dim(self):
        return self.slopes.shape[1]

    def _pieces(self, x):
        return _check_point(x, self.dim) @ self.slopes.T + self.offsets

    def value(self, x):
        return np.max(self._pieces(x), axis=-1)

    def subgradient(self, x):
        # argmax returns the first maximiser: lowest-index active piece
        return self.slopes[np.argmax(self._pieces(x), axis=-1)]

    def lipschitz(self, cset):
        return float(np.max(np.linalg.norm(self.slopes, axis=1)))

    def to_dict(self):
        return {"kind": self.kind, "slopes": self.slopes.tolist(), "offsets": self.offsets.tolist()}


@dataclass(frozen=True, eq=False)
class Custom(Objective):
    """User-supplied convex function on single points of dimension ``m``.

    Convexity is the caller's responsibility.  ``grad`` and ``lipschitz_const``
    are optional; without them the baseline and the moment bounds are
    unavailable.
    """

    func: Callable[[np.ndarray], float]
    m: int
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lipschitz_const: Optional[float] = None
    name: str = field(default="")

    kind = "custom"

    @property
    def dim(self):
        return int(self.m)

    def value(self, x):
        x = _check_point(x, self.dim)
        flat = x.reshape(-1, self.dim)
        out = np.array([float(self.func(p)) for p in flat])
        return out.reshape(x.shape[:-1])

    def subgradient(self, x):
        if self.grad is None:
            raise NotImplementedError("custom objective has no subgradient callable")
        x = _check_point(x, self.dim)
        flat = x.reshape(-1, self.dim)
        out = np.array([np.asarray(self.grad(p), dtype=np.float64) for p in flat])
        return out.reshape(x.shape)

    def lipschitz(self, cset):
        if self.lipschitz_const is None:
            raise ValueError("custom objective has no declared Lipschitz constant")
        return float(self.lipschitz_const)

    def to_dict(self):
        label = self.name or getattr(self.func, "__qualname__", repr(self.func))
        return {"kind": self.kind, "name": label, "m": self.dim}


_OBJECTIVES = {c.kind: c for c in (Affine, Quadratic, AbsSum, MaxAffine)}


def objective_from_dict(d: dict) -> Objective:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _OBJECTIVES:
        raise ValueError(f"unknown objective kind {kind!r}; expected one of {sorted(_OBJECTIVES)}")
    return _OBJECTIVES[kind](**d)


# -- constraint sets ----------------------------------------------------------


class ConstraintSet(_Canonical):
    """Closed convex set with an exact Euclidean projection."""

    kind: str = ""
    dim: int
    bounded: bool = True

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def max_distance(self, point) -> float:
        """Largest distance from ``point`` to a member of the set."""
        raise NotImplementedError

    def contains(self, x, tol: float = 1e-12) -> np.ndarray:
        x = _check_point(x, self.dim)
        return np.linalg.norm(x - self.project(x), axis=-1) <= tol


@dataclass(frozen=True, eq=False)
class Ball(ConstraintSet):
    center: np.ndarray
    radius: float

    kind = "ball"

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center, "center"))
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def dim(self):
        return self.center.size

    def project(self, x):
        x = _check_point(x, self.dim)
        r = x - self.center
        norm = np.sqrt(np.sum(r * r, axis=-1, keepdims=True))
        outside = norm > self.radius
        scale = np.where(outside, self.radius / np.where(outside, norm, 1.0), 1.0)
        return np.where(outside, self.center + r * scale, x)

    def contains(self, x, tol=1e-12):
        x = _check_point(x, self.dim)
        return np.linalg.norm(x - self.center, axis=-1) <= self.radius + tol

    def max_distance(self, point):
        return float(np.linalg.norm(_vec(point) - self.center) + self.radius)

    def to_dict(self):
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(ConstraintSet):
    lo: np.ndarray
    hi: np.ndarray

    kind = "box"

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.size != hi.size or np.any(lo > hi):
            raise ValueError("box needs lo <= hi of equal length")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.size

    def project(self, x):
        return np.clip(_check_point(x, self.dim), self.lo, self.hi)

    def contains(self, x, tol=1e-12):
        x = _check_point(x, self.dim)
        return np.all((x >= self.lo - tol) & (x <= self.hi + tol), axis=-1)

    def max_distance(self, point):
        p = _vec(point)
        far = np.maximum(np.abs(self.lo - p), np.abs(self.hi - p))
        return float(np.linalg.norm(far))

    def to_dict(self):
        return {"kind": self.kind, "lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True, eq=False)
class Halfspace(ConstraintSet):
    """``{x : a.x <= b}``."""

    a: np.ndarray
    b: float

    kind = "halfspace"
    bounded = False

    def __post_init__(self):
        a = _vec(self.a, "a")
        if not np.any(a):
            raise ValueError("halfspace normal must be non-zero")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    @property
    def dim(self):
        return self.a.size

    def project(self, x):
        x = _check_point(x, self.dim)
        excess = np.maximum(x @ self.a - self.b, 0.0)[..., None]
        return x - excess * self.a / (self.a @ self.a)

    def contains(self, x, tol=1e-12):
        x = _check_point(x, self.dim)
        return x @ self.a - self.b <= tol * np.linalg.norm(self.a)

    def max_distance(self, point):
        return float("inf")

    def to_dict(self):
        return {"kind": self.kind, "a": self.a.tolist(), "b": self.b}


@dataclass(frozen=True, eq=False)
class WholeSpace(ConstraintSet):
    m: int

    kind = "whole-space"
    bounded = False

    @property
    def dim(self):
        return int(self.m)

    def project(self, x):
        return _check_point(x, self.dim).copy()

    def contains(self, x, tol=1e-12):
        x = _check_point(x, self.dim)
        return np.ones(x.shape[:-1], dtype=bool)

    def max_distance(self, point):
        return float("inf")

    def to_dict(self):
        return {"kind": self.kind, "m": self.dim}


_CONSTRAINTS = {c.kind: c for c in (Ball, Box, Halfspace, WholeSpace)}


def constraint_from_dict(d: dict) -> ConstraintSet:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in _CONSTRAINTS:
        raise ValueError(f"unknown constraint kind {kind!r}; expected one of {sorted(_CONSTRAINTS)}")
    return _CONSTRAINTS[kind](**d)


# -- noise --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NoiseModel(_Canonical):
    """Zero-mean observation noise, drawn independently per oracle call."""

    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind == "none":
            object.__setattr__(self, "sigma", 0.0)
        elif not self.sigma >= 0:
            raise ValueError("noise sigma must be non-negative")
        object.__setattr__(self, "sigma", float(self.sigma))

    @property
    def silent(self) -> bool:
        return self.kind == "none" or self.sigma == 0.0

    @property
    def second_moment(self) -> float:
        return self.sigma**2

    @property
    def difference_rms(self) -> float:
        """RMS of the difference of two independent draws."""
        return float(np.sqrt(2.0) * self.sigma)

    def from_raw(self, raw) -> np.ndarray:
        return self.sigma * standard_normal(raw)

    def sample(self, rng, shape=()) -> np.ndarray:
        if self.silent:
            return np.zeros(shape)
        count = int(np.prod(shape, dtype=np.int64))
        return self.from_raw(raw_draws(rng, count)).reshape(shape)

    def to_dict(self):
        return {"kind": self.kind, "sigma": self.sigma}


# -- problem ------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemSpec(_Canonical):
    """``min sum_i f^i(x)`` subject to ``x`` in every ``X_i``."""

    objectives: Sequence[Objective]
    constraints: Sequence[ConstraintSet]
    noise: NoiseModel = field(default_factory=NoiseModel)
    optimum: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "objectives", tuple(self.objectives))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if not self.objectives:
            raise ValueError("problem needs at least one agent")
        if len(self.objectives) != len(self.constraints):
            raise ValueError("one constraint set per objective required")
        dims = {o.dim for o in self.objectives} | {c.dim for c in self.constraints}
        if len(dims) != 1:
            raise DimensionError(f"objectives and constraints disagree on dimension: {sorted(dims)}")
        if self.optimum is not None:
            object.__setattr__(self, "optimum", _check_point(_vec(self.optimum), self.dim))

    @property
    def dim(self) -> int:
        return self.objectives[0].dim

    @property
    def n(self) -> int:
        return len(self.objectives)

    def total(self, x) -> np.ndarray:
        return sum(o.value(x) for o in self.objectives)

    def to_dict(self):
        d = {
            "objectives": [o.to_dict() for o in self.objectives],
            "constraints": [c.to_dict() for c in self.constraints],
            "noise": self.noise.to_dict(),
        }
        if self.optimum is not None:
            d["optimum"] = self.optimum.tolist()
        return d


# -- module-level operations --------------------------------------------------


def evaluate(obj: Objective, x) -> np.ndarray:
    """Exact value ``f(x)``; scalar points give a 0-d result."""
    return obj.value(x)


def noisy_observe(obj: Objective, x, noise: NoiseModel, rng) -> np.ndarray:
    """``f(x) + eps`` with a fresh draw of ``eps`` per point."""
    value = obj.value(x)
    return value + noise.sample(rng, np.shape(value))


def project(cset: ConstraintSet, x) -> np.ndarray:
    return cset.project(x)


def subgradient(obj: Objective, x) -> np.ndarray:
    return obj.subgradient(x)


def lipschitz_bound(obj: Objective, cset: ConstraintSet) -> float:
    """Bound on the subgradient norm of ``obj`` over ``cset``."""
    return obj.lipschitz(cset)


def project_intersection(constraints, x, iters: int = 2000, tol: float = 1e-13) -> np.ndarray:
    """Projection onto the intersection of several sets (Dykstra)."""
    sets = list(dict.fromkeys(constraints))
    x = np.asarray(x, dtype=np.float64)
    if len(sets) == 1:
        return sets[0].project(x)
    y = x.copy()
    incs = [np.zeros_like(x) for _ in sets]
    for _ in range(iters):
        prev = y
        for j, s in enumerate(sets):
            z = s.project(y + incs[j])
            incs[j] = y + incs[j] - z
            y = z
        if np.max(np.abs(y - prev)) < tol:
            break
    return y


def find_feasible_point(constraints, iters: int = 10000, tol: float = 1e-8) -> np.ndarray:
    """A point in the intersection of ``constraints`` found by cyclic projections.

    Raises ``ValueError`` when the sets appear not to intersect.
    """
    sets = list(dict.fromkeys(constraints))
    x = sets[0].project(np.zeros(sets[0].dim))
    for _ in range(iters):
        for s in sets:
            x = s.project(x)
        gap = max(float(np.linalg.norm(x - s.project(x))) for s in sets)
        if gap <= tol:
            return x
    raise ValueError(f"constraint sets do not intersect (residual gap {gap:.3g})")
