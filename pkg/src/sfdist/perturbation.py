"""
Dither signals and randomized-difference gradient surrogates.

A randomized difference compares noisy function values at dithered points
``x +/- c*Delta`` and scales the result by the elementwise reciprocal of the
dither, giving a direction that plays the role of a subgradient without
ever evaluating one.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .problem import NoiseModel, Objective, noisy_observe
from .streams import open_uniform, raw_draws

__all__ = [
    "DitherDistribution",
    "DifferenceKind",
    "sample_dither",
    "reciprocal",
    "difference",
    "estimate",
]


@dataclass(frozen=True)
class DitherDistribution:
    """Symmetric dither law with magnitude in ``[lo, hi]``.

    ``two-interval`` is uniform on ``[-hi, -lo] U [lo, hi]``;
    ``rademacher`` takes ``+/-hi`` with equal probability (``lo`` is forced
    to ``hi``).
    """

    kind: str = "two-interval"
    lo: float = 0.5
    hi: float = 1.0

    def __post_init__(self):
        if self.kind == "rademacher":
            object.__setattr__(self, "lo", float(self.hi))
        elif self.kind != "two-interval":
            raise ValueError(f"unknown dither kind {self.kind!r}")
        if not self.lo > 0:
            raise ValueError("dither lower magnitude must be > 0 (reciprocal bound would be infinite)")
        if self.hi < self.lo:
            raise ValueError("dither needs lo <= hi")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))

    @property
    def magnitude_bound(self) -> float:
        return self.hi

    @property
    def reciprocal_bound(self) -> float:
        return 1.0 / self.lo

    def from_uniform(self, u) -> np.ndarray:
        # t in (-1, 1) and never exactly 0 for the open-interval uniforms
        t = 2.0 * np.asarray(u) - 1.0
        if self.kind == "rademacher":
            return np.sign(t) * self.hi
        return np.sign(t) * (self.lo + (self.hi - self.lo) * np.abs(t))

    def to_dict(self):
        d = {"kind": self.kind, "hi": self.hi}
        if self.kind == "two-interval":
            d["lo"] = self.lo
        return d


class DifferenceKind(str, Enum):
    TWO_SIDED = "two-sided"
    RIGHT_SIDED = "right-sided"
    LEFT_SIDED = "left-sided"


def sample_dither(dist: DitherDistribution, m: int, rng) -> np.ndarray:
    """``m`` i.i.d. dither components, one raw draw each."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    return dist.from_uniform(open_uniform(raw_draws(rng, m)))


def reciprocal(delta) -> np.ndarray:
    delta = np.asarray(delta, dtype=np.float64)
    if np.any(delta == 0):
        raise ZeroDivisionError("dither has a zero component")
    return 1.0 / delta


def _observation_points(kind):
    """Which points are observed, in draw order: +1 perturbed up, -1 down, 0 plain."""
    if kind is DifferenceKind.TWO_SIDED:
        return (1, -1)
    if kind is DifferenceKind.RIGHT_SIDED:
        return (1, 0)
    return (0, -1)


def difference(kind: DifferenceKind, first, second, c, recip) -> np.ndarray:
    """Combine two observations into a randomized difference.

    ``first``/``second`` are the observations in the order given by the
    kind: (up, down), (up, plain) or (plain, down).  Observation arrays
    carry the batch shape; ``recip`` adds the trailing dimension.
    """
    kind = DifferenceKind(kind)
    gap = np.asarray(first) - np.asarray(second)
    scale = 2.0 * c if kind is DifferenceKind.TWO_SIDED else c
    return (gap / scale)[..., None] * recip


def estimate(
    kind: DifferenceKind,
    obj: Objective,
    noise: NoiseModel,
    x,
    c: float,
    delta,
    rng,
) -> np.ndarray:
    """Randomized difference of ``obj`` at ``x`` with gain ``c`` and dither ``delta``.

    Exactly two oracle calls are made, each with its own noise draw taken
    from ``rng`` in observation order.
    """
    kind = DifferenceKind(kind)
    if not c > 0:
        raise ValueError("dither gain c must be positive")
    x = np.asarray(x, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    obs = [noisy_observe(obj, x + sgn * c * delta, noise, rng) for sgn in _observation_points(kind)]
    return difference(kind, obs[0], obs[1], c, reciprocal(delta))
