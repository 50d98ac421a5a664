"""
Power-law step sizes ``iota_k = scale_iota / k**(1 + eps)`` and dither gains
``c_k = scale_c / k**delta``, with analytic checks of the summability
conditions they must meet.  Rounds are 1-based.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .validation import ValidationReport

__all__ = ["ScheduleParams", "step_size", "dither_gain", "validate_h4", "predicted_rate"]


@dataclass(frozen=True)
class ScheduleParams:
    epsilon: float = 0.5
    delta: float = 0.5
    scale_iota: float = 1.0
    scale_c: float = 1.0

    def __post_init__(self):
        if not (self.scale_iota > 0 and self.scale_c > 0):
            raise ValueError("schedule scales must be positive")

    def to_dict(self):
        return asdict(self)


def _check_round(k):
    k = np.asarray(k)
    if np.any(k < 1):
        raise ValueError("rounds are 1-based; got k < 1")
    return k.astype(np.float64)


def step_size(p: ScheduleParams, k):
    """``scale_iota / k**(1+epsilon)``; accepts scalars or arrays of rounds."""
    return p.scale_iota / _check_round(k) ** (1.0 + p.epsilon)


def dither_gain(p: ScheduleParams, k):
    return p.scale_c / _check_round(k) ** p.delta


def validate_h4(p: ScheduleParams) -> ValidationReport:
    """Series tests for power-law schedules.

    For ``sum k**-q`` convergence holds iff ``q > 1``; each condition below is
    that criterion applied to the relevant exponent.
    """
    e, d = p.epsilon, p.delta
    rep = ValidationReport("step-size / dither-gain schedule")
    rep.add("iota_k > 0 and sum iota_k < inf", e > 0, f"exponent 1+eps = {1 + e:g}")
    rep.add("c_k > 0 and c_k -> 0", d > 0, f"delta = {d:g}")
    rep.add("sum iota_k/c_k = inf", 1 + e - d <= 1, f"exponent 1+eps-delta = {1 + e - d:g}")
    rep.add("sum iota_k^2/c_k^2 < inf", 2 * (1 + e - d) > 1, f"exponent 2(1+eps-delta) = {2 * (1 + e - d):g}")
    rep.add("sum iota_k*c_k < inf", 1 + e + d > 1, f"exponent 1+eps+delta = {1 + e + d:g}")
    rep.add(
        "exponent window 1/2+eps > delta >= eps > 0",
        0.5 + e > d >= e > 0,
        f"eps = {e:g}, delta = {d:g}",
    )
    if p.scale_iota != 1.0 or p.scale_c != 1.0:
        rep.warnings.append(
            f"non-unit scales (iota x{p.scale_iota:g}, c x{p.scale_c:g}): constants differ from the reference setup"
        )
    return rep


def predicted_rate(p: ScheduleParams) -> float:
    """Predicted decay exponent of the mean-square error, ``min(eps, 1+2eps-2delta)``.

    Only positivity of both exponents is enforced; whether the pair also
    lies inside the convergence window is reported by :func:`validate_h4`.
    """
    if not (p.epsilon > 0 and p.delta > 0):
        raise ValueError(f"exponents must be positive: {p}")
    return min(p.epsilon, 1.0 + 2.0 * p.epsilon - 2.0 * p.delta)
