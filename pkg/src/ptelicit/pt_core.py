"""Closed-form prospect theory: value, weighting, binary-prospect utility
and the logistic choice rule.

Scalar functions are the reference API. ``prospect_utilities`` is a numpy
version of the same formulas used inside the likelihood.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DomainError

PARAM_LOWER = 0.01
PARAM_UPPER = 4.0
PARAM_NAMES = ("sigma", "lam", "gamma")


@dataclass(frozen=True)
class PTParams:
    """Risk curvature ``sigma``, loss aversion ``lam`` and probability
    weighting curvature ``gamma``, each constrained to [0.01, 4.0]."""

    sigma: float
    lam: float
    gamma: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not (PARAM_LOWER <= v <= PARAM_UPPER):
                raise DomainError(
                    f"{name}={v!r} outside [{PARAM_LOWER}, {PARAM_UPPER}]"
                )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sigma, self.lam, self.gamma)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values) -> "PTParams":
        s, l, g = (float(v) for v in values)
        return cls(s, l, g)


@dataclass(frozen=True)
class Prospect:
    """Binary gamble ``(x, p; y, q)``.

    Canonical ordering: with same-sign outcomes ``x`` carries the larger
    magnitude; with mixed signs ``x`` is the loss and ``y`` the gain. Zero
    counts as either sign, so ``(100, p; 0, q)`` is a valid gain prospect.
    Use :meth:`normalized` to build one from unordered branches.
    """

    x: float
    p: float
    y: float
    q: float

    def __post_init__(self):
        for name in ("x", "p", "y", "q"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ContractError(f"probabilities ({self.p}, {self.q}) outside [0, 1]")
        if abs(self.p + self.q - 1.0) > 1e-12:
            raise ContractError(f"p + q = {self.p + self.q!r}, expected 1")
        x, y = self.x, self.y
        if x < 0 < y:
            return
        if (x >= 0 and y >= 0) or (x <= 0 and y <= 0):
            if abs(x) > abs(y):
                return
            raise ContractError(
                f"same-sign prospect ({x}, {y}) violates 'x > y > 0 or x < y < 0': "
                "x must carry the larger magnitude and ties are undefined"
            )
        raise ContractError(
            f"mixed-sign prospect ({x}, {y}) violates 'x < 0 < y': "
            "the loss must occupy the x slot"
        )

    @property
    def mixed(self) -> bool:
        return self.x < 0 < self.y

    @property
    def expected_value(self) -> float:
        return self.p * self.x + self.q * self.y

    @classmethod
    def normalized(cls, a: float, pa: float, b: float, pb: float) -> "Prospect":
        """Build a prospect from two branches given in any order."""
        if (a < 0 < b) or (b < 0 < a):
            return cls(a, pa, b, pb) if a < 0 else cls(b, pb, a, pa)
        if abs(a) >= abs(b):
            return cls(a, pa, b, pb)
        return cls(b, pb, a, pa)


def value(x: float, params: PTParams) -> float:
    """Reference-dependent value of outcome ``x`` (reference point zero)."""
    if not math.isfinite(x):
        raise DomainError(f"value() needs a finite outcome, got {x!r}")
    if x >= 0:
        return x**params.sigma if x > 0 else 0.0
    return -params.lam * (-x) ** params.sigma


def weight(p: float, params: PTParams) -> float:
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"probability {p!r} outside [0, 1]")
    g = params.gamma
    if p == 0.0:
        return 0.0
    if p == 1.0:
        return 1.0
    pg = p**g
    return pg / (pg + (1.0 - p) ** g) ** (1.0 / g)


def prospect_utility(prospect: Prospect, params: PTParams) -> float:
    P = prospect
    vx, vy = value(P.x, params), value(P.y, params)
    if P.mixed:
        return weight(P.p, params) * vx + weight(P.q, params) * vy
    return vy + weight(P.p, params) * (vx - vy)


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def choice_probability(option_k: Prospect, option_u: Prospect, params: PTParams) -> float:
    """Probability of choosing K under a logistic rule on the utility gap."""
    return sigmoid(prospect_utility(option_k, params) - prospect_utility(option_u, params))


# -- vectorised forms ------------------------------------------------------

def _values(x, sigma, lam):
    mag = np.abs(x) ** sigma
    return np.where(x >= 0, mag, -lam * mag)


def _weights(p, gamma):
    pg = p**gamma
    with np.errstate(divide="ignore", invalid="ignore"):
        w = pg / (pg + (1.0 - p) ** gamma) ** (1.0 / gamma)
    return np.where(p <= 0.0, 0.0, np.where(p >= 1.0, 1.0, w))


def prospect_utilities(x, p, y, q, sigma, lam, gamma) -> np.ndarray:
    """Utilities of many canonically ordered prospects at once."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    vx = _values(x, sigma, lam)
    vy = _values(y, sigma, lam)
    wp = _weights(np.asarray(p, dtype=float), gamma)
    wq = _weights(np.asarray(q, dtype=float), gamma)
    mixed = (x < 0) & (y > 0)
    return np.where(mixed, wp * vx + wq * vy, vy + wp * (vx - vy))
