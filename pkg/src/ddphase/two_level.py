"""Closed forms for one driven two-level transition.

With u = x^2 - y, y = (omega_gap + g) / omega_gap and g the total pair
interaction strength, the minimum energy sits at rho = 0 for u <= 0 and at
rho_c = sqrt(u / (u + 2)) otherwise; the boundary x_c = sqrt(y) exists only
for y > 0.  All energies are per atom, measured from the lower level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import ValidationError


@dataclass(frozen=True)
class TwoLevelParams:
    """Reduced parameters of a driven pair (j, k)."""

    omega_gap: float
    omega_mode: float
    g_pair: float
    x: float

    def __post_init__(self):
        if self.omega_gap <= 0.0:
            raise ValidationError("level gap must be positive")
        if self.omega_mode <= 0.0:
            raise ValidationError("mode frequency must be positive")

    @property
    def y(self) -> float:
        return (self.omega_gap + self.g_pair) / self.omega_gap

    @property
    def mu_critical(self) -> float:
        return 0.5 * math.sqrt(self.omega_mode * self.omega_gap)

    @property
    def mu(self) -> float:
        return self.x * self.mu_critical


@dataclass(frozen=True)
class TransitionReport:
    """Numeric derivative jumps of the minimum energy at one point."""

    kind: str
    location: float | None
    de_jump: float
    d2e_jump: float


def rho_critical(x: float, y: float) -> tuple[float, ...]:
    """Critical amplitudes of the reduced energy: 0, and the collective root."""
    u = x * x - y
    if u <= 0.0:
        return (0.0,)
    return (0.0, math.sqrt(u / (u + 2.0)))


def e_min(x: float, y: float, omega_j: float = 0.0, omega_gap: float = 1.0) -> float:
    """Piecewise minimum energy per atom of the driven pair."""
    if omega_gap <= 0.0:
        raise ValidationError("level gap must be positive")
    u = x * x - y
    if u <= 0.0:
        return omega_j
    return omega_j - omega_gap * u * u / (4.0 * (u + 1.0))


def e_min_derivatives(
    x: float, y: float, omega_gap: float = 1.0
) -> tuple[float, float]:
    """Analytic (dE/dx, d2E/dx2) of the piecewise minimum energy."""
    u = x * x - y
    if u <= 0.0:
        return 0.0, 0.0
    de = -omega_gap * x * u * (u + 2.0) / (2.0 * (u + 1.0) ** 2)
    d2e = -0.5 * omega_gap * (
        u * (u + 2.0) / (u + 1.0) ** 2 + 4.0 * x * x / (u + 1.0) ** 3
    )
    return de, d2e


def x_critical(y: float) -> float | None:
    """Boundary coupling sqrt(y), or None when the normal region is absent."""
    if y <= 0.0:
        return None
    return math.sqrt(y)


def classify_2level(
    x: float, y: float, h: float = 1e-4, omega_gap: float = 1.0
) -> TransitionReport:
    """Numeric Ehrenfest check of e_min at the point x.

    One-sided second-order differences with step h estimate the first and
    second derivative on each side; their differences are the jumps.  The
    first-derivative jump scales like h^2 at a second-order transition, so
    thresholds 1e3 h^2 (continuity) and 1e3 h (discontinuity) separate the
    two cleanly at the default step.
    """
    if y <= 0.0:
        return TransitionReport(
            kind="no_normal_region", location=None, de_jump=0.0, d2e_jump=0.0
        )

    def e(v):
        return e_min(v, y, 0.0, omega_gap)

    de_plus = (-3.0 * e(x) + 4.0 * e(x + h) - e(x + 2 * h)) / (2.0 * h)
    de_minus = (3.0 * e(x) - 4.0 * e(x - h) + e(x - 2 * h)) / (2.0 * h)
    d2e_plus = (e(x) - 2.0 * e(x + h) + e(x + 2 * h)) / h**2
    d2e_minus = (e(x) - 2.0 * e(x - h) + e(x - 2 * h)) / h**2
    de_jump = de_plus - de_minus
    d2e_jump = d2e_plus - d2e_minus
    scale = max(1.0, omega_gap * max(1.0, y))
    if abs(de_jump) <= 1e3 * h * h * scale and abs(d2e_jump) > 1e3 * h * scale:
        kind = "second_order"
    else:
        kind = "smooth"
    return TransitionReport(
        kind=kind, location=x, de_jump=de_jump, d2e_jump=d2e_jump
    )
