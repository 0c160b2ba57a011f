"""Linear polarization states, projective measurements and the closed-form
error/information formulas for intercept-resend jamming.

Angles are kept in degrees everywhere and only converted to radians inside
trigonometric calls, so the protocol constants (0, 22.5, 45, 90, 135) stay
exact. The array helpers accept numpy arrays or scalars; the simulation engine
uses them directly so scalar and batched paths share one formula.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

SECURE_ERROR_BOUND = 0.25
MI_THRESHOLD_BITS = 0.1887


@dataclass(frozen=True)
class PolarizationState:
    """Pure linear polarization at ``angle`` degrees from horizontal."""

    angle: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "angle", float(self.angle) % 180.0)

    def orthogonal(self) -> PolarizationState:
        return PolarizationState(self.angle + 90.0)

    def is_orthogonal_to(self, other: PolarizationState) -> bool:
        return math.isclose(
            (self.angle - other.angle) % 180.0, 90.0, abs_tol=1e-9
        )


H = PolarizationState(0.0)
V = PolarizationState(90.0)
D = PolarizationState(45.0)
A = PolarizationState(135.0)

PROTOCOL_STATES = (H, V, D, A)
STATE_NAMES = ("H", "V", "D", "A")


@dataclass(frozen=True)
class MeasurementBasis:
    """Orthogonal linear basis whose aligned axis sits at ``theta`` degrees.

    The orthogonal outcome is the axis ``theta + 90``. ``theta`` must lie in
    [0, 90); a basis at 90 would be the same basis with its labels swapped.
    """

    theta: float

    def __post_init__(self) -> None:
        theta = float(self.theta)
        if not 0.0 <= theta < 90.0:
            raise ValueError(f"basis angle must be in [0, 90), got {theta}")
        object.__setattr__(self, "theta", theta)

    @property
    def aligned(self) -> PolarizationState:
        return PolarizationState(self.theta)

    @property
    def orthogonal(self) -> PolarizationState:
        return PolarizationState(self.theta + 90.0)


HV = MeasurementBasis(0.0)
DA = MeasurementBasis(45.0)
BREIDBART = MeasurementBasis(22.5)


class Axis(enum.Enum):
    ALIGNED = 0
    ORTHOGONAL = 1


@dataclass(frozen=True)
class Outcome:
    axis: Axis
    as_state: PolarizationState


def aligned_probability(state_deg, basis_deg):
    """cos^2 of the angle between a polarization and a basis axis (array-friendly).

    Evaluated as (1 + cos 2d)/2 with d reduced mod 180, which is exactly 0 for
    orthogonal protocol states; a plain cos^2 leaves ~1e-33 there.
    """
    d = np.mod(np.subtract(state_deg, basis_deg), 180.0)
    return 0.5 * (1.0 + np.cos(np.deg2rad(2.0 * d)))


def collapse(state_deg, basis_deg, u):
    """Sample projective measurements for arrays of states.

    Returns ``(orthogonal, collapsed_deg)`` where ``orthogonal`` is a boolean
    array (False means the aligned axis clicked) and ``collapsed_deg`` is the
    post-measurement polarization angle in [0, 180).
    """
    orthogonal = ~(np.asarray(u) < aligned_probability(state_deg, basis_deg))
    collapsed = np.mod(np.asarray(basis_deg) + 90.0 * orthogonal, 180.0)
    return orthogonal, collapsed


def detection_probability(state: PolarizationState, basis: MeasurementBasis) -> float:
    """Probability that ``state`` is found along the aligned axis of ``basis``."""
    return float(aligned_probability(state.angle, basis.theta))


def measure(state: PolarizationState, basis: MeasurementBasis, u: float) -> Outcome:
    """Measure ``state`` in ``basis`` using the unit uniform ``u``.

    The photon collapses onto whichever axis clicked, which is what makes an
    intercept-resend jammer disturb the states it copies.
    """
    if u < detection_probability(state, basis):
        return Outcome(Axis.ALIGNED, basis.aligned)
    return Outcome(Axis.ORTHOGONAL, basis.orthogonal)


def jammer_error_rate(theta: float) -> float:
    """Jammer's own misidentification rate when eavesdropping at ``theta`` degrees."""
    t = math.radians(2.0 * theta)
    return 0.25 * ((1.0 - math.cos(t)) + (1.0 - math.sin(t)))


def bob_error_rate(theta: float) -> float:
    """Receiver error when the jammer resends in its own eavesdropping basis."""
    t = math.radians(2.0 * theta)
    return 0.25 * ((1.0 - math.cos(t) ** 2) + (1.0 - math.sin(t) ** 2))


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def mutual_information(e_b: float) -> float:
    """Sender/receiver mutual information in bits per detected photon.

    ``0 * log2(0)`` is taken as 0, so ``e_b`` of 0 or 1 gives 1 bit.
    """
    if not 0.0 <= e_b <= 1.0:
        raise ValueError(f"error rate must be in [0, 1], got {e_b}")
    return 1.0 - binary_entropy(e_b)
