import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsimaging.polar_core import (
    BREIDBART,
    DA,
    HV,
    A,
    Axis,
    D,
    H,
    MeasurementBasis,
    PolarizationState,
    V,
    bob_error_rate,
    detection_probability,
    jammer_error_rate,
    measure,
    mutual_information,
)

angles = st.floats(min_value=-720, max_value=720, allow_nan=False)
basis_angles = st.floats(min_value=0, max_value=90, exclude_max=True)
unit = st.floats(min_value=0, max_value=1, exclude_max=True)


def test_protocol_states_are_exact():
    assert (H.angle, V.angle, D.angle, A.angle) == (0.0, 90.0, 45.0, 135.0)
    assert (HV.theta, DA.theta, BREIDBART.theta) == (0.0, 45.0, 22.5)


def test_state_angle_is_pi_periodic():
    assert PolarizationState(180.0) == H
    assert PolarizationState(-45.0) == A
    assert PolarizationState(270.0) == V


@pytest.mark.parametrize("theta", [-1.0, 90.0, 135.0])
def test_basis_angle_out_of_range(theta):
    with pytest.raises(ValueError):
        MeasurementBasis(theta)


def test_detection_probability_examples():
    assert detection_probability(H, HV) == 1.0
    assert detection_probability(D, HV) == pytest.approx(0.5, abs=1e-15)
    # independent 50-digit evaluation of cos^2(22.5 deg)
    mpmath.mp.dps = 50
    oracle = float(mpmath.cos(mpmath.pi / 8) ** 2)
    assert oracle == pytest.approx(0.8535533905932737, abs=1e-15)
    assert detection_probability(H, BREIDBART) == pytest.approx(oracle, abs=1e-15)


@pytest.mark.parametrize(
    "state, basis, u, axis, collapsed",
    [
        (H, HV, 0.3, Axis.ALIGNED, H),
        (D, HV, 0.49, Axis.ALIGNED, H),
        (D, HV, 0.51, Axis.ORTHOGONAL, V),
        (A, DA, 0.99, Axis.ORTHOGONAL, A),
        (V, BREIDBART, 0.5, Axis.ORTHOGONAL, PolarizationState(112.5)),
    ],
)
def test_measure_examples(state, basis, u, axis, collapsed):
    out = measure(state, basis, u)
    assert out.axis is axis
    assert out.as_state == collapsed


@given(angles, basis_angles)
def test_outcome_probabilities_sum_to_one(angle, theta):
    s, b = PolarizationState(angle), MeasurementBasis(theta)
    p_orth = math.cos(math.radians(s.angle - b.orthogonal.angle)) ** 2
    assert detection_probability(s, b) + p_orth == pytest.approx(1.0, abs=1e-12)


@given(angles, basis_angles, unit)
def test_measure_is_deterministic_and_collapses_onto_axis(angle, theta, u):
    s, b = PolarizationState(angle), MeasurementBasis(theta)
    out = measure(s, b, u)
    assert out == measure(s, b, u)
    expected = b.aligned if out.axis is Axis.ALIGNED else b.orthogonal
    assert out.as_state == expected


def test_jammer_error_examples():
    assert jammer_error_rate(22.5) == pytest.approx((2 - math.sqrt(2)) / 4, abs=1e-12)
    assert round(jammer_error_rate(22.5), 6) == 0.146447
    assert jammer_error_rate(0) == pytest.approx(0.25, abs=1e-15)
    assert jammer_error_rate(45) == pytest.approx(0.25, abs=1e-15)


def test_jammer_error_unique_minimum_at_breidbart():
    grid = np.round(np.arange(0, 90, 0.1), 1)
    values = np.array([jammer_error_rate(t) for t in grid])
    assert grid[np.argmin(values)] == 22.5
    assert np.sum(values <= values.min() + 1e-12) == 1


def test_bob_error_is_quarter_on_fine_grid():
    for theta in np.arange(0, 90, 0.1):
        assert abs(bob_error_rate(theta) - 0.25) < 1e-12
    assert bob_error_rate(37) == pytest.approx(0.25, abs=1e-12)


def test_mutual_information_examples():
    assert mutual_information(0.0) == 1.0
    assert mutual_information(1.0) == 1.0
    assert mutual_information(0.5) == pytest.approx(0.0, abs=1e-15)
    assert mutual_information(0.25) == pytest.approx(0.1887, abs=5e-5)
    assert mutual_information(0.0084) == pytest.approx(0.93, abs=5e-3)


def test_mutual_information_rejects_out_of_range():
    with pytest.raises(ValueError):
        mutual_information(1.5)


@given(st.floats(min_value=0, max_value=1))
def test_mutual_information_symmetric(e):
    assert mutual_information(e) == pytest.approx(mutual_information(1 - e), abs=1e-12)


def test_mutual_information_strictly_decreasing_below_half():
    e = np.linspace(0, 0.5, 2001)
    mi = np.array([mutual_information(x) for x in e])
    assert np.all(np.diff(mi) < 0)


@pytest.mark.parametrize("state, basis", [(V, HV), (A, DA), (H, HV)])
def test_protocol_probabilities_exact(state, basis):
    p = detection_probability(state, basis)
    assert p in (0.0, 1.0)
    # u = 0 must not click on a zero-probability axis
    assert (measure(state, basis, 0.0).axis is Axis.ALIGNED) == (p == 1.0)
