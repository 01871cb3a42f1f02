"""Piecewise-linear control path."""

import numpy as np
import pytest

from cdehawkes import autodiff as ad
from cdehawkes.engine import SolverConfig, integrate
from cdehawkes.path import ControlPath, PathError, build_path


def test_midpoint_of_a_line():
    path = build_path(np.array([[0.0, 0.0], [2.0, 4.0]]), np.array([0.0, 1.0]))
    assert np.allclose(path.evaluate(0.5), [1.0, 2.0, 0.5])
    assert np.allclose(path.slopes[0], [2.0, 4.0, 1.0])


def test_knot_reproduction_is_exact(synthetic_dataset):
    rng = np.random.default_rng(0)
    for seq in synthetic_dataset.sequences[:5]:
        vals = rng.normal(size=(len(seq), 3))
        path = build_path(vals, seq.times)
        err = max(np.max(np.abs(path.evaluate(t) - path.values[i]))
                  for i, t in enumerate(seq.times))
        assert err <= 1e-12


def test_affine_between_knots():
    rng = np.random.default_rng(1)
    times = np.array([0.0, 1.3, 2.1, 5.0])
    vals = rng.normal(size=(4, 2))
    path = build_path(vals, times)
    for j in range(3):
        for s in np.linspace(0.0, 1.0, 7):
            t = (1 - s) * times[j] + s * times[j + 1]
            expect = (1 - s) * path.values[j] + s * path.values[j + 1]
            assert np.max(np.abs(path.evaluate(t) - expect)) < 1e-12


def test_constant_knots_leave_only_the_time_channel():
    vals = np.full((4, 3), 2.5)
    path = build_path(vals, np.array([0.0, 1.0, 2.0, 4.0]))
    for t in (0.2, 1.7, 3.3):
        assert np.allclose(path.derivative(t), [0.0, 0.0, 0.0, 1.0])


def test_piecewise_slopes_and_right_continuity():
    path = ControlPath(np.array([0.0, 1.0, 2.0]),
                       np.array([[0.0], [1.0], [-1.0]]))
    assert np.allclose(path.derivative(0.5), [1.0])
    assert np.allclose(path.derivative(1.5), [-2.0])
    assert np.allclose(path.derivative(1.0), [-2.0])  # knot takes the right segment
    assert np.allclose(path.derivative(0.0), [1.0])


def test_derivative_outside_span_raises():
    path = ControlPath(np.array([0.0, 1.0]), np.zeros((2, 1)))
    with pytest.raises(PathError):
        path.derivative(1.5)
    with pytest.raises(PathError):
        path.evaluate(-0.1)


def test_non_increasing_knots_rejected():
    with pytest.raises(PathError):
        ControlPath(np.array([0.0, 0.0]), np.zeros((2, 1)))
    with pytest.raises(PathError):
        build_path(np.zeros((2, 1)), np.array([1.0, 0.5]))


def test_single_knot_degenerates_to_a_point():
    path = build_path(np.array([[3.0, 4.0]]), np.array([2.0]))
    assert np.allclose(path.evaluate(2.0), [3.0, 4.0, 2.0])
    with pytest.raises(PathError):
        path.derivative(2.0)


def test_integral_of_derivative_recovers_endpoint_difference():
    """Fundamental-theorem oracle: RK4 over the derivative reproduces
    Z(t_N) - Z(t_1) to 1e-10."""
    rng = np.random.default_rng(2)
    times = np.sort(rng.uniform(0, 10, size=9))
    times += np.arange(9) * 1e-3
    vals = rng.normal(size=(9, 4))
    path = build_path(vals, times)
    C = path.channels
    res = integrate(times, list(path.values), ad.Tensor(np.zeros(C)),
                    field_matvec=lambda h, slope: slope,
                    intensity_fn=None, solver=SolverConfig(substeps=4))
    diff = path.values[-1] - path.values[0]
    assert np.max(np.abs(res.knot_h[-1].data - diff)) < 1e-10
