"""Piecewise-linear control path through time-augmented knot values.

The path carries the embedding channels plus one appended channel equal to
time itself, so its derivative exposes both the data velocity and the raw
passage of time to the CDE field.
"""

from __future__ import annotations

import numpy as np


class PathError(ValueError):
    pass


class ControlPath:
    """Linear interpolation of knot values with a time channel appended.

    knots: strictly increasing times (N,); values: (N, C) with C = data
    channels + 1, the last channel equal to the knot time (slope 1).
    Derivative is piecewise constant and right-continuous at interior knots.
    """

    def __init__(self, times: np.ndarray, values: np.ndarray):
        times = np.asarray(times, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != times.shape[0]:
            raise PathError("values must be (N, C) matching the knot times")
        if len(times) == 0:
            raise PathError("a path needs at least one knot")
        if np.any(np.diff(times) <= 0.0):
            raise PathError("knot times must be strictly increasing")
        self.times = times
        self.values = values
        if len(times) > 1:
            self.slopes = np.diff(values, axis=0) / np.diff(times)[:, None]
        else:
            self.slopes = np.zeros((0, values.shape[1]))

    @property
    def num_knots(self) -> int:
        return len(self.times)

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    def _segment(self, t: float) -> int:
        if t < self.times[0] or t > self.times[-1]:
            raise PathError(f"t={t} outside the knot span [{self.times[0]}, {self.times[-1]}]")
        # right-continuous: a knot belongs to the segment it starts
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        return min(j, self.num_knots - 2)

    def evaluate(self, t: float) -> np.ndarray:
        """Z(t); exact knot values at knot times."""
        if self.num_knots == 1:
            if t != self.times[0]:
                raise PathError("degenerate single-knot path is only defined at its knot")
            return self.values[0].copy()
        j = self._segment(t)
        return self.values[j] + self.slopes[j] * (t - self.times[j])

    def derivative(self, t: float) -> np.ndarray:
        """dZ/dt at t: the containing segment's slope (right segment at knots)."""
        if self.num_knots == 1:
            raise PathError("degenerate single-knot path has no derivative")
        return self.slopes[self._segment(t)].copy()


def build_path(embedded_values: np.ndarray, times: np.ndarray) -> ControlPath:
    """Assemble the control path: data channels from the embeddings, plus the
    appended time channel interpolating t itself."""
    embedded_values = np.asarray(embedded_values, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if embedded_values.ndim != 2:
        raise PathError("embedded values must be (N, dim)")
    augmented = np.concatenate([embedded_values, times[:, None]], axis=1)
    return ControlPath(times, augmented)
