"""Nonparametric survival primitives: risk sets, Nelson-Aalen, Kaplan-Meier, log-rank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSplit, NoEvents, ShapeMismatch


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Right-continuous step function on a strictly increasing time grid.

    ``values[j]`` holds on ``[times[j], times[j + 1])``. Below ``times[0]`` the
    curve takes ``initial``; past the last grid point it stays constant.
    """

    times: np.ndarray
    values: np.ndarray
    initial: float = 0.0

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ShapeMismatch("times and values must be 1-d arrays of equal length")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right") - 1
        padded = np.concatenate(([self.initial], self.values))
        out = padded[idx + 1]
        return float(out) if out.ndim == 0 else out

    def __eq__(self, other):
        if not isinstance(other, StepCurve):
            return NotImplemented
        return (
            type(self) is type(other)
            and self.initial == other.initial
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "values": self.values.tolist()}


class CumulativeHazardCurve(StepCurve):
    """Nondecreasing step curve with ``H(t) = 0`` before the first grid time."""

    def __post_init__(self):
        super().__post_init__()
        if self.values.size and (self.values[0] < 0 or np.any(np.diff(self.values) < 0)):
            raise ValueError("cumulative hazard must be nonnegative and nondecreasing")

    @classmethod
    def zero(cls) -> "CumulativeHazardCurve":
        return cls(np.empty(0), np.empty(0))

    @classmethod
    def from_dict(cls, d: dict) -> "CumulativeHazardCurve":
        return cls(np.asarray(d["times"], float), np.asarray(d["values"], float))


class SurvivalCurve(StepCurve):
    """Product-limit survival curve; ``S(t) = 1`` before the first event time."""

    def __init__(self, times, values):
        super().__init__(times, values, 1.0)


def _check(time, event):
    time = np.asarray(time, dtype=float)
    event = np.asarray(event)
    if time.ndim != 1 or time.shape != event.shape:
        raise ShapeMismatch(f"time {time.shape} and event {event.shape} must be equal-length 1-d")
    event = event.astype(bool)
    if not event.any():
        raise NoEvents("at least one observed event is required")
    return time, event


def risk_table(time, event):
    """Distinct event times with their event counts ``d`` and at-risk counts ``Y``.

    A subject censored at ``t_j`` is still at risk at ``t_j`` (events precede
    censorings at tied times).
    """
    time, event = _check(time, event)
    event_times, d = np.unique(time[event], return_counts=True)
    sorted_time = np.sort(time)
    at_risk = time.size - np.searchsorted(sorted_time, event_times, side="left")
    return event_times, d.astype(float), at_risk.astype(float)


def nelson_aalen(time, event) -> CumulativeHazardCurve:
    """Nelson-Aalen cumulative hazard, ``H(t) = sum_{t_j <= t} d_j / Y_j``."""
    t, d, y = risk_table(time, event)
    return CumulativeHazardCurve(t, np.cumsum(d / y))


def kaplan_meier(time, event) -> SurvivalCurve:
    """Kaplan-Meier product-limit estimate of the survival function."""
    t, d, y = risk_table(time, event)
    return SurvivalCurve(t, np.cumprod(1.0 - d / y))


def logrank_statistic(time, event, group) -> float:
    """Standardized two-sample log-rank statistic ``|O - E| / sqrt(V)`` for group 1.

    Raises
    ------
    DegenerateSplit
        If either group is empty or the hypergeometric variance sums to zero.
    """
    time, event = _check(time, event)
    group = np.asarray(group).astype(bool)
    if group.shape != time.shape:
        raise ShapeMismatch("group must match time in length")
    if group.all() or not group.any():
        raise DegenerateSplit("both groups must be nonempty")

    event_times, d, y = risk_table(time, event)
    t1 = np.sort(time[group])
    y1 = t1.size - np.searchsorted(t1, event_times, side="left")
    e1 = np.sort(time[group & event])
    d1 = np.searchsorted(e1, event_times, side="right") - np.searchsorted(
        e1, event_times, side="left"
    )
    return _standardized(d1.astype(float), y1.astype(float), d, y)


def _standardized(d1, y1, d, y) -> float:
    keep = y > 1
    frac = y1[keep] / y[keep]
    var = np.sum(d[keep] * frac * (1.0 - frac) * (y[keep] - d[keep]) / (y[keep] - 1.0))
    if var <= 0:
        raise DegenerateSplit("zero log-rank variance")
    diff = np.sum(d1[keep] - y1[keep] * d[keep] / y[keep])
    return float(abs(diff) / np.sqrt(var))
