"""Harrell's concordance index and the Van Houwelingen calibration slope alpha."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoComparablePairs, NoEvents, ShapeMismatch, ZeroHazardSum

# Above this size the O(n^2) pair matrix is replaced by the Fenwick sweep.
PAIRWISE_MAX_N = 2000


@dataclass(frozen=True)
class ConcordanceResult:
    c_index: float
    concordant: int
    discordant: int
    tied_risk: int
    comparable: int


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    event_sum: float
    hazard_sum: float


def _inputs(time, event, other, name):
    time = np.asarray(time, dtype=float)
    event = np.asarray(event).astype(bool)
    other = np.asarray(other, dtype=float)
    if not (time.ndim == 1 and time.shape == event.shape == other.shape):
        raise ShapeMismatch(f"time, event and {name} must be 1-d arrays of equal length")
    return time, event, other


def _result(concordant, discordant, tied):
    comparable = concordant + discordant + tied
    if comparable == 0:
        raise NoComparablePairs("no pair has an observed event strictly before the other time")
    return ConcordanceResult(
        (concordant + 0.5 * tied) / comparable, concordant, discordant, tied, comparable
    )


def _count_pairwise(time, event, risk):
    comp = (time[:, None] < time[None, :]) & event[:, None]
    conc = int(np.count_nonzero(comp & (risk[:, None] > risk[None, :])))
    disc = int(np.count_nonzero(comp & (risk[:, None] < risk[None, :])))
    tied = int(np.count_nonzero(comp & (risk[:, None] == risk[None, :])))
    return conc, disc, tied


def _count_fenwick(time, event, risk):
    """Sweep subjects from latest to earliest time, counting risks already seen."""
    levels, rank = np.unique(risk, return_inverse=True)
    size = levels.size
    tree = [0] * (size + 1)

    def prefix(i):  # number of inserted ranks < i
        s = 0
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s

    order = np.argsort(-time, kind="stable")
    t_sorted = time[order]
    conc = disc = tied = inserted = 0
    start = 0
    n = time.size
    while start < n:
        stop = start
        while stop < n and t_sorted[stop] == t_sorted[start]:
            stop += 1
        group = order[start:stop]
        for i in group:
            if event[i]:
                r = int(rank[i])
                below = prefix(r)
                at_or_below = prefix(r + 1)
                conc += below
                tied += at_or_below - below
                disc += inserted - at_or_below
        for i in group:
            j = int(rank[i]) + 1
            while j <= size:
                tree[j] += 1
                j += j & -j
            inserted += 1
        start = stop
    return conc, disc, tied


def c_index(time, event, risk, method: str = "auto") -> ConcordanceResult:
    """Harrell's C over comparable pairs.

    A pair ``(i, j)`` is comparable when ``time[i] < time[j]`` and subject ``i``
    had the event. It is concordant when ``risk[i] > risk[j]``; tied risks
    count one half. Equal observed times are never comparable.

    ``method`` selects the exhaustive pair scan (``"pairs"``), the
    O(n log n) sweep (``"fenwick"``), or picks by size (``"auto"``).
    """
    time, event, risk = _inputs(time, event, risk, "risk")
    if method == "auto":
        method = "pairs" if time.size <= PAIRWISE_MAX_N else "fenwick"
    if method == "pairs":
        counts = _count_pairwise(time, event, risk)
    elif method == "fenwick":
        counts = _count_fenwick(time, event, risk)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _result(*counts)


def calibration_alpha(time, event, cumhaz_at_t) -> CalibrationResult:
    """Observed events over predicted cumulative hazard, ``sum(delta) / sum(H_i(t_i))``."""
    time, event, h = _inputs(time, event, cumhaz_at_t, "cumhaz_at_t")
    event_sum = float(np.sum(event))
    if event_sum == 0:
        raise NoEvents("calibration alpha needs at least one event")
    hazard_sum = float(np.sum(h))
    if not hazard_sum > 0:
        raise ZeroHazardSum(f"predicted hazard sum is {hazard_sum}")
    return CalibrationResult(event_sum / hazard_sum, event_sum, hazard_sum)
