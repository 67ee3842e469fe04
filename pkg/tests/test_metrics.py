import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from survml.errors import NoComparablePairs, NoEvents, ZeroHazardSum
from survml.metrics import c_index, calibration_alpha


def pair_oracle(time, event, risk):
    """Enumerate every ordered pair and apply the comparability rule directly."""
    conc = disc = tied = 0
    n = len(time)
    for i in range(n):
        for j in range(n):
            if not (event[i] == 1 and time[i] < time[j]):
                continue
            if risk[i] > risk[j]:
                conc += 1
            elif risk[i] < risk[j]:
                disc += 1
            else:
                tied += 1
    return conc, disc, tied


def test_perfect_ordering():
    time = np.arange(1.0, 11.0)
    assert c_index(time, np.ones(10), -time).c_index == 1.0


def test_all_ties():
    res = c_index(np.arange(1.0, 6.0), np.ones(5), np.zeros(5))
    assert res.c_index == 0.5
    assert res.tied_risk == res.comparable == 10


def test_worked_example_matches_oracle():
    time = [2, 4, 6, 8, 10]
    event = [1, 0, 1, 1, 0]
    risk = [9, 5, 7, 1, 2]
    res = c_index(time, event, risk)
    conc, disc, tied = pair_oracle(time, event, risk)
    assert (res.concordant, res.discordant, res.tied_risk) == (conc, disc, tied)
    # t=2 beats all four later subjects, t=6 beats t=8 and t=10, t=8 loses to t=10
    assert (conc, disc, tied) == (6, 1, 0)
    assert res.c_index == 6 / 7


def test_censored_earlier_subject_not_comparable():
    # subject 0 is censored first, so only (1, 2) counts
    res = c_index([1, 2, 3], [0, 1, 0], [5, 1, 0])
    assert res.comparable == 1 and res.concordant == 1


def test_equal_times_not_comparable():
    with pytest.raises(NoComparablePairs):
        c_index([1, 1], [1, 1], [0, 1])


def test_no_comparable_pairs():
    with pytest.raises(NoComparablePairs):
        c_index([1, 2, 3], [0, 0, 0], [1, 2, 3])


def random_instance(rng):
    n = int(rng.integers(2, 51))
    time = rng.integers(1, max(3, n // 2), size=n).astype(float)
    event = (rng.random(n) < rng.uniform(0.2, 1.0)).astype(int)
    event[0] = 1
    time[0] = 0.5  # guarantees a comparable pair
    risk = rng.integers(0, 6, size=n).astype(float) if rng.random() < 0.5 else rng.normal(size=n)
    return time, event, risk


def test_both_paths_equal_oracle_on_random_instances():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        time, event, risk = random_instance(rng)
        oracle = pair_oracle(time, event, risk)
        pairs = c_index(time, event, risk, method="pairs")
        fen = c_index(time, event, risk, method="fenwick")
        assert (pairs.concordant, pairs.discordant, pairs.tied_risk) == oracle
        assert pairs == fen


def test_counts_invariant():
    rng = np.random.default_rng(1)
    time, event, risk = random_instance(rng)
    r = c_index(time, event, risk)
    assert r.concordant + r.discordant + r.tied_risk == r.comparable
    assert r.c_index == (r.concordant + 0.5 * r.tied_risk) / r.comparable


def test_auto_switches_to_fenwick_for_large_n():
    rng = np.random.default_rng(4)
    n = 2500
    time, event, risk = rng.exponential(size=n), rng.integers(0, 2, n), rng.normal(size=n)
    assert c_index(time, event, risk) == c_index(time, event, risk, method="pairs")


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=50, deadline=None)
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    time, event, risk = random_instance(rng)
    base = c_index(time, event, risk)
    assert c_index(time, event, np.exp(risk) * 3 + 1) == base


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=50, deadline=None)
def test_negated_risk_complements(seed):
    rng = np.random.default_rng(seed)
    time, event, _ = random_instance(rng)
    risk = rng.permutation(len(time)).astype(float)  # no ties
    assert c_index(time, event, risk).c_index + c_index(time, event, -risk).c_index == pytest.approx(1.0)


def test_alpha_arithmetic():
    res = calibration_alpha([1, 2, 3], [1, 0, 1], [0.5, 0.2, 0.8])
    assert res.alpha == 2 / 1.5
    assert res.event_sum == 2 and res.hazard_sum == pytest.approx(1.5)


def test_alpha_scaling_law():
    rng = np.random.default_rng(0)
    time = rng.exponential(size=30)
    event = rng.integers(0, 2, 30)
    event[0] = 1
    h = rng.exponential(size=30)
    base = calibration_alpha(time, event, h).alpha
    for c in rng.uniform(0.1, 10, size=20):
        assert calibration_alpha(time, event, h * c).alpha == pytest.approx(base / c, rel=1e-14)


def test_alpha_errors():
    with pytest.raises(NoEvents):
        calibration_alpha([1, 2], [0, 0], [1, 1])
    with pytest.raises(ZeroHazardSum):
        calibration_alpha([1, 2], [1, 0], [0, 0])
