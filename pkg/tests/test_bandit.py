import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagsim.bandit import (ArmStats, BanditStats, exploration_bonus, predict_rtt, record_feedback,
                           tick_visibility)
from sagsim.environment import SatelliteSpec


def _stats():
    return BanditStats.from_satellites([SatelliteSpec(0, 16e-8, 31e-8, 1e-7),
                                        SatelliteSpec(1, 18e-8, 33e-8, 1e-7)])


def test_first_slot_and_unpulled_use_minimum():
    s = _stats()
    assert predict_rtt(0, 1, s) == 16e-8
    assert predict_rtt(1, 50, s) == 18e-8


def test_prediction_hand_value():
    s = BanditStats({0: ArmStats(16e-8, 31e-8, pull_count=100, visible_count=1000, rtt_sum=100 * 25e-8)})
    factor = math.sqrt(3 * math.log(1000) / 200)
    assert factor == pytest.approx(0.321895, rel=1e-5)
    assert predict_rtt(0, 1001, s) == pytest.approx(2.01716e-7, rel=1e-5)
    assert s.arm(0).last_prediction == predict_rtt(0, 1001, s)


def test_large_bonus_is_clamped():
    s = BanditStats({0: ArmStats(16e-8, 31e-8, pull_count=1, visible_count=1000, rtt_sum=20e-8)})
    assert predict_rtt(0, 5, s) == 16e-8


def test_log10_switch():
    s = BanditStats({0: ArmStats(16e-8, 31e-8, 100, 1000, 100 * 25e-8)}, log_base="10")
    assert predict_rtt(0, 2, s) == pytest.approx(25e-8 - 15e-8 * math.sqrt(3 * 3 / 200))


def test_feedback_running_mean():
    s = _stats()
    record_feedback(0, 2.0, s)
    assert s.arm(0).empirical_mean_rtt == 2.0 and s.arm(0).pull_count == 1
    record_feedback(0, 4.0, s)
    assert s.arm(0).empirical_mean_rtt == 3.0


def test_unknown_arm():
    with pytest.raises(KeyError):
        predict_rtt(9, 2, _stats())


def test_visibility_ticks():
    s = _stats()
    for t in range(1, 301):
        tick_visibility([0], s, t)
    assert s.arm(0).visible_count == 300 and s.arm(1).visible_count == 0
    with pytest.raises(RuntimeError):
        tick_visibility([0], s, 300)


def test_json_dump():
    s = _stats()
    record_feedback(1, 2e-7, s)
    dump = json.loads(s.to_json())
    assert dump["1"]["h"] == 1 and dump["0"]["mean"] is None


@given(st.floats(1e-9, 1e-6), st.integers(2, 10_000), st.integers(1, 5000), st.integers(1, 5000))
def test_bonus_monotonicity(spread, vis, h1, h2):
    if h1 == h2:
        return
    lo, hi = sorted((h1, h2))
    assert exploration_bonus(spread, vis, hi) < exploration_bonus(spread, vis, lo)
    assert exploration_bonus(spread, vis + 1, lo) >= exploration_bonus(spread, vis, lo)


@given(st.lists(st.floats(16e-8, 31e-8), min_size=1, max_size=50), st.integers(2, 10_000))
def test_prediction_within_bounds(obs, slot):
    s = BanditStats({0: ArmStats(16e-8, 31e-8)})
    for t, o in enumerate(obs, start=1):
        tick_visibility([0], s, t)
        record_feedback(0, o, s)
    p = predict_rtt(0, slot, s)
    assert 16e-8 <= p <= max(obs) + 1e-20
    assert s.arm(0).pull_count <= s.arm(0).visible_count
