import pytest
from hypothesis import given
from hypothesis import strategies as st

from sagsim.lyapunov import (ControllerParams, EnergyBudgets, VirtualQueues, dpp_objective,
                             drift_bound_constant, update_queues)

B = EnergyBudgets()


def test_queue_update_values():
    assert update_queues(VirtualQueues(), 50.0, 0.0, B).q_u1 == pytest.approx(10.0)
    assert update_queues(VirtualQueues(7.0, 3.0), 40.0, 200.0, B) == VirtualQueues(7.0, 3.0)
    assert update_queues(VirtualQueues(5.0, 0.0), 30.0, 0.0, B).q_u1 == 0.0


def test_queue_update_rejects_negative_energy():
    with pytest.raises(ValueError):
        update_queues(VirtualQueues(), -1.0, 0.0, B)


def test_dpp_values():
    assert dpp_objective(VirtualQueues(), 3.0, 10.0, 20.0, 4.0) == 12.0
    assert dpp_objective(VirtualQueues(2.0, 0.0), 1.0, 3.0, 5.0, 4.0) == 10.0


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.1, 100), st.floats(0, 500), st.floats(0, 500),
       st.floats(0, 50), st.floats(0.1, 10))
def test_dpp_linear_in_v(q1, q2, v, e1, e2, cost, lam):
    q = VirtualQueues(q1, q2)
    base = dpp_objective(q, v, e1, e2, cost)
    scaled = dpp_objective(q, lam * v, e1, e2, cost)
    assert scaled - base == pytest.approx((lam - 1) * v * cost, rel=1e-9, abs=1e-9)


def test_drift_constant_values():
    assert drift_bound_constant(B, 100.0, 300.0) == pytest.approx(21800.0)
    assert drift_bound_constant(B, 80.0, 400.0) == pytest.approx(0.5 * 40 ** 2 + 0.5 * 200 ** 2)
    assert drift_bound_constant((0.0, 0.0), 0.0, 0.0) == 0.0


def test_budget_total_and_validation():
    assert B.e_bar_total == 240.0
    with pytest.raises(ValueError):
        EnergyBudgets(0.0, 10.0)
    with pytest.raises(ValueError):
        ControllerParams(0.0)
    with pytest.raises(ValueError):
        VirtualQueues(-1.0, 0.0)


@given(st.lists(st.tuples(st.floats(0, 300), st.floats(0, 600)), min_size=1, max_size=200))
def test_queues_bound_average_excess(consumption):
    q = VirtualQueues()
    excess = 0.0
    for e1, e2 in consumption:
        q = update_queues(q, e1, e2, B)
        assert q.q_u1 >= 0 and q.q_u2 >= 0
        excess += e1 + e2 - B.e_bar_total
    assert q.q_u1 + q.q_u2 >= excess - 1e-6 * len(consumption)
