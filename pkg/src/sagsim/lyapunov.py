"""Virtual energy queues and the drift-plus-penalty weights."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class VirtualQueues:
    q_u1: float = 0.0  # J, compute + transmit backlog
    q_u2: float = 0.0  # J, propulsion backlog

    def __post_init__(self):
        if self.q_u1 < 0 or self.q_u2 < 0:
            raise ValueError("virtual queues are nonnegative")


@dataclass(frozen=True)
class EnergyBudgets:
    e_bar_u1: float = 40.0
    e_bar_u2: float = 200.0

    def __post_init__(self):
        if self.e_bar_u1 <= 0 or self.e_bar_u2 <= 0:
            raise ValueError("energy budgets must be positive")

    @property
    def e_bar_total(self) -> float:
        return self.e_bar_u1 + self.e_bar_u2


@dataclass(frozen=True)
class ControllerParams:
    v_coeff: float = 10.0

    def __post_init__(self):
        if self.v_coeff <= 0:
            raise ValueError("V must be positive")


def update_queues(q: VirtualQueues, consumed_u1_j, consumed_u2_j, budgets: EnergyBudgets) -> VirtualQueues:
    if consumed_u1_j < 0 or consumed_u2_j < 0:
        raise ValueError("energy consumption cannot be negative")
    return VirtualQueues(max(q.q_u1 + consumed_u1_j - budgets.e_bar_u1, 0.0),
                         max(q.q_u2 + consumed_u2_j - budgets.e_bar_u2, 0.0))


def dpp_objective(queues: VirtualQueues, v_coeff, e_u1_j, e_u2_j, total_cost):
    """Per-slot drift-plus-penalty quantity minimised by every decision layer."""
    return queues.q_u1 * e_u1_j + queues.q_u2 * e_u2_j + v_coeff * total_cost


def drift_bound_constant(budgets, e_u1_max_j, e_u2_max_j):
    """Finite constant bounding the one-slot drift (diagnostic only).

    ``budgets`` is an :class:`EnergyBudgets` or a plain ``(e_bar_u1, e_bar_u2)`` pair.
    """
    if isinstance(budgets, EnergyBudgets):
        b1, b2 = budgets.e_bar_u1, budgets.e_bar_u2
    else:
        b1, b2 = budgets
    return 0.5 * max(b1 ** 2, (e_u1_max_j - b1) ** 2) + 0.5 * max(b2 ** 2, (e_u2_max_j - b2) ** 2)
