"""UCB-style prediction of per-satellite unit-data round-trip latency.

Arms are gated by visibility: the exploration bonus counts the slots a satellite has
been reachable, not the global slot index. Only the relay that was actually used
produces feedback.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field


@dataclass
class ArmStats:
    rtt_min: float
    rtt_max: float
    pull_count: int = 0
    visible_count: int = 0
    rtt_sum: float = 0.0
    last_prediction: float | None = None

    @property
    def empirical_mean_rtt(self) -> float | None:
        return self.rtt_sum / self.pull_count if self.pull_count else None

    @property
    def spread(self) -> float:
        return self.rtt_max - self.rtt_min


@dataclass
class BanditStats:
    arms: dict[int, ArmStats] = field(default_factory=dict)
    log_base: str = "e"  # "e" or "10"
    _ticked_slot: int | None = None

    @classmethod
    def from_satellites(cls, satellites, log_base="e"):
        """Known per-satellite bounds only; true means stay hidden."""
        return cls({s.id: ArmStats(s.rtt_min, s.rtt_max) for s in satellites}, log_base)

    def arm(self, sat_id) -> ArmStats:
        try:
            return self.arms[sat_id]
        except KeyError:
            raise KeyError(f"unknown satellite id {sat_id}") from None

    def to_json(self) -> str:
        return json.dumps({
            str(k): {"h": a.pull_count, "visible": a.visible_count,
                     "mean": a.empirical_mean_rtt, "last_prediction": a.last_prediction}
            for k, a in sorted(self.arms.items())
        }, indent=2)


def exploration_bonus(spread, visible_count, pull_count, log_base="e"):
    log = math.log if log_base == "e" else math.log10
    return spread * math.sqrt(3.0 * log(visible_count) / (2.0 * pull_count))


def predict_rtt(sat_id, slot: int, stats: BanditStats) -> float:
    """Optimistic (lower-confidence) latency estimate, never below the known minimum."""
    arm = stats.arm(sat_id)
    if slot == 1 or arm.pull_count == 0:
        pred = arm.rtt_min
    else:
        bonus = exploration_bonus(arm.spread, max(arm.visible_count, 1), arm.pull_count, stats.log_base)
        pred = max(arm.empirical_mean_rtt - bonus, arm.rtt_min)
    arm.last_prediction = pred
    return pred


def record_feedback(sat_id, observed_rtt: float, stats: BanditStats) -> BanditStats:
    arm = stats.arm(sat_id)
    arm.pull_count += 1
    arm.rtt_sum += observed_rtt
    return stats


def tick_visibility(visible_ids, stats: BanditStats, slot: int) -> BanditStats:
    """Count one more visible slot for each id; at most once per slot."""
    if stats._ticked_slot == slot:
        raise RuntimeError(f"visibility already ticked for slot {slot}")
    for s in visible_ids:
        stats.arm(s).visible_count += 1
    stats._ticked_slot = slot
    return stats
