"""Seeded stochastic world: tasks, IoTD mobility, satellite snapshot epochs and
ground-truth satellite latencies."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SatelliteSpec:
    id: int
    rtt_min: float  # s/bit
    rtt_max: float  # s/bit
    energy_per_bit: float  # J/bit

    def __post_init__(self):
        if not (0.0 < self.rtt_min < self.rtt_max):
            raise ValueError(f"satellite {self.id}: need 0 < rtt_min < rtt_max")
        if self.energy_per_bit <= 0:
            raise ValueError(f"satellite {self.id}: energy_per_bit must be positive")

    @property
    def spread(self) -> float:
        return self.rtt_max - self.rtt_min


@dataclass(frozen=True)
class SnapshotSchedule:
    epoch_len_slots: int
    visibility: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if self.epoch_len_slots < 1:
            raise ValueError("epoch length must be at least one slot")
        if any(len(v) == 0 for v in self.visibility):
            raise ValueError("every epoch needs at least one visible satellite")

    @property
    def horizon(self) -> int:
        return self.epoch_len_slots * len(self.visibility)


@dataclass(frozen=True)
class TaskDistribution:
    size_range_bits: tuple[float, float] = (0.5e6, 3e6)
    density_range: tuple[float, float] = (500.0, 1000.0)
    deadline_s: float = 1.0

    def __post_init__(self):
        for lo, hi in (self.size_range_bits, self.density_range):
            if not (0 < lo <= hi):
                raise ValueError(f"bad range ({lo}, {hi})")
        if self.deadline_s <= 0:
            raise ValueError("deadline must be positive")


@dataclass
class MobilityState:
    velocity_mps: np.ndarray  # (M, 2)
    mean_velocity: np.ndarray  # (M, 2), magnitude = mean speed
    memory_level: float = 0.9
    asymptotic_std: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.memory_level <= 1.0:
            raise ValueError("memory level must lie in [0, 1]")
        if self.asymptotic_std < 0:
            raise ValueError("asymptotic std must be nonnegative")


@dataclass(frozen=True)
class TaskBatch:
    """One task per IoTD for a single slot, as parallel arrays."""
    data_bits: np.ndarray
    density: np.ndarray
    deadline_s: np.ndarray

    def __len__(self):
        return len(self.data_bits)


def generate_tasks(n_iotds: int, dist: TaskDistribution, rng: np.random.Generator) -> TaskBatch:
    data = rng.uniform(*dist.size_range_bits, size=n_iotds)
    density = rng.uniform(*dist.density_range, size=n_iotds)
    return TaskBatch(data, density, np.full(n_iotds, dist.deadline_s))


def init_mobility(n_iotds, mean_speed, memory_level, asymptotic_std, rng) -> MobilityState:
    """Each IoTD gets a random mean heading; initial velocity equals the mean."""
    heading = rng.uniform(0.0, 2.0 * np.pi, size=n_iotds)
    mean = mean_speed * np.column_stack([np.cos(heading), np.sin(heading)])
    return MobilityState(mean.copy(), mean, memory_level, asymptotic_std)


def step_mobility(state: MobilityState, positions, tau_s, area_bounds, rng):
    """Gauss-Markov velocity update, then move and reflect at the area boundary.

    ``area_bounds`` is ``((x_lo, x_hi), (y_lo, y_hi))`` or ``None`` for an unbounded plane.
    A reflection flips both the velocity and the mean-velocity component on that axis so
    that nodes drift back into the area instead of piling up at a wall.
    Returns ``(positions, state)``; inputs are not modified.
    """
    a = state.memory_level
    noise = rng.standard_normal(state.velocity_mps.shape)
    vel = (a * state.velocity_mps + (1.0 - a) * state.mean_velocity
           + state.asymptotic_std * math.sqrt(1.0 - a * a) * noise)
    mean = state.mean_velocity.copy()
    pos = np.asarray(positions, dtype=float) + vel * tau_s
    if area_bounds is not None:
        for axis, (lo, hi) in enumerate(area_bounds):
            width = hi - lo
            # fold into [lo, hi]; one fold suffices unless a step exceeds the width
            x = np.mod(pos[:, axis] - lo, 2.0 * width)
            flipped = (pos[:, axis] < lo) | (pos[:, axis] > hi)
            x = np.where(x > width, 2.0 * width - x, x)
            pos[:, axis] = lo + x
            vel[flipped, axis] *= -1.0
            mean[flipped, axis] *= -1.0
    return pos, MobilityState(vel, mean, state.memory_level, state.asymptotic_std)


def build_schedule(n_satellites, n_visible, epoch_len, horizon, rng) -> SnapshotSchedule:
    """Seeded rotation: a random ordering of the pool; epoch ``e`` sees a window of
    ``n_visible`` consecutive entries starting at ``2 e`` (mod pool size)."""
    if not 1 <= n_visible <= n_satellites:
        raise ValueError("need 1 <= n_visible <= n_satellites")
    order = rng.permutation(n_satellites)
    n_epochs = -(-horizon // epoch_len)
    step = 2 if n_visible < n_satellites else 0
    vis = []
    for e in range(n_epochs):
        start = e * step
        vis.append(tuple(sorted(int(order[(start + j) % n_satellites]) for j in range(n_visible))))
    return SnapshotSchedule(epoch_len, tuple(vis))


def visible_set(slot: int, schedule: SnapshotSchedule) -> tuple[int, ...]:
    """Visible satellite ids at 1-based ``slot``."""
    if slot < 1:
        raise ValueError("slots are 1-based")
    epoch = (slot - 1) // schedule.epoch_len_slots
    if epoch >= len(schedule.visibility):
        raise IndexError(f"slot {slot} lies beyond the visibility schedule "
                         f"({schedule.horizon} slots); horizon and schedule disagree")
    return schedule.visibility[epoch]


def build_satellites(n, rtt_min_range, rtt_max_range, energy_range, rng) -> list[SatelliteSpec]:
    lo = rng.uniform(*rtt_min_range, size=n)
    hi = rng.uniform(*rtt_max_range, size=n)
    z = rng.uniform(*energy_range, size=n)
    return [SatelliteSpec(i, float(lo[i]), float(hi[i]), float(z[i])) for i in range(n)]


def sample_truncated_gaussian(lo, hi, std, rng, max_tries=1000):
    """Normal centred on the interval midpoint, truncated to [lo, hi] by rejection."""
    if hi <= lo or std <= 0:
        return lo
    mid = 0.5 * (lo + hi)
    for _ in range(max_tries):
        x = rng.normal(mid, std)
        if lo <= x <= hi:
            return x
    return mid


def sample_rtt(sat: SatelliteSpec, rng, std_fraction=0.25) -> float:
    return sample_truncated_gaussian(sat.rtt_min, sat.rtt_max, std_fraction * sat.spread, rng)


@dataclass
class Environment:
    """The world of one run. Its random stream is independent of the policy's decisions:
    every slot draws tasks, all visible satellite latencies and mobility noise in a fixed
    order, so two policies sharing a seed see the same world."""
    n_iotds: int
    area_bounds: tuple[tuple[float, float], tuple[float, float]]
    tau_s: float
    tasks: TaskDistribution
    satellites: list[SatelliteSpec]
    schedule: SnapshotSchedule
    iotd_cpu_hz: np.ndarray
    positions: np.ndarray
    mobility: MobilityState | None
    rng: np.random.Generator
    rtt_std_fraction: float = 0.25
    slot: int = 1
    _pending: dict = field(default_factory=dict, repr=False)

    def observe(self):
        """Draw this slot's tasks and the ground-truth latencies of the visible satellites.

        Latencies stay inside the environment; only ``realized_rtt`` of the relay actually
        used leaves it.
        """
        if "tasks" not in self._pending:
            tasks = generate_tasks(self.n_iotds, self.tasks, self.rng)
            vis = visible_set(self.slot, self.schedule)
            rtts = {s: sample_rtt(self.satellites[s], self.rng, self.rtt_std_fraction) for s in vis}
            self._pending = {"tasks": tasks, "visible": vis, "rtt": rtts}
        return self._pending["tasks"], self._pending["visible"]

    def realized_rtt(self, sat_id: int) -> float:
        return self._pending["rtt"][sat_id]

    def advance(self):
        if self.mobility is not None:
            self.positions, self.mobility = step_mobility(
                self.mobility, self.positions, self.tau_s, self.area_bounds, self.rng)
        self._pending = {}
        self.slot += 1
