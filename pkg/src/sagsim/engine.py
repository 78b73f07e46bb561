"""Online slot loop, baseline policies, metric accounting and parameter sweeps."""

from __future__ import annotations

import math
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bandit
from .config import ScenarioConfig
from .environment import (Environment, TaskDistribution, build_satellites, build_schedule,
                          init_mobility)
from .game import CLOUD, LOCAL, UAV, SlotContext, allocate, is_feasible, nash_solve
from .lyapunov import EnergyBudgets, VirtualQueues, update_queues
from .model import (cloud_terms, dbm_to_watts, link_gain, local_terms, los_probability,
                    propulsion_power, slot_cost, snr_coefficient, uav_terms, uplink_rate)
from .trajectory import TrajectoryProblem, sca_optimize

SWEEP_AXES = {
    "task_size": lambda v: {"tasks.size_range_mb": (float(v), float(v))},
    "uav_compute": lambda v: {"uav.max_compute_ghz": float(v)},
    "v_coeff": lambda v: {"controller.v_coeff": float(v)},
}


class SimulationAbort(RuntimeError):
    """A module failed mid-run; carries the slot index and a state dump."""

    def __init__(self, slot, message, state):
        super().__init__(f"slot {slot}: {message}")
        self.slot = slot
        self.state = state


_FLOAT_COLS = ("total_cost", "mean_latency", "iotd_energy", "uav_energy_u1", "uav_energy_u2",
               "q_u1", "q_u2", "uav_x", "uav_y")
_INT_COLS = ("n_local", "n_uav", "n_cloud", "satellite", "deadline_misses")


@dataclass
class MetricsSeries:
    """Per-slot records plus running sums of the four headline metrics."""
    horizon: int
    columns: dict = field(default_factory=dict)
    n_recorded: int = 0
    running: dict = field(default_factory=lambda: {"cost": 0.0, "latency": 0.0, "iotd": 0.0, "uav": 0.0})
    finalized: bool = False

    def __post_init__(self):
        if not self.columns:
            self.columns = {c: np.zeros(self.horizon) for c in _FLOAT_COLS}
            self.columns.update({c: np.zeros(self.horizon, dtype=np.int64) for c in _INT_COLS})

    def record(self, **row):
        i = self.n_recorded
        for k, v in row.items():
            self.columns[k][i] = v
        self.running["cost"] += row["total_cost"]
        self.running["latency"] += row["mean_latency"]
        self.running["iotd"] += row["iotd_energy"]
        self.running["uav"] += row["uav_energy_u1"] + row["uav_energy_u2"]
        self.n_recorded += 1

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name][:self.n_recorded]

    def finalize(self) -> MetricsSeries:
        """Check running averages against the records."""
        pairs = {"cost": self["total_cost"], "latency": self["mean_latency"],
                 "iotd": self["iotd_energy"], "uav": self["uav_energy_u1"] + self["uav_energy_u2"]}
        for key, col in pairs.items():
            if not math.isclose(self.running[key], math.fsum(col), rel_tol=1e-9, abs_tol=1e-12):
                raise AssertionError(f"running sum of {key} drifted from its records")
        self.finalized = True
        return self

    def _avg(self, key):
        return self.running[key] / max(self.n_recorded, 1)

    @property
    def tic(self) -> float:
        return self._avg("cost")

    @property
    def avg_latency(self) -> float:
        return self._avg("latency")

    @property
    def avg_iotd_energy(self) -> float:
        return self._avg("iotd")

    @property
    def avg_uav_energy(self) -> float:
        return self._avg("uav")

    def summary(self) -> dict:
        n = max(self.n_recorded, 1)
        return {
            "slots": self.n_recorded,
            "time_avg_iotd_cost": self.tic,
            "avg_task_latency_s": self.avg_latency,
            "time_avg_iotd_energy_j": self.avg_iotd_energy,
            "time_avg_uav_energy_j": self.avg_uav_energy,
            "final_q_u1": float(self["q_u1"][-1]) if self.n_recorded else 0.0,
            "final_q_u2": float(self["q_u2"][-1]) if self.n_recorded else 0.0,
            "avg_devices_per_mode": {
                "local": float(self["n_local"].sum()) / n,
                "uav": float(self["n_uav"].sum()) / n,
                "cloud": float(self["n_cloud"].sum()) / n,
            },
            "realized_deadline_misses": int(self["deadline_misses"].sum()),
        }


def _build_environment(cfg: ScenarioConfig, rng) -> Environment:
    sc, sat, io, tk = cfg.scenario, cfg.satellites, cfg.iotd, cfg.tasks
    satellites = build_satellites(sat.pool_size, sat.rtt_min_range, sat.rtt_max_range,
                                  sat.energy_per_bit_range, rng)
    schedule = build_schedule(sat.pool_size, sat.visible, sat.epoch_slots, sc.horizon, rng)
    cpu = rng.choice(np.asarray(io.cpu_choices_ghz) * 1e9, size=sc.n_iotds)
    positions = rng.uniform(0.0, sc.area_m, size=(sc.n_iotds, 2))
    mobility = (init_mobility(sc.n_iotds, io.mean_speed_mps, io.memory_level, io.velocity_std, rng)
                if io.mobile else None)
    tasks = TaskDistribution(tuple(x * 1e6 for x in tk.size_range_mb), tk.density_range, tk.deadline_s)
    area = ((0.0, sc.area_m), (0.0, sc.area_m))
    return Environment(sc.n_iotds, area, cfg.uav.slot_s, tasks, satellites, schedule, cpu,
                       positions, mobility, rng, sat.rtt_std_fraction)


class Simulation:
    """One run of the online controller under a given policy.

    The environment and the policy draw from separate streams spawned from the seed,
    so every policy sees the same world for the same seed.
    """

    def __init__(self, cfg: ScenarioConfig, on_slot=None, capture_sca: bool = False):
        self.cfg = cfg
        self.capture_sca = capture_sca
        self.last_sca_trace = None
        env_seq, policy_seq = np.random.SeedSequence(cfg.scenario.seed).spawn(2)
        self.env = _build_environment(cfg, np.random.default_rng(env_seq))
        self.policy_rng = np.random.default_rng(policy_seq)
        self.policy = cfg.scenario.policy
        self.stats = bandit.BanditStats.from_satellites(self.env.satellites, cfg.bandit.log_base)
        self.queues = VirtualQueues()
        self.budgets = EnergyBudgets(cfg.controller.e_bar_u1, cfg.controller.e_bar_u2)
        self.uav_position = np.array(cfg.uav.initial_position_m, dtype=float)
        self.profile = None
        self.series = MetricsSeries(cfg.scenario.horizon)
        self.on_slot = on_slot
        self._uav, self._radio = cfg.uav_params(), cfg.radio_params()
        self._prop, self._weights = cfg.propulsion_params(), cfg.cost_weights()
        self._tx_power = dbm_to_watts(cfg.iotd.tx_power_dbm)
        self._energy_per_bit = np.array([s.energy_per_bit for s in self.env.satellites])

    @property
    def done(self) -> bool:
        return self.env.slot > self.cfg.scenario.horizon

    # --- per-slot pieces ------------------------------------------------------

    def _relay_estimates(self, slot, visible):
        """(predicted latencies, forced relay or None) under the current policy."""
        if self.policy == "eps_greedy":
            arms = [self.stats.arm(s) for s in visible]
            est = np.array([a.empirical_mean_rtt if a.pull_count else a.rtt_min for a in arms])
            if self.policy_rng.random() < self.cfg.bandit.epsilon:
                forced = visible[int(self.policy_rng.integers(len(visible)))]
            else:
                forced = visible[int(np.argmin(est))]
            return est, forced
        return np.array([bandit.predict_rtt(s, slot, self.stats) for s in visible]), None

    def _context(self, tasks, visible, preds, forced, horiz):
        uav, radio = self._uav, self._radio
        n = len(tasks)
        power = np.full(n, self._tx_power)
        rate_full = uplink_rate(1.0, radio, uav.bandwidth_hz, power,
                                link_gain(horiz, uav.altitude_m, radio))
        ll, le = local_terms(tasks.data_bits, tasks.density, self.env.iotd_cpu_hz, radio)
        q1 = 0.0 if self.policy == "ocq" else self.queues.q_u1
        return SlotContext(tasks.data_bits, tasks.density, power, tasks.deadline_s, ll, le, rate_full,
                           tuple(visible), preds, self._energy_per_bit[list(visible)], q1,
                           self.cfg.controller.v_coeff, self._weights, uav,
                           allow_cloud=self.policy != "uac", equal_allocation=self.policy == "era",
                           forced_satellite=forced)

    def _next_position(self, ctx, profile, alloc, horiz, positions):
        off = profile != LOCAL
        uav, radio, w = self._uav, self._radio, self._weights
        D, P = ctx.data_bits[off], ctx.tx_power_w[off]
        weights = (w.latency_weight * D + w.energy_weight * P * D) / (alloc.bandwidth_fraction[off] * uav.bandwidth_hz)
        snr = snr_coefficient(los_probability(horiz[off], uav.altitude_m, radio), P, radio)
        q2 = 0.0 if self.policy == "ocq" else self.queues.q_u2
        prob = TrajectoryProblem(self.uav_position, positions[off], weights, snr, uav.altitude_m, q2,
                                 self.cfg.controller.v_coeff, self._prop, uav.slot_duration_s,
                                 uav.max_speed_mps)
        t = self.cfg.trajectory
        trace = [] if self.capture_sca else None
        q = sca_optimize(prob, max_outer=t.max_outer, rtol=t.rtol, inner_iter=t.inner_iter,
                         inner_tol=t.inner_tol, trace=trace)
        self.last_sca_trace = trace
        return q

    def step(self):
        slot = self.env.slot
        try:
            self._step(slot)
        except SimulationAbort:
            raise
        except Exception as exc:
            raise SimulationAbort(slot, f"{type(exc).__name__}: {exc}", self.state_dump()) from exc

    def _step(self, slot):
        env, uav = self.env, self._uav
        tasks, visible = env.observe()
        positions = env.positions
        horiz = np.linalg.norm(positions - self.uav_position, axis=1)

        bandit.tick_visibility(visible, self.stats, slot)
        preds, forced = self._relay_estimates(slot, visible)
        ctx = self._context(tasks, visible, preds, forced, horiz)

        start = self.profile if self.profile is not None else np.zeros(ctx.n, dtype=np.int8)
        profile = nash_solve(start, ctx)
        if not is_feasible(profile, ctx):
            raise SimulationAbort(slot, "equilibrium violates a deadline at decision time", self.state_dump())
        alloc = allocate(profile, ctx)
        q_next = self._next_position(ctx, profile, alloc, horiz, positions)

        # charge the slot at the current position with the realised relay latency
        lat, e_iotd = ctx.local_latency.copy(), ctx.local_energy.copy()
        rate = alloc.bandwidth_fraction * ctx.rate_full
        u, c = profile == UAV, profile == CLOUD
        e_u1 = 0.0
        relay = -1
        if u.any():
            lat[u], e_iotd[u], comp = uav_terms(ctx.data_bits[u], ctx.density[u], rate[u],
                                                alloc.compute_fraction[u] * uav.max_compute_hz,
                                                ctx.tx_power_w[u], uav)
            e_u1 += math.fsum(comp)
        if c.any():
            relay = ctx.satellite
            observed = env.realized_rtt(relay)
            lat[c], e_iotd[c], trans = cloud_terms(ctx.data_bits[c], rate[c], observed,
                                                   ctx.relay_energy_per_bit, ctx.tx_power_w[c])
            e_u1 += math.fsum(trans)
            bandit.record_feedback(relay, observed, self.stats)
        speed = float(np.linalg.norm(q_next - self.uav_position)) / uav.slot_duration_s
        e_u2 = propulsion_power(speed, self._prop) * uav.slot_duration_s
        off = profile != LOCAL
        misses = int(np.sum(lat[off] > ctx.deadline_s[off] * (1.0 + 1e-12)))
        cost = slot_cost(LOCAL, lat, e_iotd, self._weights)

        self.queues = update_queues(self.queues, e_u1, e_u2, self.budgets)
        self.series.record(
            total_cost=math.fsum(cost), mean_latency=float(np.mean(lat)), iotd_energy=math.fsum(e_iotd),
            uav_energy_u1=e_u1, uav_energy_u2=e_u2, q_u1=self.queues.q_u1, q_u2=self.queues.q_u2,
            uav_x=self.uav_position[0], uav_y=self.uav_position[1], n_local=int(np.sum(profile == LOCAL)),
            n_uav=int(u.sum()), n_cloud=int(c.sum()), satellite=relay, deadline_misses=misses)
        if self.on_slot is not None:
            self.on_slot(self, slot, ctx, profile.copy())
        self.uav_position = q_next
        self.profile = profile
        env.advance()

    def run(self) -> MetricsSeries:
        while not self.done:
            self.step()
        return self.series.finalize()

    # --- checkpointing --------------------------------------------------------

    def state_dump(self) -> dict:
        return {
            "slot": self.env.slot,
            "policy": self.policy,
            "uav_position": self.uav_position.tolist(),
            "queues": [self.queues.q_u1, self.queues.q_u2],
            "profile": None if self.profile is None else self.profile.tolist(),
            "bandit": self.stats.to_json(),
        }

    def save(self, path):
        hook, self.on_slot = self.on_slot, None
        try:
            Path(path).write_bytes(pickle.dumps(self))
        finally:
            self.on_slot = hook

    @staticmethod
    def load(path, on_slot=None) -> Simulation:
        sim = pickle.loads(Path(path).read_bytes())
        sim.on_slot = on_slot
        return sim


def run(cfg: ScenarioConfig, on_slot=None) -> MetricsSeries:
    return Simulation(cfg, on_slot).run()


def run_baseline(policy: str, cfg: ScenarioConfig) -> MetricsSeries:
    return run(cfg.with_overrides({"scenario.policy": policy}))


def _sweep_job(args):
    cfg_json, = args
    return run(ScenarioConfig.model_validate_json(cfg_json))


def sweep(cfg: ScenarioConfig, axis: str, values, policies=None, seeds=None, workers: int = 1) -> dict:
    """One run per (policy, value, seed); all policies share the seeds, so comparisons
    are paired. Returns ``{(policy, value, seed): MetricsSeries}``."""
    if axis not in SWEEP_AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")
    policies = list(policies or [cfg.scenario.policy])
    seeds = list(seeds if seeds is not None else [cfg.scenario.seed])
    keys, jobs = [], []
    for p in policies:
        for v in values:
            for s in seeds:
                over = SWEEP_AXES[axis](v) | {"scenario.policy": p, "scenario.seed": int(s)}
                keys.append((p, v, s))
                jobs.append((cfg.with_overrides(over).model_dump_json(),))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    return dict(zip(keys, results))
