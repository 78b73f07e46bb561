"""Scenario configuration.

Every field carries a default. Fields whose default is an assumption of this
simulator rather than a published setting are tagged with ``non_paper_default`` in
their schema metadata and listed by :func:`non_paper_defaults`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .model import CostWeights, PropulsionParams, RadioParams, UavParams, dbm_to_watts

POLICIES = ("odoa", "uac", "era", "eps_greedy", "ocq")


def _invented(default, description="", **constraints):
    return Field(default, description=description, json_schema_extra={"non_paper_default": True},
                 **constraints)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ScenarioSection(_Section):
    n_iotds: int = Field(20, ge=1)
    area_m: float = Field(600.0, gt=0, description="side of the square service area [0, area]^2")
    horizon: int = _invented(3000, "slots per run (10 epochs)", ge=1)
    seed: int = _invented(0)
    policy: Literal["odoa", "uac", "era", "eps_greedy", "ocq"] = "odoa"


class UavSection(_Section):
    altitude_m: float = Field(100.0, gt=0)
    max_compute_ghz: float = Field(30.0, gt=0)
    bandwidth_mhz: float = Field(15.0, gt=0)
    max_speed_mps: float = Field(25.0, gt=0)
    initial_position_m: tuple[float, float] = (0.0, 0.0)
    energy_per_cycle_j: float = Field(8.2e-9, gt=0)
    slot_s: float = Field(1.0, gt=0)


class RadioSection(_Section):
    carrier_ghz: float = _invented(2.0)
    noise_dbm: float = -98.0
    los_c1: float = 10.0
    los_c2: float = 0.6
    extra_loss_los_db: float = 1.0
    extra_loss_nlos_db: float = 20.0
    switched_capacitance: float = Field(1e-28, gt=0)


class PropulsionSection(_Section):
    c1_w: float = 80.0
    c2_w: float = 22.0
    c3: float = 263.4
    c4: float = 0.0092
    tip_speed_mps: float = 120.0


class IotdSection(_Section):
    cpu_choices_ghz: tuple[float, ...] = (1.0, 1.5, 2.0)
    tx_power_dbm: float = 20.0
    mobile: bool = _invented(True, "Gauss-Markov motion; false keeps devices fixed")
    mean_speed_mps: float = Field(1.0, ge=0)
    memory_level: float = Field(0.9, ge=0, le=1)
    velocity_std: float = Field(2.0, ge=0)


class TaskSection(_Section):
    size_range_mb: tuple[float, float] = (0.5, 3.0)
    density_range: tuple[float, float] = (500.0, 1000.0)
    deadline_s: float = Field(1.0, gt=0)


class SatelliteSection(_Section):
    pool_size: int = _invented(10, ge=1)
    visible: int = _invented(5, ge=1)
    epoch_slots: int = Field(300, ge=1)
    rtt_min_range: tuple[float, float] = (15e-8, 20e-8)
    rtt_max_range: tuple[float, float] = (30e-8, 35e-8)
    energy_per_bit_range: tuple[float, float] = _invented((5e-8, 2e-7))
    rtt_std_fraction: float = _invented(0.25, "pre-truncation std as a fraction of the support", gt=0)

    @model_validator(mode="after")
    def _check(self):
        if not 1 <= self.visible <= self.pool_size:
            raise ValueError("need 1 <= visible <= pool_size")
        if self.rtt_min_range[1] >= self.rtt_max_range[0]:
            raise ValueError("every rtt_min must lie below every rtt_max")
        return self


class ControllerSection(_Section):
    # calibrated on held-out seeds; see the README section on V
    v_coeff: float = _invented(100.0, gt=0)
    e_bar_u1: float = _invented(40.0, "compute + relay budget, J/slot", gt=0)
    e_bar_u2: float = _invented(200.0, "propulsion budget, J/slot", gt=0)


class CostSection(_Section):
    latency_weight: float = 0.7
    energy_weight: float = 0.3


class BanditSection(_Section):
    log_base: Literal["e", "10"] = _invented("e")
    epsilon: float = _invented(0.1, "exploration rate of the eps_greedy baseline", ge=0, le=1)


class TrajectorySection(_Section):
    max_outer: int = _invented(30, ge=1)
    rtol: float = _invented(1e-4)
    inner_iter: int = _invented(50, ge=1)
    inner_tol: float = _invented(1e-6)


class ScenarioConfig(_Section):
    scenario: ScenarioSection = ScenarioSection()
    uav: UavSection = UavSection()
    radio: RadioSection = RadioSection()
    propulsion: PropulsionSection = PropulsionSection()
    iotd: IotdSection = IotdSection()
    tasks: TaskSection = TaskSection()
    satellites: SatelliteSection = SatelliteSection()
    controller: ControllerSection = ControllerSection()
    cost: CostSection = CostSection()
    bandit: BanditSection = BanditSection()
    trajectory: TrajectorySection = TrajectorySection()

    @model_validator(mode="after")
    def _check(self):
        # build the domain objects once so their own validation runs at load time
        self.uav_params(), self.radio_params(), self.propulsion_params(), self.cost_weights()
        return self

    # --- conversion to domain objects --------------------------------------

    def uav_params(self) -> UavParams:
        u = self.uav
        return UavParams(u.altitude_m, u.max_compute_ghz * 1e9, u.bandwidth_mhz * 1e6, u.max_speed_mps,
                         tuple(u.initial_position_m), u.energy_per_cycle_j, u.slot_s)

    def radio_params(self) -> RadioParams:
        r = self.radio
        return RadioParams(r.carrier_ghz * 1e9, 3.0e8, dbm_to_watts(r.noise_dbm), r.los_c1, r.los_c2,
                           r.extra_loss_los_db, r.extra_loss_nlos_db, r.switched_capacitance)

    def propulsion_params(self) -> PropulsionParams:
        return PropulsionParams(**self.propulsion.model_dump())

    def cost_weights(self) -> CostWeights:
        return CostWeights(self.cost.latency_weight, self.cost.energy_weight)

    # --- overrides ----------------------------------------------------------

    def with_overrides(self, overrides: dict) -> ScenarioConfig:
        """Apply dotted-key overrides such as ``{"controller.v_coeff": 5}``."""
        data = self.model_dump()
        for key, value in overrides.items():
            node = data
            *parents, leaf = key.split(".")
            for p in parents:
                if not isinstance(node.get(p), dict):
                    raise KeyError(f"unknown config key {key!r}")
                node = node[p]
            if leaf not in node:
                raise KeyError(f"unknown config key {key!r}")
            node[leaf] = value
        return ScenarioConfig.model_validate(data)


def non_paper_defaults(cfg: ScenarioConfig | None = None) -> list[str]:
    """Dotted keys of the invented defaults still in force (not overridden)."""
    cfg = cfg or ScenarioConfig()
    out = []
    for name, section in cfg:
        for field_name, info in type(section).model_fields.items():
            extra = info.json_schema_extra or {}
            if extra.get("non_paper_default") and getattr(section, field_name) == info.default:
                out.append(f"{name}.{field_name}")
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> ScenarioConfig:
    """Read a JSON config (missing keys take defaults) and apply overrides."""
    data = json.loads(Path(path).read_text()) if path else {}
    cfg = ScenarioConfig.model_validate(data)
    return cfg.with_overrides(overrides) if overrides else cfg


__all__ = ["ScenarioConfig", "POLICIES", "non_paper_defaults", "load_config", "ValidationError"]
