"""Physical and cost model: air-to-ground channel, latency/energy of the three
execution modes, rotary-wing propulsion power and per-device cost.

All functions are pure and accept either scalars or numpy arrays.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np


class Mode(enum.IntEnum):
    LOCAL = 0
    UAV = 1
    CLOUD = 2


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) / 1000.0


@dataclass(frozen=True)
class Task:
    data_size_bits: float
    compute_density: float  # cycles/bit
    deadline_s: float

    def __post_init__(self):
        if not (self.data_size_bits > 0 and self.compute_density > 0 and self.deadline_s > 0):
            raise ValueError(f"task fields must be strictly positive: {self}")
        if not math.isfinite(self.deadline_s):
            raise ValueError("task deadline must be finite")


@dataclass(frozen=True)
class IotdParams:
    cpu_hz: float
    tx_power_w: float
    position_m: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.cpu_hz <= 0 or self.tx_power_w <= 0:
            raise ValueError(f"IoTD cpu and tx power must be positive: {self}")


@dataclass(frozen=True)
class UavParams:
    altitude_m: float = 100.0
    max_compute_hz: float = 30e9
    bandwidth_hz: float = 15e6
    max_speed_mps: float = 25.0
    initial_position_m: tuple[float, float] = (0.0, 0.0)
    energy_per_cycle_j: float = 8.2e-9
    slot_duration_s: float = 1.0

    def __post_init__(self):
        for name in ("altitude_m", "max_compute_hz", "bandwidth_hz", "max_speed_mps",
                     "energy_per_cycle_j", "slot_duration_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"UavParams.{name} must be positive")

    @property
    def max_hop_m(self) -> float:
        """Largest horizontal displacement allowed in one slot."""
        return self.max_speed_mps * self.slot_duration_s


@dataclass(frozen=True)
class RadioParams:
    carrier_hz: float = 2.0e9
    light_speed_mps: float = 3.0e8
    noise_power_w: float = dbm_to_watts(-98.0)
    los_c1: float = 10.0
    los_c2: float = 0.6
    extra_loss_los_db: float = 1.0
    extra_loss_nlos_db: float = 20.0
    switched_capacitance: float = 1e-28

    def __post_init__(self):
        if self.carrier_hz <= 0 or self.noise_power_w <= 0:
            raise ValueError("carrier frequency and noise power must be positive")
        if self.extra_loss_nlos_db < self.extra_loss_los_db:
            raise ValueError("nLoS excess loss must not be below the LoS excess loss")


@dataclass(frozen=True)
class PropulsionParams:
    c1_w: float = 80.0
    c2_w: float = 22.0
    c3: float = 263.4
    c4: float = 0.0092
    tip_speed_mps: float = 120.0

    def __post_init__(self):
        if min(self.c1_w, self.c2_w, self.c3, self.c4) < 0 or self.tip_speed_mps <= 0:
            raise ValueError(f"invalid propulsion parameters: {self}")


@dataclass(frozen=True)
class CostWeights:
    latency_weight: float = 0.7
    energy_weight: float = 0.3

    def __post_init__(self):
        lt, en = self.latency_weight, self.energy_weight
        if not (0.0 <= lt <= 1.0 and 0.0 <= en <= 1.0) or abs(lt + en - 1.0) > 1e-12:
            raise ValueError(f"cost weights must lie in [0, 1] and sum to 1, got {lt}, {en}")


# --- channel ---------------------------------------------------------------

def los_probability(horiz_dist_m, altitude_m, radio: RadioParams):
    """LoS probability from the elevation angle (in degrees) seen by the ground node."""
    d3 = np.hypot(horiz_dist_m, altitude_m)
    elevation_deg = np.degrees(np.arcsin(altitude_m / d3))
    return 1.0 / (1.0 + radio.los_c1 * np.exp(-radio.los_c2 * (elevation_deg - radio.los_c1)))


def free_space_loss_1m_db(radio: RadioParams) -> float:
    """20 log10(4 pi f / c): the distance-independent part of the free-space loss."""
    return 20.0 * math.log10(4.0 * math.pi * radio.carrier_hz / radio.light_speed_mps)


def path_loss_db(dist_3d_m, los_prob, radio: RadioParams):
    fspl = 20.0 * np.log10(4.0 * np.pi * radio.carrier_hz * dist_3d_m / radio.light_speed_mps)
    return fspl + los_prob * radio.extra_loss_los_db + (1.0 - los_prob) * radio.extra_loss_nlos_db


def channel_gain(loss_db):
    return 10.0 ** (-np.asarray(loss_db, dtype=float) / 10.0)


def uplink_rate(bw_fraction, radio: RadioParams, bw_hz, tx_power_w, gain):
    """Shannon rate in bit/s of an OFDMA share ``bw_fraction`` of ``bw_hz``."""
    return bw_fraction * bw_hz * np.log2(1.0 + tx_power_w * gain / radio.noise_power_w)


def link_gain(horiz_dist_m, altitude_m, radio: RadioParams):
    """Channel gain for a ground node at ``horiz_dist_m`` from the UAV nadir."""
    rho = los_probability(horiz_dist_m, altitude_m, radio)
    return channel_gain(path_loss_db(np.hypot(horiz_dist_m, altitude_m), rho, radio))


def snr_coefficient(los_prob, tx_power_w, radio: RadioParams):
    """SNR numerator: SNR = coefficient / d^2 for a frozen LoS probability."""
    excess = los_prob * radio.extra_loss_los_db + (1.0 - los_prob) * radio.extra_loss_nlos_db
    return tx_power_w * 10.0 ** (-(free_space_loss_1m_db(radio) + excess) / 10.0) / radio.noise_power_w


# --- latency / energy ------------------------------------------------------

def local_terms(data_bits, density, cpu_hz, radio: RadioParams):
    """(latency_s, energy_j) of executing on the device itself."""
    latency = density * data_bits / cpu_hz
    return latency, radio.switched_capacitance * cpu_hz ** 3 * latency


def uav_terms(data_bits, density, rate_bps, alloc_hz, tx_power_w, uav: UavParams):
    """(latency_s, iotd_tx_energy_j, uav_comp_energy_j) for UAV execution."""
    upload = data_bits / rate_bps
    latency = upload + density * data_bits / alloc_hz
    return latency, tx_power_w * upload, uav.energy_per_cycle_j * density * data_bits


def cloud_terms(data_bits, rate_bps, rtt_per_bit, energy_per_bit, tx_power_w):
    """(latency_s, iotd_tx_energy_j, uav_tx_energy_j) for cloud execution via a satellite.

    Cloud processing time is neglected; ``rtt_per_bit`` covers the full UAV-satellite-cloud
    round trip.
    """
    upload = data_bits / rate_bps
    return upload + data_bits * rtt_per_bit, tx_power_w * upload, data_bits * energy_per_bit


def propulsion_power(speed_mps, prop: PropulsionParams):
    v2 = np.asarray(speed_mps, dtype=float) ** 2
    blade = prop.c1_w * (1.0 + 3.0 * v2 / prop.tip_speed_mps ** 2)
    induced = prop.c2_w * np.sqrt(np.sqrt(prop.c3 + v2 * v2 / 4.0) - v2 / 2.0)
    parasite = prop.c4 * v2 * np.sqrt(v2)
    out = blade + induced + parasite
    return float(out) if out.ndim == 0 else out


def slot_cost(mode, latency_s, iotd_energy_j, weights: CostWeights):
    """Weighted latency/energy cost of one device. ``mode`` only selects which
    latency/energy pair the caller passes in, so it does not enter the arithmetic."""
    Mode(mode)
    return weights.latency_weight * latency_s + weights.energy_weight * iotd_energy_j


def slot_uav_energy(comp_j, trans_j, speed_mps, prop: PropulsionParams, tau_s):
    """Split UAV energy of one slot into (compute+transmit, propulsion, total)."""
    e_u1 = comp_j + trans_j
    e_u2 = propulsion_power(speed_mps, prop) * tau_s
    return e_u1, e_u2, e_u1 + e_u2
