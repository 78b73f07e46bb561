"""Per-slot decision core.

Given the devices' offloading profile, the UAV's optimal compute/bandwidth split has
a square-root closed form and the best relay minimises a weighted latency/energy
score. Substituting both into the devices' utilities yields a congestion-coupled game
with an exact potential, solved here by round-robin best responses.

Profiles are ``int8`` arrays holding :class:`~sagsim.model.Mode` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numba
import numpy as np

from .model import CostWeights, Mode, UavParams, cloud_terms, uav_terms

LOCAL, UAV, CLOUD = int(Mode.LOCAL), int(Mode.UAV), int(Mode.CLOUD)
_FEAS_RTOL = 1e-12


class NashCapExceeded(RuntimeError):
    pass


@dataclass
class SlotContext:
    """Everything the IoTD game and the UAV's closed forms need for one slot."""
    data_bits: np.ndarray
    density: np.ndarray
    tx_power_w: np.ndarray
    deadline_s: np.ndarray
    local_latency: np.ndarray
    local_energy: np.ndarray
    rate_full: np.ndarray  # bit/s with the whole UAV bandwidth at the current UAV position
    sat_ids: tuple
    sat_rtt_pred: np.ndarray  # s/bit
    sat_energy_per_bit: np.ndarray  # J/bit
    q_u1: float
    v_coeff: float
    weights: CostWeights
    uav: UavParams
    allow_cloud: bool = True
    equal_allocation: bool = False
    forced_satellite: int | None = None
    tie_rng: np.random.Generator | None = None

    def __post_init__(self):
        if np.any(self.rate_full <= 0):
            raise ValueError("full-band rates must be positive")

    @property
    def n(self) -> int:
        return len(self.data_bits)

    @cached_property
    def local_utility(self) -> np.ndarray:
        w = self.weights
        return w.latency_weight * self.local_latency + w.energy_weight * self.local_energy

    @cached_property
    def coefficients(self) -> GameCoefficients:
        return game_coefficients(self)

    @cached_property
    def satellite(self):
        """Relay used if anyone offloads to the cloud (independent of the profile)."""
        if self.forced_satellite is not None:
            return self.forced_satellite
        return optimal_satellite(self)

    @cached_property
    def _sat_index(self) -> int:
        return self.sat_ids.index(self.satellite)

    @property
    def relay_rtt(self) -> float:
        return float(self.sat_rtt_pred[self._sat_index])

    @property
    def relay_energy_per_bit(self) -> float:
        return float(self.sat_energy_per_bit[self._sat_index])

    @cached_property
    def uav_extra(self) -> np.ndarray:
        """Queue-weighted UAV compute energy per device, in cost units."""
        return self.q_u1 * self.uav.energy_per_cycle_j * self.density * self.data_bits / self.v_coeff

    @cached_property
    def cloud_extra(self) -> np.ndarray:
        """Queue-weighted relay energy plus weighted satellite round trip, in cost units."""
        if not self.sat_ids:
            return np.full(self.n, np.inf)
        return self.data_bits * (self.q_u1 * self.relay_energy_per_bit / self.v_coeff
                                 + self.weights.latency_weight * self.relay_rtt)

    @cached_property
    def _lists(self):
        c = self.coefficients
        return (c.phi.tolist(), c.gamma.tolist(), self.uav_extra.tolist(),
                self.cloud_extra.tolist(), self.local_utility.tolist())


@dataclass(frozen=True)
class GameCoefficients:
    phi: np.ndarray  # sqrt(wT * eta * D / F_max)
    gamma: np.ndarray  # sqrt((wT + wE * P) * D / r)


def game_coefficients(ctx: SlotContext) -> GameCoefficients:
    w = ctx.weights
    phi = np.sqrt(w.latency_weight * ctx.density * ctx.data_bits / ctx.uav.max_compute_hz)
    gamma = np.sqrt((w.latency_weight + w.energy_weight * ctx.tx_power_w) * ctx.data_bits / ctx.rate_full)
    return GameCoefficients(phi, gamma)


@dataclass(frozen=True)
class AllocationResult:
    compute_fraction: np.ndarray  # zero for non-UAV devices
    bandwidth_fraction: np.ndarray  # zero for local devices


# --- UAV side: allocation and relay -----------------------------------------

def _normalized(weights, mask):
    out = np.zeros_like(weights, dtype=float)
    if mask.any():
        sel = weights[mask]
        out[mask] = sel / sel.sum()
    return out


def optimal_allocation(profile, ctx: SlotContext) -> AllocationResult:
    """Square-root-proportional compute and bandwidth shares over the offloaders."""
    profile = np.asarray(profile)
    c = ctx.coefficients
    return AllocationResult(_normalized(c.phi, profile == UAV),
                            _normalized(c.gamma, profile != LOCAL))


def equal_allocation(profile, ctx: SlotContext | None = None) -> AllocationResult:
    profile = np.asarray(profile)
    ones = np.ones(len(profile))
    return AllocationResult(_normalized(ones, profile == UAV), _normalized(ones, profile != LOCAL))


def allocate(profile, ctx: SlotContext) -> AllocationResult:
    return equal_allocation(profile) if ctx.equal_allocation else optimal_allocation(profile, ctx)


def satellite_scores(ctx: SlotContext) -> np.ndarray:
    return ctx.v_coeff * ctx.weights.latency_weight * ctx.sat_rtt_pred + ctx.q_u1 * ctx.sat_energy_per_bit


def optimal_satellite(ctx: SlotContext):
    """Relay minimising V*wT*L + Q1*Z; exact ties go to the lowest id unless the
    context carries a tie-breaking generator."""
    if len(ctx.sat_ids) == 0:
        raise ValueError("no visible satellite: visibility schedule is broken")
    scores = satellite_scores(ctx)
    ties = np.flatnonzero(scores == scores.min())
    ids = sorted(ctx.sat_ids[i] for i in ties)
    if ctx.tie_rng is not None and len(ids) > 1:
        return ids[int(ctx.tie_rng.integers(len(ids)))]
    return ids[0]


# --- device side: utilities and potential -----------------------------------

def profile_latencies(profile, ctx: SlotContext, alloc: AllocationResult | None = None) -> np.ndarray:
    """Decision-time latency of every device (predicted relay latency for cloud tasks)."""
    profile = np.asarray(profile)
    alloc = alloc or allocate(profile, ctx)
    lat = ctx.local_latency.astype(float).copy()
    off = profile != LOCAL
    rate = np.where(off, alloc.bandwidth_fraction * ctx.rate_full, 1.0)
    upload = ctx.data_bits / rate
    u = profile == UAV
    if u.any():
        lat[u] = upload[u] + ctx.density[u] * ctx.data_bits[u] / (alloc.compute_fraction[u] * ctx.uav.max_compute_hz)
    c = profile == CLOUD
    if c.any():
        lat[c] = upload[c] + ctx.data_bits[c] * ctx.relay_rtt
    return lat


def is_feasible(profile, ctx: SlotContext) -> bool:
    """Every offloader meets its deadline under the UAV's allocation for this profile."""
    profile = np.asarray(profile)
    off = profile != LOCAL
    if not off.any():
        return True
    lat = profile_latencies(profile, ctx)
    return bool(np.all(lat[off] <= ctx.deadline_s[off] * (1.0 + _FEAS_RTOL)))


def utility(m: int, profile, ctx: SlotContext) -> float:
    """Cost-unit utility of device ``m``, evaluated from the allocation the UAV would
    choose for ``profile`` (not from the expanded congestion form)."""
    choice = int(profile[m])
    w = ctx.weights
    if choice == LOCAL:
        return float(ctx.local_utility[m])
    alloc = allocate(profile, ctx)
    rate = alloc.bandwidth_fraction[m] * ctx.rate_full[m]
    if choice == UAV:
        lat, e_iotd, e_comp = uav_terms(ctx.data_bits[m], ctx.density[m], rate,
                                        alloc.compute_fraction[m] * ctx.uav.max_compute_hz,
                                        ctx.tx_power_w[m], ctx.uav)
        return float(ctx.q_u1 * e_comp / ctx.v_coeff + w.latency_weight * lat + w.energy_weight * e_iotd)
    if choice == CLOUD:
        lat, e_iotd, e_trans = cloud_terms(ctx.data_bits[m], rate, ctx.relay_rtt,
                                           ctx.relay_energy_per_bit, ctx.tx_power_w[m])
        return float(ctx.q_u1 * e_trans / ctx.v_coeff + w.latency_weight * lat + w.energy_weight * e_iotd)
    raise ValueError(f"unknown offloading choice {choice}")


def potential(profile, ctx: SlotContext) -> float:
    """Exact potential with devices ordered by index (prefix sums over j <= i)."""
    phi, gam, uav_extra, cloud_extra, local_u = ctx._lists
    total = 0.0
    phi_prefix = gam_prefix = 0.0
    for i, a in enumerate(profile):
        a = int(a)
        if a == LOCAL:
            total += local_u[i]
            continue
        gam_prefix += gam[i]
        total += gam[i] * gam_prefix
        if a == UAV:
            phi_prefix += phi[i]
            total += uav_extra[i] + phi[i] * phi_prefix
        else:
            total += cloud_extra[i]
    return total


def _allowed(ctx: SlotContext):
    return (LOCAL, UAV, CLOUD) if ctx.allow_cloud and ctx.sat_ids else (LOCAL, UAV)


def best_response(m: int, profile, ctx: SlotContext) -> int:
    """Utility-minimising feasible choice of device ``m``; the current choice is kept on
    ties or when the gain is below 1e-9 (relative). A deviation is feasible when the
    resulting profile meets every offloader's deadline; local always qualifies."""
    profile = np.array(profile, dtype=np.int8)
    cur = int(profile[m])
    trial = profile.copy()
    options = {}
    for a in _allowed(ctx):
        trial[m] = a
        if a == cur or a == LOCAL or is_feasible(trial, ctx):
            options[a] = utility(m, trial, ctx)
    u_cur = options[cur] if cur in options else math.inf
    best = min(options, key=lambda a: (options[a], a))
    if options[best] < u_cur - 1e-9 * max(1.0, abs(u_cur)):
        return best
    return cur


def repair_profile(profile, ctx: SlotContext) -> np.ndarray:
    """Send the worst deadline violator home until the profile is feasible."""
    profile = np.array(profile, dtype=np.int8)
    if not ctx.allow_cloud or not ctx.sat_ids:
        profile[profile == CLOUD] = LOCAL
    while True:
        off = profile != LOCAL
        if not off.any():
            return profile
        ratio = np.where(off, profile_latencies(profile, ctx) / ctx.deadline_s, 0.0)
        worst = int(np.argmax(ratio))
        if ratio[worst] <= 1.0 + _FEAS_RTOL:
            return profile
        profile[worst] = LOCAL


# --- compiled best-response dynamics -----------------------------------------

@numba.njit(cache=True)
def _jointly_feasible(prof, m, opt, G, P, lat_a, lat_b, lat_c, deadline):
    for j in range(prof.shape[0]):
        a = opt if j == m else prof[j]
        if a == 1:
            lat = lat_a[j] * G + lat_b[j] * P
        elif a == 2:
            lat = lat_a[j] * G + lat_c[j]
        else:
            continue
        if lat > deadline[j] * (1.0 + 1e-12):
            return False
    return True


@numba.njit(cache=True)
def _brd_kernel(prof, local_u, base, cloud_base, load_g, load_p, coef_g, coef_p,
                lat_a, lat_b, lat_c, deadline, allow_cloud, max_passes, moves):
    """Round-robin best responses restricted to jointly feasible profiles.

    A UAV player's utility is base + coef_p*P + coef_g*G and a cloud player's is
    cloud_base + coef_g*G, where G (bandwidth load) sums load_g over offloaders and
    P (compute load) sums load_p over UAV players. Latencies are lat_a*G + lat_b*P
    (UAV) and lat_a*G + lat_c (cloud). ``prof`` is updated in place; the first
    ``len(moves)`` moves are written to ``moves`` as (player, new choice).
    Returns (number of moves, passes used, converged flag).
    """
    n = prof.shape[0]
    G = 0.0
    P = 0.0
    for i in range(n):
        if prof[i] != 0:
            G += load_g[i]
        if prof[i] == 1:
            P += load_p[i]
    n_moves = 0
    passes = 0
    while passes < max_passes:
        passes += 1
        changed = False
        for m in range(n):
            cur = prof[m]
            g_wo = G - load_g[m] if cur != 0 else G
            p_wo = P - load_p[m] if cur == 1 else P
            best = -1
            best_u = np.inf
            u_cur = np.inf
            for opt in range(3):
                if opt == 2 and not allow_cloud:
                    continue
                g_new = g_wo
                p_new = p_wo
                if opt == 0:
                    u = local_u[m]
                elif opt == 1:
                    g_new = g_wo + load_g[m]
                    p_new = p_wo + load_p[m]
                    u = base[m] + coef_p[m] * p_new + coef_g[m] * g_new
                else:
                    g_new = g_wo + load_g[m]
                    u = cloud_base[m] + coef_g[m] * g_new
                if opt == cur:
                    u_cur = u
                elif opt != 0 and not _jointly_feasible(prof, m, opt, g_new, p_new,
                                                         lat_a, lat_b, lat_c, deadline):
                    continue
                if u < best_u:
                    best_u = u
                    best = opt
            if best != cur and best_u < u_cur - 1e-9 * max(1.0, abs(u_cur)):
                G = g_wo + (load_g[m] if best != 0 else 0.0)
                P = p_wo + (load_p[m] if best == 1 else 0.0)
                prof[m] = best
                if n_moves < moves.shape[0]:
                    moves[n_moves, 0] = m
                    moves[n_moves, 1] = best
                n_moves += 1
                changed = True
        if not changed:
            return n_moves, passes, True
    return n_moves, passes, False


def _kernel_arrays(ctx: SlotContext):
    c = ctx.coefficients
    D, eta, F = ctx.data_bits, ctx.density, ctx.uav.max_compute_hz
    if ctx.equal_allocation:
        ones = np.ones(ctx.n)
        load_g = load_p = ones
        coef_g, coef_p = c.gamma ** 2, c.phi ** 2
        lat_a, lat_b = D / ctx.rate_full, eta * D / F
    else:
        load_g, load_p = c.gamma, c.phi
        coef_g, coef_p = c.gamma, c.phi
        lat_a, lat_b = D / (c.gamma * ctx.rate_full), eta * D / (c.phi * F)
    allow_cloud = bool(ctx.allow_cloud and ctx.sat_ids)
    if allow_cloud:
        lat_c, cloud_base = D * ctx.relay_rtt, ctx.cloud_extra
    else:
        lat_c = cloud_base = np.full(ctx.n, np.inf)
    return (ctx.local_utility, ctx.uav_extra, cloud_base, load_g, load_p, coef_g, coef_p,
            lat_a, lat_b, lat_c, ctx.deadline_s.astype(float), allow_cloud)


def nash_solve(initial, ctx: SlotContext, max_passes: int | None = None,
               trace: list | None = None, strict: bool | None = None) -> np.ndarray:
    """Best-response dynamics from ``initial`` (repaired to feasibility first).

    With the closed-form allocation the game has an exact potential, so the dynamics
    terminate; hitting ``max_passes`` (default 100 per player) then raises
    :class:`NashCapExceeded`. Under equal sharing no potential exists and the last
    profile is returned instead unless ``strict`` is set. Moves are appended to
    ``trace`` as ``(player, choice)`` pairs when a list is given.
    """
    prof = repair_profile(initial, ctx)
    if ctx.n == 0:
        return prof
    max_passes = 100 * ctx.n if max_passes is None else max_passes
    strict = (not ctx.equal_allocation) if strict is None else strict
    moves = np.zeros((max_passes * ctx.n if trace is not None else 0, 2), dtype=np.int64)
    n_moves, passes, converged = _brd_kernel(prof, *_kernel_arrays(ctx), max_passes, moves)
    if trace is not None:
        trace.extend((int(p), int(a)) for p, a in moves[:min(n_moves, len(moves))])
    if not converged and strict:
        raise NashCapExceeded(f"no equilibrium after {passes} passes ({n_moves} moves)")
    return prof
