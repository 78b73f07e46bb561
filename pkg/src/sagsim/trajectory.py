"""Next-slot UAV position by successive convex approximation.

The slot objective trades the offloaders' weighted transmission cost at the next
position against queue-weighted propulsion energy of the hop. Two slacks make it
convex in the objective; their defining constraints are replaced at every iterate by
first-order (global, tight) lower bounds, and the resulting convex problem is solved
by projected gradient descent over the reachable disc. At a fixed position the slacks
have closed-form optimal values, so the inner solver works in two dimensions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numba
import numpy as np
from scipy.optimize import minimize_scalar

from .model import PropulsionParams, propulsion_power

LOG2E = 1.0 / math.log(2.0)


@dataclass(frozen=True)
class TrajectoryProblem:
    current_position: np.ndarray  # (2,)
    iotd_positions: np.ndarray  # (k, 2) offloaders only
    weights: np.ndarray  # (wT*D + wE*P*D) / (w* B) per offloader
    snr_coeff: np.ndarray  # SNR = snr_coeff / (horizontal^2 + H^2)
    altitude_m: float
    q_u2: float
    v_coeff: float
    prop: PropulsionParams
    tau_s: float
    max_speed_mps: float

    def __post_init__(self):
        if np.any(np.asarray(self.weights) <= 0) or np.any(np.asarray(self.snr_coeff) <= 0):
            raise ValueError("trajectory weights and SNR coefficients must be positive")
        if self.max_speed_mps * self.tau_s <= 0:
            raise ValueError("reachable radius must be positive")

    @property
    def radius(self) -> float:
        return self.max_speed_mps * self.tau_s

    def _args(self):
        p = self.prop
        return (np.asarray(self.current_position, dtype=float),
                np.asarray(self.iotd_positions, dtype=float).reshape(-1, 2),
                np.asarray(self.weights, dtype=float), np.asarray(self.snr_coeff, dtype=float),
                float(self.altitude_m), float(self.v_coeff), float(self.q_u2),
                p.c1_w, p.c2_w, p.c3, p.c4, p.tip_speed_mps, float(self.tau_s), self.radius)


@dataclass
class ScaState:
    q: np.ndarray
    xi: float
    zeta: np.ndarray
    objective: float
    iteration: int = 0


# --- exact objective and the two lower bounds -------------------------------

def _induced_root(v2, c3):
    """sqrt(sqrt(c3 + v^4/4) - v^2/2) in a cancellation-free form."""
    return np.sqrt(c3 / (np.sqrt(c3 + v2 * v2 / 4.0) + v2 / 2.0))


def reduced_objective(q_next, prob: TrajectoryProblem):
    """Slot objective with the slacks at their optimal values; vectorised over the
    leading axes of ``q_next``."""
    q = np.asarray(q_next, dtype=float)
    hop = np.linalg.norm(q - prob.current_position, axis=-1)
    prop_term = prob.q_u2 * propulsion_power(hop / prob.tau_s, prob.prop) * prob.tau_s
    comm = np.zeros(q.shape[:-1])
    for pos, w, c in zip(np.asarray(prob.iotd_positions).reshape(-1, 2), prob.weights, prob.snr_coeff):
        d2 = np.sum((q - pos) ** 2, axis=-1) + prob.altitude_m ** 2
        comm = comm + w / np.log2(1.0 + c / d2)
    out = prob.v_coeff * comm + prop_term
    return float(out) if out.ndim == 0 else out


def slack_xi(local_point, prob: TrajectoryProblem) -> float:
    """Induced-power slack evaluated at the expansion point."""
    v = np.linalg.norm(np.asarray(local_point) - prob.current_position) / prob.tau_s
    return float(_induced_root(v * v, prob.prop.c3))


def xi_lhs(q_next, xi, prob: TrajectoryProblem):
    """The convex function xi^2 + v^2 that the slack constraint bounds from below."""
    v2 = np.sum((np.asarray(q_next) - prob.current_position) ** 2, axis=-1) / prob.tau_s ** 2
    return xi * xi + v2


def xi_bound(q_next, xi, local_point, xi_local, prob: TrajectoryProblem):
    """First-order expansion of xi^2 + v^2 at (local_point, xi_local): a global
    under-estimator, exact at the expansion point."""
    tau2 = prob.tau_s ** 2
    d_loc = np.asarray(local_point, dtype=float) - prob.current_position
    d = np.asarray(q_next, dtype=float) - prob.current_position
    lin = (d_loc @ d_loc + 2.0 * np.tensordot(d - d_loc, d_loc, axes=([-1], [0]))) / tau2
    return xi_local ** 2 + 2.0 * xi_local * (xi - xi_local) + lin


def rate_exact(q_next, m: int, prob: TrajectoryProblem):
    x = np.sum((np.asarray(q_next) - prob.iotd_positions[m]) ** 2, axis=-1)
    return np.log2(1.0 + prob.snr_coeff[m] / (prob.altitude_m ** 2 + x))


def rate_bound(q_next, local_point, m: int, prob: TrajectoryProblem):
    """Lower bound on the spectral efficiency toward offloader ``m``, linear in the
    squared horizontal distance and tight at ``local_point``."""
    h2, c = prob.altitude_m ** 2, prob.snr_coeff[m]
    x0 = np.sum((np.asarray(local_point) - prob.iotd_positions[m]) ** 2)
    x = np.sum((np.asarray(q_next) - prob.iotd_positions[m]) ** 2, axis=-1)
    return np.log2(1.0 + c / (h2 + x0)) - c * LOG2E * (x - x0) / ((c + h2 + x0) * (h2 + x0))


# --- compiled solver ---------------------------------------------------------

@numba.njit(cache=True)
def _true_obj(qx, qy, qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau):
    comm = 0.0
    for m in range(qm.shape[0]):
        d2 = (qx - qm[m, 0]) ** 2 + (qy - qm[m, 1]) ** 2 + H * H
        comm += w[m] / math.log2(1.0 + snr[m] / d2)
    v2 = ((qx - qu[0]) ** 2 + (qy - qu[1]) ** 2) / (tau * tau)
    induced = math.sqrt(c3 / (math.sqrt(c3 + v2 * v2 / 4.0) + v2 / 2.0))
    power = c1 * (1.0 + 3.0 * v2 / (Up * Up)) + c2 * induced + c4 * v2 * math.sqrt(v2)
    return V * comm + Q2 * power * tau


@numba.njit(cache=True)
def _xi_root(a, c, c3):
    """Positive root of 2 a x^3 + c x^2 - c3 (Newton from an upper bracket)."""
    if c3 <= 0.0:
        return 0.0
    if c >= 0.0:
        x = (c3 / (2.0 * a)) ** (1.0 / 3.0)
    else:
        x = max((c3 / a) ** (1.0 / 3.0), -c / a)
    for _ in range(100):
        p = 2.0 * a * x ** 3 + c * x * x - c3
        dp = 6.0 * a * x * x + 2.0 * c * x
        step = p / dp
        x -= step
        if abs(step) <= 1e-15 * x:
            break
    return x


@numba.njit(cache=True)
def _surrogate(qx, qy, qu, qm, w, A, B, x0, xi_i, dix, diy,
               V, Q2, c1, c2, c3, c4, Up, tau, grad):
    """Convexified objective at (qx, qy) with optimal slacks; writes its gradient."""
    gx = 0.0
    gy = 0.0
    comm = 0.0
    for m in range(qm.shape[0]):
        dx = qx - qm[m, 0]
        dy = qy - qm[m, 1]
        g = A[m] - B[m] * (dx * dx + dy * dy - x0[m])
        if g <= 0.0:
            return np.inf
        comm += w[m] / g
        k = 2.0 * V * w[m] * B[m] / (g * g)
        gx += k * dx
        gy += k * dy
    total = V * comm
    dx = qx - qu[0]
    dy = qy - qu[1]
    r2 = dx * dx + dy * dy
    v2 = r2 / (tau * tau)
    r = math.sqrt(r2)
    s = (dix * dix + diy * diy + 2.0 * (dix * (dx - dix) + diy * (dy - diy))) / (tau * tau)
    c = s - xi_i * xi_i
    xi = _xi_root(xi_i, c, c3)
    power = c1 * (1.0 + 3.0 * v2 / (Up * Up)) + c2 * xi + c4 * v2 * math.sqrt(v2)
    total += Q2 * power * tau
    if Q2 > 0.0:
        kq = Q2 * tau
        # profile and parasite terms
        kv2 = kq * c1 * 3.0 / (Up * Up) * 2.0 / (tau * tau)
        kv3 = kq * c4 * 3.0 * r / (tau * tau * tau)
        gx += (kv2 + kv3) * dx
        gy += (kv2 + kv3) * dy
        # induced term through the slack root
        if c3 > 0.0:
            dxi_ds = -xi * xi / (6.0 * xi_i * xi * xi + 2.0 * c * xi)
            kxi = kq * c2 * dxi_ds * 2.0 / (tau * tau)
            gx += kxi * dix
            gy += kxi * diy
    grad[0] = gx
    grad[1] = gy
    return total


@numba.njit(cache=True)
def _expand(qx, qy, qu, qm, snr, H, c3, tau):
    n = qm.shape[0]
    A = np.empty(n)
    B = np.empty(n)
    x0 = np.empty(n)
    h2 = H * H
    for m in range(n):
        x = (qx - qm[m, 0]) ** 2 + (qy - qm[m, 1]) ** 2
        x0[m] = x
        A[m] = math.log2(1.0 + snr[m] / (h2 + x))
        B[m] = snr[m] / math.log(2.0) / ((snr[m] + h2 + x) * (h2 + x))
    dix = qx - qu[0]
    diy = qy - qu[1]
    v2 = (dix * dix + diy * diy) / (tau * tau)
    xi_i = math.sqrt(c3 / (math.sqrt(c3 + v2 * v2 / 4.0) + v2 / 2.0)) if c3 > 0.0 else 0.0
    return A, B, x0, xi_i, dix, diy


@numba.njit(cache=True)
def _project(qx, qy, qu, R):
    dx = qx - qu[0]
    dy = qy - qu[1]
    r = math.sqrt(dx * dx + dy * dy)
    if r > R:
        return qu[0] + dx * R / r, qu[1] + dy * R / r
    return qx, qy


@numba.njit(cache=True)
def _inner_solve(qx, qy, qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau, R,
                 max_iter, tol):
    """Projected gradient with Armijo backtracking and Barzilai-Borwein steps on the
    surrogate expanded at (qx, qy). Never returns a point with a larger surrogate."""
    A, B, x0, xi_i, dix, diy = _expand(qx, qy, qu, qm, snr, H, c3, tau)
    g = np.empty(2)
    gn = np.empty(2)
    f = _surrogate(qx, qy, qu, qm, w, A, B, x0, xi_i, dix, diy, V, Q2, c1, c2, c3, c4, Up, tau, g)
    gnorm = math.sqrt(g[0] * g[0] + g[1] * g[1])
    if gnorm == 0.0:
        return qx, qy, f
    step = 0.1 * R / gnorm
    for _ in range(max_iter):
        t = step
        accepted = False
        for _bt in range(60):
            nx, ny = _project(qx - t * g[0], qy - t * g[1], qu, R)
            fn = _surrogate(nx, ny, qu, qm, w, A, B, x0, xi_i, dix, diy,
                            V, Q2, c1, c2, c3, c4, Up, tau, gn)
            sx = nx - qx
            sy = ny - qy
            if fn <= f - 1e-4 / t * (sx * sx + sy * sy):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        yx = gn[0] - g[0]
        yy = gn[1] - g[1]
        sy_dot = sx * yx + sy * yy
        ss = sx * sx + sy * sy
        qx, qy, f = nx, ny, fn
        g[0] = gn[0]
        g[1] = gn[1]
        if math.sqrt(ss) < tol or math.sqrt(g[0] * g[0] + g[1] * g[1]) < tol:
            break
        step = ss / sy_dot if sy_dot > 0.0 else 2.0 * t
    return qx, qy, f


@numba.njit(cache=True)
def _sca(qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau, R, q0x, q0y,
         max_outer, rtol, inner_iter, inner_tol, trace):
    qx, qy = _project(q0x, q0y, qu, R)
    F = _true_obj(qx, qy, qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau)
    it = 0
    if trace.shape[0] > 0:
        trace[0, 0] = qx
        trace[0, 1] = qy
        trace[0, 2] = F
    while it < max_outer:
        nx, ny, _ = _inner_solve(qx, qy, qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau, R,
                                 inner_iter, inner_tol)
        Fn = _true_obj(nx, ny, qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau)
        if not Fn <= F:
            break
        it += 1
        gain = F - Fn
        qx, qy, F = nx, ny, Fn
        if it < trace.shape[0]:
            trace[it, 0] = qx
            trace[it, 1] = qy
            trace[it, 2] = F
        if gain <= rtol * max(abs(F), 1e-300):
            break
    return qx, qy, F, it


# --- public API --------------------------------------------------------------

def solve_subproblem(state: ScaState, prob: TrajectoryProblem, max_iter=50, tol=1e-6) -> ScaState:
    """One convexified step expanded at ``state.q``; returns the new iterate with its
    slacks. Falls back to the incoming iterate if no descent is found."""
    qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau, R = prob._args()
    qx, qy, _ = _inner_solve(float(state.q[0]), float(state.q[1]), qu, qm, w, snr, H, V, Q2,
                             c1, c2, c3, c4, Up, tau, R, max_iter, tol)
    q = np.array([qx, qy])
    zeta = np.array([rate_bound(q, state.q, m, prob) for m in range(len(w))])
    d_loc = state.q - qu
    xi_loc = slack_xi(state.q, prob)
    s = (d_loc @ d_loc + 2.0 * (q - state.q) @ d_loc) / tau ** 2
    xi = _xi_root(xi_loc, s - xi_loc ** 2, c3)
    return ScaState(q, float(xi), zeta, reduced_objective(q, prob), state.iteration + 1)


def surrogate_objective(q_next, local_point, prob: TrajectoryProblem) -> float:
    """Convexified objective (slacks at their optimal feasible values) expanded at
    ``local_point``; ``inf`` outside the domain where all rate bounds are positive."""
    qu, qm, w, snr, H, V, Q2, c1, c2, c3, c4, Up, tau, R = prob._args()
    A, B, x0, xi_i, dix, diy = _expand(float(local_point[0]), float(local_point[1]), qu, qm, snr, H, c3, tau)
    return float(_surrogate(float(q_next[0]), float(q_next[1]), qu, qm, w, A, B, x0, xi_i, dix, diy,
                            V, Q2, c1, c2, c3, c4, Up, tau, np.empty(2)))


@lru_cache(maxsize=64)
def best_cruise_speed(prop: PropulsionParams, v_max: float) -> float:
    """Speed in [0, v_max] minimising propulsion power."""
    res = minimize_scalar(lambda v: propulsion_power(v, prop), bounds=(0.0, v_max),
                          method="bounded", options={"xatol": 1e-6})
    return float(res.x)


def _cruise_start(prob: TrajectoryProblem) -> np.ndarray:
    qu = np.asarray(prob.current_position, dtype=float)
    qm = np.asarray(prob.iotd_positions, dtype=float).reshape(-1, 2)
    direction = np.array([1.0, 0.0])
    if len(qm):
        centroid = np.average(qm, axis=0, weights=prob.weights)
        if np.linalg.norm(centroid - qu) > 1e-9:
            direction = (centroid - qu) / np.linalg.norm(centroid - qu)
    if prob.q_u2 > 0:
        radius = min(best_cruise_speed(prob.prop, prob.max_speed_mps) * prob.tau_s, prob.radius)
    else:
        radius = prob.radius
    return qu + radius * direction


def sca_optimize(prob: TrajectoryProblem, q_init=None, max_outer=30, rtol=1e-4,
                 inner_iter=50, inner_tol=1e-6, trace: list | None = None) -> np.ndarray:
    """Next UAV position.

    With ``q_init`` the iteration starts there. Otherwise it runs from hover and from
    a cruise point (best-endurance speed toward the offloaders) and keeps the better
    result; hover is a stationary point of the propulsion term, so the hover run alone
    cannot discover that moving lowers induced power. The objective never increases
    along an SCA run. ``trace`` receives ``(x, y, objective)`` rows of each run.
    """
    args = prob._args()
    qu = args[0]
    starts = [np.asarray(q_init, dtype=float)] if q_init is not None else [qu.copy(), _cruise_start(prob)]
    best_q, best_f = None, math.inf
    for q0 in starts:
        buf = np.zeros((max_outer + 1 if trace is not None else 0, 3))
        qx, qy, f, it = _sca(*args, float(q0[0]), float(q0[1]), max_outer, rtol,
                             inner_iter, inner_tol, buf)
        if trace is not None:
            trace.append(buf[:it + 1].copy())
        if f < best_f:
            best_q, best_f = np.array([qx, qy]), f
    return best_q


def grid_oracle(prob: TrajectoryProblem, resolution: float) -> np.ndarray:
    """Brute-force minimiser over a square grid of spacing ~``resolution`` clipped to the
    reachable disc plus points on its rim. Grids whose point counts are multiples of a
    coarser grid's contain it, so refining never worsens the result."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    R = prob.radius
    n = max(1, math.ceil(R / resolution - 1e-9))
    ticks = np.arange(-n, n + 1) * (R / n)
    gx, gy = np.meshgrid(ticks, ticks, indexing="ij")
    inside = gx ** 2 + gy ** 2 <= R * R * (1 + 1e-12)
    pts = np.column_stack([gx[inside], gy[inside]])
    ang = np.arange(8 * n) * (2 * np.pi / (8 * n))
    rim = R * np.column_stack([np.cos(ang), np.sin(ang)])
    pts = np.vstack([pts, rim]) + np.asarray(prob.current_position, dtype=float)
    vals = reduced_objective(pts, prob)
    return pts[int(np.argmin(vals))]
