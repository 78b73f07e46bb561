"""End-to-end acceptance checks. Each test prints one PASS/FAIL line; the lines are
repeated in the terminal summary so a full ``pytest -v`` run shows them together."""

import dataclasses
import itertools
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from factories import allocation_objective, random_context, random_trajectory_problem
from sagsim.bandit import BanditStats, predict_rtt, record_feedback, tick_visibility
from sagsim.config import POLICIES, ScenarioConfig
from sagsim.engine import run, sweep
from sagsim.environment import SatelliteSpec, sample_rtt
from sagsim.game import CLOUD, LOCAL, UAV, is_feasible, optimal_allocation, optimal_satellite, potential, utility
from sagsim.output import write_csv
from sagsim.trajectory import (grid_oracle, rate_bound, rate_exact, reduced_objective, sca_optimize,
                               slack_xi, xi_bound, xi_lhs)

SEEDS = range(20)


def verdict(label, ok, detail):
    line = f"{label}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def _disc(rng, prob, n):
    r = prob.radius * np.sqrt(rng.uniform(0, 1, n))
    a = rng.uniform(0, 2 * np.pi, n)
    return prob.current_position + np.column_stack([r * np.cos(a), r * np.sin(a)])


# --- 1 --------------------------------------------------------------------------------

def test_c1_potential_exactness():
    rng = np.random.default_rng(1)
    potential(np.zeros(4, dtype=np.int8), random_context(rng, m=4))  # warm up
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ctx = random_context(rng, m=4, q_u1=rng.uniform(0, 5))
        prof = rng.integers(0, 3, 4).astype(np.int8)
        f0 = potential(prof, ctx)
        for m in range(4):
            u0 = utility(m, prof, ctx)
            for a in range(3):
                if a == prof[m]:
                    continue
                dev = prof.copy()
                dev[m] = a
                du = utility(m, dev, ctx) - u0
                df = potential(dev, ctx) - f0
                worst = max(worst, abs(du - df) / max(abs(du), abs(df), 1e-300))
    elapsed = time.perf_counter() - t0
    verdict("1 potential exactness", worst <= 1e-9 and elapsed < 10,
            f"worst rel err {worst:.2e}, {elapsed:.1f}s")


# --- 2 --------------------------------------------------------------------------------

def _ternary(f, lo, hi, iters=100):
    for _ in range(iters):
        a, b = lo + (hi - lo) / 3, hi - (hi - lo) / 3
        if f(a) < f(b):
            hi = b
        else:
            lo = a
    return 0.5 * (lo + hi)


def _simplex_oracle(coef):
    """Minimise sum(coef/x) over the unit simplex by pairwise ternary exchanges."""
    n = len(coef)
    x = np.full(n, 1.0 / n)
    if n == 1:
        return x
    for _ in range(500):
        before = x.copy()
        for i, j in itertools.combinations(range(n), 2):
            s = x[i] + x[j]
            t = _ternary(lambda u: coef[i] / u + coef[j] / (s - u), s * 1e-12, s * (1 - 1e-12))
            x[i], x[j] = t, s - t
        if np.max(np.abs(x - before)) < 1e-12:
            break
    return x


def test_c2_allocation_oracle():
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n_u, n_c = int(rng.integers(0, 4)), int(rng.integers(0, 3))
        if n_u + n_c == 0:
            n_u = 1
        m = n_u + n_c + int(rng.integers(0, 3))
        ctx = random_context(rng, m=m)
        prof = np.array([UAV] * n_u + [CLOUD] * n_c + [LOCAL] * (m - n_u - n_c), dtype=np.int8)
        rng.shuffle(prof)
        a = optimal_allocation(prof, ctx)
        closed = allocation_objective(ctx, prof, a.compute_fraction, a.bandwidth_fraction)
        wt, we = ctx.weights.latency_weight, ctx.weights.energy_weight
        z, w = np.zeros(m), np.zeros(m)
        up, off = prof == UAV, prof != LOCAL
        if up.any():
            z[up] = _simplex_oracle(wt * ctx.density[up] * ctx.data_bits[up] / ctx.uav.max_compute_hz)
        w[off] = _simplex_oracle((wt + we * ctx.tx_power_w[off]) * ctx.data_bits[off] / ctx.rate_full[off])
        oracle = allocation_objective(ctx, prof, z, w)
        worst = max(worst, abs(closed - oracle) / oracle)
    elapsed = time.perf_counter() - t0
    verdict("2 allocation vs simplex oracle", worst <= 1e-6 and elapsed < 60,
            f"worst rel gap {worst:.2e}, {elapsed:.1f}s")


# --- 3 --------------------------------------------------------------------------------

def test_c3_satellite_enumeration():
    rng = np.random.default_rng(3)
    mismatches = 0
    for _ in range(1000):
        k = int(rng.integers(1, 11))
        ctx = random_context(rng, m=2, n_sat=k)
        ids = tuple(int(i) for i in rng.choice(50, k, replace=False))
        ctx = dataclasses.replace(ctx, sat_ids=ids)
        best = None
        for i in range(k):
            score = ctx.v_coeff * ctx.weights.latency_weight * ctx.sat_rtt_pred[i] + ctx.q_u1 * ctx.sat_energy_per_bit[i]
            if best is None or (score, ids[i]) < best:
                best = (score, ids[i])
        mismatches += optimal_satellite(ctx) != best[1]
    verdict("3 satellite selection vs enumeration", mismatches == 0, f"{mismatches} mismatches / 1000")


# --- 4 --------------------------------------------------------------------------------

def test_c4_nash_no_improving_deviation():
    cfg = ScenarioConfig().with_overrides({"scenario.n_iotds": 10, "scenario.horizon": 1000})
    violations, checked = [], [0]

    def hook(sim, slot, ctx, profile):
        for m in range(ctx.n):
            u0 = utility(m, profile, ctx)
            for a in range(3):
                if a == profile[m]:
                    continue
                dev = profile.copy()
                dev[m] = a
                if a != LOCAL and not is_feasible(dev, ctx):
                    continue
                if utility(m, dev, ctx) < u0 - 1e-9 * max(1.0, abs(u0)):
                    violations.append((slot, m, a))
        checked[0] += 1

    run(cfg, on_slot=hook)
    verdict("4 Nash has no improving deviation", not violations and checked[0] == 1000,
            f"{len(violations)} improving deviations over {checked[0]} slots")


# --- 5 --------------------------------------------------------------------------------

def test_c5_sca_vs_grid():
    rng = np.random.default_rng(5)
    sca_optimize(random_trajectory_problem(rng, k=2))  # warm up
    t0 = time.perf_counter()
    worst_gap, worst_rise = -np.inf, -np.inf
    for _ in range(50):
        prob = random_trajectory_problem(rng)
        trace = []
        q = sca_optimize(prob, trace=trace)
        grid = reduced_objective(grid_oracle(prob, prob.radius / 200), prob)
        got = reduced_objective(q, prob)
        worst_gap = max(worst_gap, (got - grid) / grid)
        for path in trace:
            if len(path) > 1:
                worst_rise = max(worst_rise, np.max(np.diff(path[:, 2])))
    elapsed = time.perf_counter() - t0
    ok = worst_gap <= 0.01 and worst_rise <= 1e-9 and elapsed < 120
    verdict("5 SCA within 1% of grid", ok,
            f"worst gap {worst_gap:.2e}, worst per-iteration rise {worst_rise:.2e}, {elapsed:.1f}s")


# --- 6 --------------------------------------------------------------------------------

def test_c6_taylor_bounds():
    rng = np.random.default_rng(6)
    worst_viol, worst_tight = 0.0, 0.0
    for _ in range(50):
        prob = random_trajectory_problem(rng, k=int(rng.integers(1, 6)))
        local = _disc(rng, prob, 1)[0]
        xi_loc = slack_xi(local, prob)
        q = _disc(rng, prob, 1000)
        xi = rng.uniform(1e-3, 2 * xi_loc + 10, 1000)
        worst_viol = max(worst_viol, np.max(xi_bound(q, xi, local, xi_loc, prob) - xi_lhs(q, xi, prob)))
        f_loc = xi_lhs(local, xi_loc, prob)
        worst_tight = max(worst_tight, abs(xi_bound(local, xi_loc, local, xi_loc, prob) - f_loc) / abs(f_loc))
        for m in range(len(prob.iotd_positions)):
            worst_viol = max(worst_viol, np.max(rate_bound(q, local, m, prob) - rate_exact(q, m, prob)))
            g_loc = rate_exact(local, m, prob)
            worst_tight = max(worst_tight, abs(rate_bound(local, local, m, prob) - g_loc) / g_loc)
    verdict("6 Taylor lower bounds", worst_viol <= 1e-9 and worst_tight <= 1e-9,
            f"max bound excess {worst_viol:.2e}, worst tightness {worst_tight:.2e}")


# --- 7 --------------------------------------------------------------------------------

def test_c7_energy_constraint():
    base = ScenarioConfig().with_overrides({"scenario.horizon": 10_000})
    energy, r1, r2 = [], [], []
    for seed in SEEDS:
        s = run(base.with_overrides({"scenario.seed": seed}))
        energy.append(s.avg_uav_energy)
        r1.append(s["q_u1"][-1] / 10_000)
        r2.append(s["q_u2"][-1] / 10_000)
    e_mean = float(np.mean(energy))
    ok = e_mean <= 240 * 1.01 and max(r1) < 0.01 * 40 and max(r2) < 0.01 * 200
    verdict("7 long-term energy budget", ok,
            f"mean UAV energy {e_mean:.2f} J/slot, max Q_u1/T {max(r1):.3f}, max Q_u2/T {max(r2):.3f}")


# --- 8 --------------------------------------------------------------------------------

def test_c8_bandit_two_arms():
    sats = [SatelliteSpec(0, 15e-8, 30e-8, 1e-7), SatelliteSpec(1, 20e-8, 35e-8, 1e-7)]
    horizon = 10_000
    tail = horizon - horizon // 4
    template = random_context(np.random.default_rng(0), m=1, q_u1=0.0, n_sat=2)
    shares = []
    for seed in SEEDS:
        rng = np.random.default_rng(seed)
        stats = BanditStats.from_satellites(sats)
        best = 0
        for t in range(1, horizon + 1):
            tick_visibility([0, 1], stats, t)
            preds = np.array([predict_rtt(s.id, t, stats) for s in sats])
            pick = optimal_satellite(dataclasses.replace(template, sat_ids=(0, 1), sat_rtt_pred=preds,
                                                         sat_energy_per_bit=np.full(2, 1e-7)))
            record_feedback(pick, sample_rtt(sats[pick], rng), stats)
            best += t > tail and pick == 0
        shares.append(best / (horizon - tail))
    verdict("8 bandit best-arm share", min(shares) > 0.9,
            f"final-quarter best-arm share min {min(shares):.3f}, mean {np.mean(shares):.3f}")


# --- 9 --------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def policy_runs():
    cfg = ScenarioConfig()
    out = sweep(cfg, "v_coeff", [cfg.controller.v_coeff], policies=POLICIES, seeds=SEEDS)
    return {p: [out[(p, cfg.controller.v_coeff, s)] for s in SEEDS] for p in POLICIES}


def test_c9a_policy_ordering(policy_runs):
    tic = {p: float(np.mean([s.tic for s in runs])) for p, runs in policy_runs.items()}
    ok = all(tic["odoa"] <= tic[p] for p in POLICIES if p != "odoa")
    verdict("9(a) ODOA lowest mean TIC", ok, " ".join(f"{p}={v:.4f}" for p, v in tic.items()))


def test_c9b_task_size_monotone():
    out = sweep(ScenarioConfig(), "task_size", [1.0, 2.0, 3.0], policies=["odoa"], seeds=SEEDS)
    names = {"tic": "TIC", "avg_latency": "latency", "avg_iotd_energy": "IoTD energy", "avg_uav_energy": "UAV energy"}
    rows, ok = [], True
    for attr, label in names.items():
        means = [float(np.mean([getattr(out[("odoa", v, s)], attr) for s in SEEDS])) for v in (1.0, 2.0, 3.0)]
        ok &= all(b >= a for a, b in zip(means, means[1:]))
        rows.append(f"{label} " + "/".join(f"{x:.4g}" for x in means))
    verdict("9(b) metrics nondecreasing in task size", ok, "; ".join(rows))


def test_c9c_uav_compute_monotone():
    out = sweep(ScenarioConfig(), "uav_compute", [10.0, 20.0, 30.0], policies=["odoa"], seeds=SEEDS)
    means = [float(np.mean([out[("odoa", v, s)].tic for s in SEEDS])) for v in (10.0, 20.0, 30.0)]
    ok = all(b <= a for a, b in zip(means, means[1:]))
    verdict("9(c) TIC nonincreasing in UAV compute", ok, "TIC " + "/".join(f"{x:.4f}" for x in means))


def test_c9d_ocq_spends_more_energy(policy_runs):
    ocq = float(np.mean([s.avg_uav_energy for s in policy_runs["ocq"]]))
    odoa = float(np.mean([s.avg_uav_energy for s in policy_runs["odoa"]]))
    verdict("9(d) OCQ UAV energy above ODOA", ocq > odoa, f"ocq {ocq:.2f} J vs odoa {odoa:.2f} J")


# --- 10 -------------------------------------------------------------------------------

def test_c10_byte_identical_csv(tmp_path):
    cfg = ScenarioConfig().with_overrides({"scenario.horizon": 500, "scenario.seed": 7})
    write_csv(run(cfg), tmp_path / "a.csv")
    write_csv(run(cfg), tmp_path / "b.csv")
    same = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    verdict("10 deterministic CSV", same, "byte-identical" if same else "outputs differ")
