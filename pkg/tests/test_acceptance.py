"""Acceptance criteria 1-11, one PASS/FAIL line each.

Run through pytest (lines are repeated in the terminal summary) or directly:
    python3 tests/test_acceptance.py [criterion ...]
The full-scale alpha = 2 hydrodynamic sweep of criterion 6 only runs when
ZRP_PME_FULL_ACCEPTANCE=1 is set; otherwise it is reported as FAIL together
with the projected cost.
"""
import math
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))
from conftest import record_acceptance  # noqa: E402

from zrp_pme.equilibrium import detailed_balance_defect, measure_for, scaled_log_partition_diff, EquilibriumField  # noqa: E402
from zrp_pme.experiments import ExperimentConfig  # noqa: E402
from zrp_pme.experiments.runners import (dissipation_budget, gradient_flow, hydro, ldp_lower,  # noqa: E402
                                         martingale_check, projected_events, _trend)
from zrp_pme.lattice import Configuration, ScalingParams  # noqa: E402
from zrp_pme.pme import (PdeGrid, control_norm_fp, entropy_dissipation_budget, solve_fokker_planck,  # noqa: E402
                         solve_pme)
from zrp_pme.functionals import entropy  # noqa: E402
from zrp_pme.rate import TestBasis, dynamic_cost  # noqa: E402
from zrp_pme.sim import TiltField, run  # noqa: E402

# single-site mean: |mean - rho| <= C sqrt(chi), C fitted once over the grid below
MEAN_C = 0.12
EVENTS_PER_SECOND = 1.3e7  # measured kernel throughput on the reference machine
FULL = os.environ.get("ZRP_PME_FULL_ACCEPTANCE") == "1"

slow = pytest.mark.slow


def _cos(amp):
    return lambda z: 1 + amp * np.cos(2 * np.pi * z[..., 0])


def _verdict(n, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    detail = f"{detail}; {elapsed:.1f}s (budget {budget:g}s)"
    line = record_acceptance(n, ok, detail)
    assert ok, line


def criterion_1():
    t0 = time.perf_counter()
    chis = [1e-1, 1e-2, 1e-3, 1e-4]
    errs = [abs(scaled_log_partition_diff(2.0, 0.5, 2.0, c) - 3.0) for c in chis]
    ok = errs[-1] < 5e-3 and all(b < a for a, b in zip(errs, errs[1:]))
    return ok, f"error at chi=1e-4 {errs[-1]:.3e} (< 5e-3), errors {['%.2e' % e for e in errs]}", \
        time.perf_counter() - t0, 1.0


def criterion_2():
    t0 = time.perf_counter()
    worst, pmean, pvar = 0.0, 0.0, 0.0
    for alpha in (1.0, 1.5, 2.0, 3.0):
        for rho in (0.5, 1.0, 2.0):
            for chi in (1e-1, 1e-2, 1e-3, 1e-4):
                m = measure_for(rho, chi, alpha)
                mean = m.mean()
                worst = max(worst, abs(mean - rho) / math.sqrt(chi))
                if alpha == 1:
                    pmean = max(pmean, abs(mean - rho))
                    pvar = max(pvar, abs(m.variance() - rho * chi) / (rho * chi))
    ok = worst <= MEAN_C and pmean < 1e-12 and pvar < 1e-10
    return ok, (f"max |mean-rho|/sqrt(chi) = {worst:.4f} (C = {MEAN_C}); alpha=1 Poisson rows: "
                f"|mean-rho| {pmean:.1e} (< 1e-12), relative variance error {pvar:.1e} (< 1e-10)"), \
        time.perf_counter() - t0, 1.0


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst, checked = 0.0, 0
    while checked < 1000:
        d = int(rng.integers(1, 3))
        N = int(rng.integers(2, 5))
        alpha = float(rng.choice([1.0, 1.5, 2.0, 2.5, 3.0]))
        sc = ScalingParams(d, N, float(rng.uniform(0.05, 1.0)), alpha, 1.0)
        counts = rng.integers(0, 6, N ** d)
        if counts.sum() == 0:
            continue
        cfg = Configuration(counts, sc)
        field = EquilibriumField(float(rng.uniform(0.2, 3.0)), sc.lattice)
        x = int(rng.choice(np.flatnonzero(counts)))
        y = int(rng.choice(sc.lattice.neighbors(x)))
        worst = max(worst, abs(detailed_balance_defect(cfg, field, x, y)))
        checked += 1
    return worst < 1e-10, f"max balance defect {worst:.2e} over {checked} transitions (< 1e-10)", \
        time.perf_counter() - t0, 1.0


def criterion_4():
    t0 = time.perf_counter()
    N = 256
    sc = ScalingParams(1, N, 1 / N ** 2, 2.0, 1.2e-5)
    init = Configuration.from_profile(_cos(0.5), sc)
    path, _ = run(init, n_snap=200, rng=np.random.default_rng(4))
    mass = path.masses()
    ok = path.events >= 10 ** 7 and np.all(mass == init.particles) and np.all(path.counts >= 0)
    return ok, f"{path.events} events, particle count {init.particles} at all {mass.size} snapshots " \
               f"(max deviation {int(np.max(np.abs(mass - init.particles)))})", time.perf_counter() - t0, 30.0


def criterion_5():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("martingale-check", alpha=2.0, t_fin=1e-4, replicas=200, seed=5, n_snap=8,
                           Ns=[128], chi_rule=1.0, amplitude=0.5,
                           modes=["cos1", "sin1", "cos2", "sin2", "cos3"])
    res = martingale_check(cfg)
    _, rows = res.tables["martingale"]
    zs = [abs(r[6]) for r in rows]
    ratios = [r[9] for r in rows]
    ok = all(z <= 3 for z in zs) and all(q <= 1 for q in ratios)
    return ok, f"max |mean|/stderr {max(zs):.2f} (<= 3), max Var/QV-bound {max(ratios):.3f} (<= 1) " \
               f"over {len(rows)} test functions", time.perf_counter() - t0, 300.0


def criterion_6():
    t0 = time.perf_counter()
    # alpha = 1 control: independent walkers against the exact heat solution
    ctl = ExperimentConfig("hydro", alpha=1.0, t_fin=0.05, replicas=8, seed=61, n_snap=50,
                           Ns=[64, 128, 256], chis=[1 / 64 ** 2, 1 / 128 ** 2, 1 / 256 ** 2], amplitude=0.5,
                           extra={"hydro": {"sampler": "walkers"}})
    r1 = hydro(ctl)
    l2 = r1.column("hydro", "l2_mean")
    ctl_ok = l2[-1] < 5e-2
    cfg = ExperimentConfig("hydro", alpha=2.0, t_fin=0.05, replicas=64, seed=62, n_snap=50,
                           Ns=[64, 128, 256], chi_rule=1.0, amplitude=0.5)
    events = projected_events(cfg)
    hours = events / EVENTS_PER_SECOND / 3600
    if FULL:
        r2 = hydro(cfg)
        m = r2.column("hydro", "l2_mean")
        ok = ctl_ok and r2.summary["strictly_decreasing"]
        detail = f"alpha=2 L2 errors {['%.3e' % v for v in m]} strictly decreasing={r2.summary['strictly_decreasing']}"
    else:
        proxy = ExperimentConfig("hydro", alpha=2.0, t_fin=0.05, replicas=8, seed=63, n_snap=50,
                                 Ns=[16, 32, 64], chi_rule=1.0, amplitude=0.5)
        rp = hydro(proxy)
        m = rp.column("hydro", "l2_mean")
        ok = False
        detail = (f"alpha=2 sweep not run: projected {events:.2e} jump events (~{hours:.0f} h at "
                  f"{EVENTS_PER_SECOND:.1e}/s) exceeds the budget; reduced proxy N=16,32,64 x 8 replicas "
                  f"L2 errors {['%.3e' % v for v in m]} strictly decreasing={rp.summary['strictly_decreasing']}")
    detail += f"; alpha=1 control L2 errors {['%.2e' % v for v in l2]} (N=256 < 5e-2: {ctl_ok})"
    return ok, detail, time.perf_counter() - t0, 1200.0


def _barenblatt(x, tau, C):
    return tau ** (-1 / 3) * np.clip(C - (x - 0.5) ** 2 * tau ** (-2 / 3) / 12, 0, None)


def criterion_7():
    t0 = time.perf_counter()
    M, t = 256, 0.05
    heat = solve_pme(_cos(0.5), 1.0, t, PdeGrid(1, M), n_record=1).final
    x = np.arange(M) / M
    exact = 1 + 0.5 * np.sinc(1 / M) * math.exp(-0.5 * (2 * np.pi) ** 2 * t) * np.cos(2 * np.pi * x)
    heat_err = float(np.max(np.abs(heat - exact)))

    Mb, tau0, w0 = 512, 1e-3, 0.1
    C = w0 ** 2 * tau0 ** (-2 / 3) / 12
    tau1 = tau0 * 3.5 ** 3
    xb = np.arange(Mb) / Mb
    sol = solve_pme(_barenblatt(xb, tau0, C), 2.0, 2 * (tau1 - tau0), PdeGrid(1, Mb), n_record=8)
    front_err = 0.0
    for tt, u in zip(sol.times[1:], sol.path.values[1:]):
        front = math.sqrt(12 * C) * (tau0 + tt / 2) ** (1 / 3)
        wet = np.flatnonzero(u > 1e-3 * u.max())
        front_err = max(front_err, abs(max(xb[wet[-1]] - 0.5, 0.5 - xb[wet[0]]) - front) * Mb)

    rel = {}
    for Mc in (512, 1024):
        s = solve_pme(_cos(0.5), 2.0, 0.05, PdeGrid(1, Mc), n_record=1000)
        rel[Mc] = entropy_dissipation_budget(s).relative
    ok = heat_err < 1e-4 and front_err <= 2 and rel[512] < 1e-2 and rel[1024] <= 0.5 * rel[512]
    return ok, (f"heat max error {heat_err:.2e} (< 1e-4); Barenblatt front error {front_err:.2f} dx (<= 2); "
                f"budget |R|/H0 {rel[512]:.2e} at 512, {rel[1024]:.2e} at 1024 "
                f"(ratio {rel[512] / rel[1024]:.2f} >= 2)"), time.perf_counter() - t0, 120.0


def criterion_8():
    t0 = time.perf_counter()
    alpha, M, T, eps = 2.0, 128, 0.05, 0.2
    grid = PdeGrid(1, M)
    pme = solve_pme(_cos(0.5), alpha, T, grid, n_record=256)
    static = alpha * entropy(pme.path.values[0])
    j_pme = dynamic_cost(pme.path, alpha, TestBasis.for_path(pme.path, 8, 64)).value
    tilt = TiltField.cosine(eps)
    fp = solve_fokker_planck(_cos(0.5), alpha, tilt, T, grid, n_record=256)
    want = 0.5 * control_norm_fp(fp, tilt.grad)[-1]
    j_fp = dynamic_cost(fp.path, alpha, TestBasis.for_path(fp.path, 8, 64)).value
    fp_rel = abs(j_fp - want) / want
    sizes = [dynamic_cost(fp.path, alpha, TestBasis.for_path(fp.path, K, 33)).value for K in (0, 1, 2, 4, 8)]
    mono = all(b >= a - 1e-12 * abs(b) for a, b in zip(sizes, sizes[1:]))
    ok = j_pme < 1e-3 * static and fp_rel < 1e-3 and mono
    return ok, (f"J(PME)/(alpha H) = {j_pme / static:.2e} (< 1e-3); J(FP) relative error {fp_rel:.2e} (< 1e-3); "
                f"monotone in K_max={mono}"), time.perf_counter() - t0, 300.0


def criterion_9():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("gradient-flow", alpha=2.0, t_fin=0.05, amplitude=0.5, tilt="cosine", eps=0.2,
                           rho=1.0, pde_cells=128, pde_records=256, K_max=8, time_nodes=64)
    res = gradient_flow(cfg)
    r, g = res.summary["relative_residual"], res.summary["reversal_gap"]
    return r < 5e-3 and g < 5e-3, f"relative residual {r:.2e} (< 5e-3), time-reversal gap {g:.2e} (< 5e-3)", \
        time.perf_counter() - t0, 300.0


def criterion_10():
    t0 = time.perf_counter()
    cfg = ExperimentConfig("ldp-lower", alpha=2.0, t_fin=1e-3, replicas=256, seed=10, Ns=[128], chi_rule=1.0,
                           amplitude=0.2, truncation=10.0, tilt="cosine", eps=0.2, rho=1.0, pde_cells=256,
                           pde_records=400)
    res = ldp_lower(cfg)
    header, rows = res.tables["ldp"]
    row = dict(zip(header, rows[-1]))
    z = 1.959963984540054
    tot_ok = row["ci_low"] <= row["target"] <= row["ci_high"]
    st_ok = abs(row["static_mean"] - row["static_target"]) <= z * row["static_stderr"]
    dy_ok = abs(row["dynamic_mean"] - row["dynamic_target"]) <= z * row["dynamic_stderr"]
    ok = tot_ok and st_ok and dy_ok
    return ok, (f"mean {row['mean']:.6e} +- {z * row['stderr']:.2e} vs target {row['target']:.6e} ({tot_ok}); "
                f"static {row['static_mean']:.6e} vs {row['static_target']:.6e} ({st_ok}); "
                f"dynamic {row['dynamic_mean']:.4e} vs {row['dynamic_target']:.4e} ({dy_ok})"), \
        time.perf_counter() - t0, 1800.0


def criterion_11():
    t0 = time.perf_counter()
    fixed = ExperimentConfig("dissipation-budget", alpha=2.0, t_fin=2e-3, replicas=32, seed=111, n_snap=40,
                             Ns=[32, 64, 128], chis=[0.01], profile="constant", base=1.0)
    slope = dissipation_budget(fixed).summary["intD_slope"]
    scon = ExperimentConfig("dissipation-budget", alpha=2.0, t_fin=1e-3, replicas=64, seed=112, n_snap=40,
                            Ns=[32, 64, 128], chi_rule=1.0, profile="constant", base=1.0)
    res = dissipation_budget(scon)
    logN = np.log(res.column("dissipation", "N").astype(float))
    d_slope, d_se = _trend(logN, res.column("dissipation", "intD_mean"), res.column("dissipation", "intD_stderr"))
    f_slope, f_se = res.summary["F_trend"], res.summary["F_trend_stderr"]
    slope_ok = abs(slope - 1.0) <= 0.15
    d_ok = abs(d_slope) <= 2 * d_se
    f_ok = f_slope <= 2 * f_se
    return slope_ok and d_ok and f_ok, (
        f"chi-fixed log-log slope {slope:.3f} (1 +- 0.15); s-constant trend in log N: "
        f"intD {d_slope:.2e} +- {d_se:.1e} (|.| <= 2 se: {d_ok}), F {f_slope:.2e} +- {f_se:.1e} "
        f"(no growth beyond 2 se: {f_ok})"), time.perf_counter() - t0, 900.0


CRITERIA = {i: globals()[f"criterion_{i}"] for i in range(1, 12)}


def test_criterion_1_partition_asymptotics():
    _verdict(1, *criterion_1())


def test_criterion_2_single_site_law():
    _verdict(2, *criterion_2())


def test_criterion_3_detailed_balance():
    _verdict(3, *criterion_3())


@slow
def test_criterion_4_mass_conservation():
    _verdict(4, *criterion_4())


@slow
def test_criterion_5_martingales():
    _verdict(5, *criterion_5())


@slow
def test_criterion_6_hydrodynamic_limit():
    _verdict(6, *criterion_6())


@slow
def test_criterion_7_pme_oracles():
    _verdict(7, *criterion_7())


@slow
def test_criterion_8_rate_functional():
    _verdict(8, *criterion_8())


@slow
def test_criterion_9_gradient_flow():
    _verdict(9, *criterion_9())


@slow
def test_criterion_10_ldp_lower_bound():
    _verdict(10, *criterion_10())


@slow
def test_criterion_11_dissipation_scaling():
    _verdict(11, *criterion_11())


if __name__ == "__main__":
    wanted = [int(a) for a in sys.argv[1:]] or list(CRITERIA)
    failed = 0
    for n in wanted:
        ok, detail, elapsed, budget = CRITERIA[n]()
        ok = bool(ok) and elapsed < budget
        record_acceptance(n, ok, f"{detail}; {elapsed:.1f}s (budget {budget:g}s)")
        failed += not ok
    sys.exit(1 if failed else 0)
