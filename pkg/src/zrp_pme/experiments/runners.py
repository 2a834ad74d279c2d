"""The six experiments.  Each runner returns an ExperimentResult of named tables."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate

from ..equilibrium import (EquilibriumField, log_cgf_finite_N, log_density_ratio_initial, measure_for,
                           sample_configuration, scaled_log_partition_diff)
from ..functionals import (discrete_dissipation, entropy, interpolation_exponent, lp_norm, trapezoid)
from ..lattice import Configuration, ScalingParams, TorusLattice
from ..pme import PdeGrid, control_norm_fp, solve_fokker_planck, solve_pme
from ..rate import TestBasis, rate_report, time_reverse, total_rate
from ..sim import log_rn_derivative, martingale_qv_bound, martingale_residual, run, walker_snapshots
from .config import ExperimentConfig, resolve_seed
from .io import write_csv, write_manifest
from .metric import WeakStarMetric
from .replicas import mean_stderr, run_replicas, sample_variance

log = logging.getLogger(__name__)

Table = tuple[list[str], list[list]]


@dataclass
class ExperimentResult:
    name: str
    tables: dict[str, Table] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    report: str | None = None

    def column(self, table: str, col: str) -> np.ndarray:
        header, rows = self.tables[table]
        j = header.index(col)
        return np.array([r[j] for r in rows])

    def write(self, out_dir, config: ExperimentConfig, seed: int, threads: int) -> list[Path]:
        out = Path(out_dir)
        files = []
        for name, (header, rows) in self.tables.items():
            files.append(write_csv(out / f"{name}.csv", header, rows))
        if self.report is not None:
            p = out / f"{self.name}_report.txt"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(self.report)
            files.append(p)
        write_manifest(out, self.name, config.text, seed, threads, [f.name for f in files])
        return files


def _initial(cfg: ExperimentConfig, sc: ScalingParams, u_sites: np.ndarray,
             rng: np.random.Generator) -> Configuration:
    if cfg.start == "deterministic":
        return Configuration.from_profile(u_sites, sc)
    M = cfg.truncation * float(u_sites.max()) if cfg.truncation else None
    return sample_configuration(EquilibriumField(u_sites, sc.lattice), sc, rng, M)


def projected_events(cfg: ExperimentConfig) -> float:
    """Expected number of jump events for the whole sweep (all replicas)."""
    total = 0.0
    for sc in cfg.sweep():
        u = cfg.profile_sites(sc.lattice)
        total += cfg.replicas * sc.d * sc.N ** 2 / sc.chi * np.sum(u ** sc.alpha) * sc.t_fin
    return float(total)


def _section(cfg: ExperimentConfig, name: str) -> dict:
    return cfg.extra.get(name, {})


def _trend(x: np.ndarray, y: np.ndarray, se: np.ndarray) -> tuple[float, float]:
    """Weighted least-squares slope of y on x and its standard error."""
    w = 1.0 / np.maximum(se, 1e-300) ** 2
    xm = np.sum(w * x) / np.sum(w)
    sxx = np.sum(w * (x - xm) ** 2)
    slope = np.sum(w * (x - xm) * y) / sxx
    return float(slope), float(1.0 / math.sqrt(sxx))


# hydro ---------------------------------------------------------------------

def _hydro_reference(cfg: ExperimentConfig, sc: ScalingParams, times: np.ndarray):
    """Limit profile at the snapshot times on the lattice cells, plus a label."""
    lat = sc.lattice
    if sc.alpha == 1 and cfg.profile in ("cosine", "constant"):
        x = lat.positions[:, 0]
        amp = cfg.amplitude if cfg.profile == "cosine" else 0.0
        k = cfg.k
        decay = np.exp(-0.5 * (2 * np.pi * k) ** 2 * times)
        avg = np.sinc(k / sc.N)
        vals = cfg.base + amp * avg * decay[:, None] * np.cos(2 * np.pi * k * x)[None, :]
        return vals, "heat-exact"
    grid = PdeGrid(sc.d, sc.N)
    sol = solve_pme(lambda z: cfg.profile_fn()(z), sc.alpha, sc.t_fin, grid, n_record=times.size - 1)
    return sol.path.values.reshape(times.size, -1), "pme"


def hydro(cfg: ExperimentConfig, seed: int | None = None, threads: int | None = None) -> ExperimentResult:
    seed = resolve_seed(cfg, seed)
    threads = threads or cfg.threads
    opts = _section(cfg, "hydro")
    sampler = opts.get("sampler", "auto")
    rows = []
    for i, sc in enumerate(cfg.sweep()):
        lat = sc.lattice
        u_sites = cfg.profile_sites(lat)
        times = np.linspace(0.0, sc.t_fin, cfg.n_snap + 1)
        ref, label = _hydro_reference(cfg, sc, times)
        metric = WeakStarMetric(sc.d, min(16, sc.N // 2 - 1))
        walkers = sampler == "walkers" or (sampler == "auto" and sc.alpha == 1)

        def task(j, rng, sc=sc, u_sites=u_sites, ref=ref, metric=metric, walkers=walkers):
            eta0 = _initial(cfg, sc, u_sites, rng)
            if walkers:
                path = walker_snapshots(eta0, cfg.n_snap, rng)
            else:
                path, _ = run(eta0, n_snap=cfg.n_snap, rng=rng)
            dens = path.density
            diff = dens - ref
            l2 = math.sqrt(trapezoid(np.mean(diff ** 2, axis=1), times))
            la = trapezoid(np.mean(np.abs(diff) ** sc.alpha, axis=1), times) ** (1 / sc.alpha)
            weak = max(metric.distance(a, b) for a, b in zip(dens, ref))
            return l2, la, weak, path.events

        res = run_replicas(task, cfg.replicas, seed, threads, key=(i,))
        l2 = mean_stderr(r[0] for r in res)
        la = mean_stderr(r[1] for r in res)
        wk = mean_stderr(r[2] for r in res)
        ev = mean_stderr(r[3] for r in res)[0]
        rows.append([sc.N, sc.chi, sc.s, cfg.replicas, l2[0], l2[1], la[0], la[1], wk[0], wk[1], ev,
                     "walkers" if walkers else "kmc", label])
    header = ["N", "chi", "s", "replicas", "l2_mean", "l2_stderr", "lalpha_mean", "lalpha_stderr",
              "weak_mean", "weak_stderr", "events_mean", "sampler", "reference"]
    res = ExperimentResult("hydro", {"hydro": (header, rows)})
    m = np.array([r[4] for r in rows])
    se = np.array([r[5] for r in rows])
    res.summary["strictly_decreasing"] = bool(np.all(m[1:] + 2 * np.hypot(se[1:], se[:-1]) < m[:-1]))
    return res


# equilibrium statistics ----------------------------------------------------

def _orders(x: list[float], err: list[float]) -> list[float]:
    out = [math.nan]
    for j in range(1, len(x)):
        if err[j] > 0 and err[j - 1] > 0:
            out.append(math.log(err[j - 1] / err[j]) / math.log(x[j - 1] / x[j]))
        else:
            out.append(math.nan)
    return out


def equilibrium_stats(cfg: ExperimentConfig, seed: int | None = None,
                      threads: int | None = None) -> ExperimentResult:
    opts = _section(cfg, "equilibrium")

    def fl(key, default):
        return [float(v) for v in str(opts.get(key, default)).split(",")]

    chis = fl("chis", "0.1, 0.01, 0.001, 0.0001")
    lams = fl("lam", "1, 2")
    a, b = float(opts.get("a", 0.5)), float(opts.get("b", 2.0))
    rhos = fl("rhos", "0.5, 1, 2")
    alphas = fl("alphas", "1, 1.5, 2, 3")
    cgf_N = [int(v) for v in fl("cgf_N", "32, 64, 128, 256, 1024, 4096")]
    cgf_chi = fl("cgf_chi", "0.01, 0.001, 0.0001")
    amp = float(opts.get("psi_amplitude", 0.5))

    res = ExperimentResult("equilibrium-stats")
    rows, monotone = [], {}
    for lam in lams:
        vals = [scaled_log_partition_diff(lam, a, b, c) for c in chis]
        errs = [abs(v - lam * (b - a)) for v in vals]
        monotone[lam] = bool(np.all(np.diff(errs) < 0))
        rows += [[lam, a, b, c, v, lam * (b - a), e, o]
                 for c, v, e, o in zip(chis, vals, errs, _orders(chis, errs))]
    res.tables["partition"] = (["lam", "a", "b", "chi", "value", "limit", "error", "order"], rows)
    rows = []
    for alpha in alphas:
        for rho in rhos:
            for c in chis:
                m = measure_for(rho, c, alpha)
                mean, var = m.mean(), m.variance()
                rows.append([rho, alpha, c, mean, var, abs(mean - rho), abs(mean - rho) / math.sqrt(c)])
    res.tables["moments"] = (["rho", "alpha", "chi", "mean", "variance", "abs_error", "scaled_error"], rows)

    alpha, rho = cfg.alpha, cfg.rho

    def psi(z):
        return amp * np.cos(2 * np.pi * z[..., 0])

    limit = integrate.quad(lambda x: alpha * rho * math.expm1(amp * math.cos(2 * math.pi * x) / alpha),
                           0.0, 1.0, epsabs=1e-14, epsrel=1e-13)[0]
    rows = []
    for N in cgf_N:
        for c in cgf_chi:
            sc = ScalingParams(1, N, c, alpha, 1.0)
            v = log_cgf_finite_N(psi, EquilibriumField(rho, sc.lattice), sc)
            rows.append([N, c, v, limit, abs(v - limit)])
    res.tables["cgf"] = (["N", "chi", "value", "limit", "error"], rows)
    # lam = 1 is exact, so only the nontrivial exponents have a convergence trend
    res.summary["partition_monotone"] = all(v for lam, v in monotone.items() if lam != 1)
    return res


# tilted dynamics -----------------------------------------------------------

def ldp_targets(cfg: ExperimentConfig) -> tuple[float, float]:
    """(alpha H_rho(u0), 1/2 int int u^alpha |grad h|^2) along the Fokker-Planck solution."""
    cells = cfg.pde_cells or 256
    grid = PdeGrid(cfg.d, cells)
    u0 = grid.project(cfg.profile_fn())
    static = cfg.alpha * entropy(u0, cfg.rho)
    tilt = cfg.tilt_field()
    if tilt is None or tilt.grad is None:
        return static, 0.0
    sol = solve_fokker_planck(u0, cfg.alpha, tilt, cfg.t_fin, grid, n_record=cfg.pde_records)
    return static, 0.5 * float(control_norm_fp(sol, tilt.grad)[-1])


def ldp_lower(cfg: ExperimentConfig, seed: int | None = None, threads: int | None = None) -> ExperimentResult:
    seed = resolve_seed(cfg, seed)
    threads = threads or cfg.threads
    tilt = cfg.tilt_field()
    static_t, dyn_t = ldp_targets(cfg)
    target = static_t + dyn_t
    rows = []
    for i, sc in enumerate(cfg.sweep()):
        lat = sc.lattice
        u_sites = cfg.profile_sites(lat)
        M = cfg.truncation * float(u_sites.max()) if cfg.truncation else None

        def task(j, rng, sc=sc, u_sites=u_sites, M=M):
            eta0 = sample_configuration(EquilibriumField(u_sites, lat), sc, rng, M)
            ratio = log_density_ratio_initial(eta0, u_sites, cfg.rho, M)
            path, ledger = run(eta0, tilt=tilt, n_snap=1, rng=rng)
            total = log_rn_derivative(ledger, ratio, sc) if ledger is not None else ratio
            return ratio, total - ratio, total

        res = run_replicas(task, cfg.replicas, seed, threads, key=(i,))
        st = mean_stderr(r[0] for r in res)
        dy = mean_stderr(r[1] for r in res)
        tot = mean_stderr(r[2] for r in res)
        half = 1.959963984540054 * tot[1] if cfg.replicas > 1 else 0.0
        rows.append([sc.N, sc.chi, sc.s, cfg.replicas, tot[0], tot[1], tot[0] - half, tot[0] + half,
                     target, abs(tot[0] - target), st[0], st[1], static_t, dy[0], dy[1], dyn_t])
    header = ["N", "chi", "s", "replicas", "mean", "stderr", "ci_low", "ci_high", "target", "gap",
              "static_mean", "static_stderr", "static_target", "dynamic_mean", "dynamic_stderr",
              "dynamic_target"]
    out = ExperimentResult("ldp-lower", {"ldp": (header, rows)})
    gaps = [r[9] for r in rows]
    out.summary.update(static_target=static_t, dynamic_target=dyn_t, target=target,
                       gap_decreasing=bool(np.all(np.diff(gaps) < 0)) if len(gaps) > 1 else None,
                       within_ci=bool(rows[-1][6] <= target <= rows[-1][7]))
    return out


# gradient flow -------------------------------------------------------------

def gradient_flow(cfg: ExperimentConfig, seed: int | None = None, threads: int | None = None) -> ExperimentResult:
    cells = cfg.pde_cells or 256
    grid = PdeGrid(cfg.d, cells)
    tilt = cfg.tilt_field()
    if tilt is None:
        sol = solve_pme(cfg.profile_fn(), cfg.alpha, cfg.t_fin, grid, n_record=cfg.pde_records)
    else:
        sol = solve_fokker_planck(cfg.profile_fn(), cfg.alpha, tilt, cfg.t_fin, grid,
                                  n_record=cfg.pde_records)
    path = sol.path
    basis = TestBasis.for_path(path, cfg.K_max, cfg.time_nodes)
    rep = rate_report(path, cfg.alpha, cfg.rho, basis)
    rev = time_reverse(path)
    fwd_total = rep.total
    rev_total = total_rate(rev, cfg.alpha, cfg.rho, TestBasis.for_path(rev, cfg.K_max, cfg.time_nodes))
    scale = max(rep.dynamic_cost, rep.static_cost)
    rel_res = abs(rep.residual) / scale if scale > 0 else abs(rep.residual)
    rel_gap = abs(fwd_total - rev_total) / max(abs(fwd_total), 1e-300)
    header = ["static_cost", "dynamic_cost", "action", "dissipation_integral", "entropy_difference",
              "residual", "relative_residual", "rate_forward", "rate_reversed", "reversal_gap"]
    row = [rep.static_cost, rep.dynamic_cost, rep.action, rep.dissipation_integral,
           rep.entropy_difference, rep.residual, rel_res, fwd_total, rev_total, rel_gap]
    res = ExperimentResult("gradient-flow", {"gradient_flow": (header, [row])})
    res.report = rep.to_text() + f"relative_residual = {rel_res!r}\nreversal_gap = {rel_gap!r}\n"
    res.summary.update(report=rep, relative_residual=rel_res, reversal_gap=rel_gap)
    return res


# dissipation budget --------------------------------------------------------

def dissipation_budget(cfg: ExperimentConfig, seed: int | None = None,
                       threads: int | None = None) -> ExperimentResult:
    seed = resolve_seed(cfg, seed)
    threads = threads or cfg.threads
    frozen = str(_section(cfg, "dissipation").get("frozen", "false")).lower() in ("1", "true", "yes")
    beta = interpolation_exponent(cfg.alpha, cfg.d)
    rows = []
    for i, sc in enumerate(cfg.sweep()):
        lat = sc.lattice
        u_sites = cfg.profile_sites(lat)
        obs = {
            "entropy": lambda eta: entropy(eta, cfg.rho),
            "dissipation": lambda eta, lat=lat: discrete_dissipation(eta, lat, cfg.alpha),
            "lbeta": lambda eta: lp_norm(eta, beta) ** beta,
        }

        def task(j, rng, sc=sc, u_sites=u_sites, obs=obs):
            eta0 = _initial(cfg, sc, u_sites, rng)
            path, _ = run(eta0, observables=obs, n_snap=cfg.n_snap, rng=rng, frozen=frozen)
            H = path.observables["entropy"]
            D = trapezoid(path.observables["dissipation"], path.times)
            L = trapezoid(path.observables["lbeta"], path.times)
            return float(H.max() + D), D, float(H.max()), L

        res = run_replicas(task, cfg.replicas, seed, threads, key=(i,))
        cols = [mean_stderr(r[k] for r in res) for k in range(4)]
        rows.append([sc.N, sc.chi, sc.s, sc.N ** 2 * sc.chi, cfg.replicas]
                    + [v for c in cols for v in c])
    header = ["N", "chi", "s", "N2chi", "replicas", "F_mean", "F_stderr", "intD_mean", "intD_stderr",
              "supH_mean", "supH_stderr", "intLbeta_mean", "intLbeta_stderr"]
    out = ExperimentResult("dissipation-budget", {"dissipation": (header, rows)})
    if len(rows) > 1:
        x = np.log([r[3] for r in rows])
        y = np.log([r[7] for r in rows])
        spread = np.ptp(x) > 1e-9 and np.all(np.isfinite(y))
        out.summary["intD_slope"] = float(np.polyfit(x, y, 1)[0]) if spread else math.nan
        F = np.array([r[5] for r in rows])
        Fse = np.array([r[6] for r in rows])
        slope, slope_se = _trend(np.log([r[0] for r in rows]), F, Fse)
        out.summary.update(F_trend=slope, F_trend_stderr=slope_se)
    return out


# martingale check ----------------------------------------------------------

def parse_mode(mode: str):
    """'const', 'cosK' or 'sinK' -> (callable on points, sup of |grad|)."""
    mode = mode.strip()
    if mode == "const":
        return (lambda z: np.ones(z.shape[:-1])), 0.0
    kind, k = mode[:3], int(mode[3:])
    if kind not in ("cos", "sin") or k < 1:
        raise ValueError(f"bad test-function mode {mode!r}")
    f = np.cos if kind == "cos" else np.sin
    return (lambda z: f(2 * np.pi * k * z[..., 0])), 2 * np.pi * k


def martingale_check(cfg: ExperimentConfig, seed: int | None = None,
                     threads: int | None = None) -> ExperimentResult:
    seed = resolve_seed(cfg, seed)
    threads = threads or cfg.threads
    modes = [(m, *parse_mode(m)) for m in cfg.modes]
    rows = []
    for i, sc in enumerate(cfg.sweep()):
        lat = sc.lattice
        u_sites = cfg.profile_sites(lat)

        def task(j, rng, sc=sc, u_sites=u_sites):
            eta0 = _initial(cfg, sc, u_sites, rng)
            path, _ = run(eta0, n_snap=cfg.n_snap, rng=rng)
            return [(float(martingale_residual(path, f)[-1]), float(martingale_qv_bound(path, g)[-1]))
                    for _, f, g in modes]

        res = run_replicas(task, cfg.replicas, seed, threads, key=(i,))
        for k, (name, _, _) in enumerate(modes):
            Ms = [r[k][0] for r in res]
            bounds = [r[k][1] for r in res]
            m, se = mean_stderr(Ms)
            var = sample_variance(Ms) if len(Ms) > 1 else math.nan
            bmean = mean_stderr(bounds)[0]
            rows.append([sc.N, sc.chi, name, cfg.replicas, m, se,
                         m / se if se > 0 else 0.0, var, bmean, var / bmean if bmean > 0 else 0.0])
    header = ["N", "chi", "mode", "replicas", "mean", "stderr", "z", "variance", "qv_bound", "ratio"]
    return ExperimentResult("martingale-check", {"martingale": (header, rows)})


RUNNERS = {
    "hydro": hydro,
    "equilibrium-stats": equilibrium_stats,
    "ldp-lower": ldp_lower,
    "gradient-flow": gradient_flow,
    "dissipation-budget": dissipation_budget,
    "martingale-check": martingale_check,
}
