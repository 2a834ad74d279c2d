"""Finite-volume solver for the PME, its Fokker-Planck tilt and the skeleton equation.

    d_t u = 1/2 Lap(u^alpha) - div(drift),   periodic unit torus.

Cells are centred at i/M (the lattice convention), the flux between cell i and
i+1 along an axis is  (u_{i+1}^a - u_i^a)/(2 dx) - drift_face,  and the update
telescopes, so mass is conserved up to rounding.  Drifts:
  Fokker-Planck  drift_face = L(u_i^a, u_{i+1}^a) (h_{i+1} - h_i)/dx,
                 L the logarithmic mean (exact discrete stationary states);
  skeleton       drift_face = mean(u^{a/2}) g_face.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .functionals import DensityField, DensityPath, continuum_dissipation, entropy, trapezoid
from .lattice import TorusLattice, cell_average

log = logging.getLogger(__name__)


@dataclass
class PdeGrid:
    d: int
    M: int
    dt: float | None = None
    c_cfl: float = 0.2

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError("d must be 1, 2 or 3")
        if self.M < 3:
            raise ValueError("need at least 3 cells per axis")

    @property
    def dx(self) -> float:
        return 1.0 / self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    @property
    def lattice(self) -> TorusLattice:
        return TorusLattice(self.d, self.M)

    def centres(self) -> np.ndarray:
        """Cell centres, shape grid + (d,)."""
        return self.lattice.positions.reshape(self.shape + (self.d,))

    def project(self, f, order: int = 3) -> np.ndarray:
        """Cell averages of a callable, or a validated copy of an array."""
        if callable(f):
            return cell_average(f, self.lattice, order=order).reshape(self.shape)
        if isinstance(f, DensityField):
            f = f.values
        arr = np.array(f, dtype=float)
        if arr.shape != self.shape:
            raise ValueError(f"field shape {arr.shape} does not match grid {self.shape}")
        return arr


@dataclass
class PdeSolution:
    path: DensityPath
    alpha: float
    mass: np.ndarray
    dissipation: np.ndarray
    steps: int
    clip_mass: float = 0.0
    max_mass_drift: float = 0.0
    entropy_rho: float = 1.0
    entropy_values: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.entropy_values is None:
            self.entropy_values = np.array([entropy(v, self.entropy_rho) for v in self.path.values])

    @property
    def times(self) -> np.ndarray:
        return self.path.times

    @property
    def final(self) -> np.ndarray:
        return self.path.values[-1]


def _logmean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a - b)/(log a - log b), continuously extended (a at a = b, 0 if either vanishes)."""
    out = np.zeros_like(a)
    pos = (a > 0) & (b > 0)
    aa, bb = a[pos], b[pos]
    la, lb = np.log(aa), np.log(bb)
    diff = la - lb
    small = np.abs(diff) < 1e-6
    safe = np.where(small, 1.0, diff)
    lm = np.where(small, np.sqrt(aa * bb) * (1 + diff * diff / 24), (aa - bb) / safe)
    out[pos] = lm
    return out


def _pow(u: np.ndarray, p: float) -> np.ndarray:
    if p == 1:
        return u.copy()
    if p == 2:
        return u * u
    return np.where(u > 0, np.abs(u) ** p, 0.0)


Drift = Callable[[float, np.ndarray], list]


def _evolve(u0: np.ndarray, alpha: float, t_fin: float, grid: PdeGrid, drift: Drift | None,
            n_record: int, implicit: bool, entropy_rho: float) -> PdeSolution:
    u = np.array(u0, dtype=float)
    if np.any(u < 0):
        raise ValueError("initial density must be nonnegative")
    if not math.isfinite(entropy(u, entropy_rho)):
        raise ValueError("initial entropy is not finite")
    dx = grid.dx
    axes = tuple(range(grid.d))
    rec_times = np.linspace(0.0, t_fin, n_record + 1)
    snaps = [u.copy()]
    total0 = u.sum()
    max_drift = 0.0
    clip = 0.0
    t = 0.0
    steps = 0
    nxt = 1
    lap = _laplacian_matrix(grid) if implicit else None
    while nxt <= n_record:
        ua = _pow(u, alpha)
        d_faces = drift(t, u) if drift is not None else None
        if implicit:
            dt = grid.dt if grid.dt is not None else grid.c_cfl * dx
        else:
            umax = float(u.max())
            diff_speed = alpha * (umax ** (alpha - 1) if umax > 0 else 0.0) * grid.d
            adv = 0.0
            if d_faces is not None:
                for ax, D in zip(axes, d_faces):
                    face_u = 0.5 * (u + np.roll(u, -1, axis=ax))
                    adv = max(adv, float(np.max(np.abs(D) / np.maximum(face_u, 1e-12))))
            dt = grid.c_cfl * dx * dx / max(diff_speed + dx * adv, 1e-300)
            if grid.dt is not None:
                dt = min(dt, grid.dt)
        if dt < 1e-14 * t_fin:
            raise FloatingPointError(f"time step underflow (dt={dt:.3g})")
        if t + dt >= rec_times[nxt] - 1e-15 * t_fin:
            dt = rec_times[nxt] - t
        div = np.zeros_like(u)
        for k, ax in enumerate(axes):
            if not implicit:
                F = 0.5 * (np.roll(ua, -1, axis=ax) - ua) / dx
            else:
                F = np.zeros_like(u)
            if d_faces is not None:
                F = F - d_faces[k]
            div += (F - np.roll(F, 1, axis=ax)) / dx
        if implicit:
            from scipy.sparse import diags
            from scipy.sparse.linalg import spsolve

            coeff = _pow(u, alpha - 1)
            A = diags(np.ones(u.size)) - 0.5 * dt * (lap @ diags(coeff.ravel()))
            u = spsolve(A.tocsc(), (u + dt * div).ravel()).reshape(u.shape)
        else:
            u = u + dt * div
        if np.any(u < 0):
            neg = u < 0
            clip += float(-u[neg].sum()) / u.size
            u[neg] = 0.0
        t += dt
        steps += 1
        max_drift = max(max_drift, abs(u.sum() - total0) / max(total0, 1e-300))
        if abs(t - rec_times[nxt]) <= 1e-12 * t_fin:
            t = rec_times[nxt]
            snaps.append(u.copy())
            nxt += 1
    if clip > 1e-10 * total0 / u.size:
        log.warning("clipped negative mass %.3g", clip)
    path = DensityPath(rec_times, np.stack(snaps), grid.d)
    dis = np.array([continuum_dissipation(v, alpha) for v in path.values])
    return PdeSolution(path, alpha, path.masses(), dis, steps, clip, max_drift, entropy_rho)


def _laplacian_matrix(grid: PdeGrid):
    from scipy import sparse

    n = grid.M ** grid.d
    idx = np.arange(n).reshape(grid.shape)
    L = sparse.csr_matrix((n, n))
    for ax in range(grid.d):
        fwd = np.roll(idx, -1, axis=ax).ravel()
        S = sparse.csr_matrix((np.ones(n), (np.arange(n), fwd)), shape=(n, n))
        L = L + S + S.T - 2 * sparse.identity(n)
    return L / grid.dx ** 2


def solve_pme(u0, alpha: float, t_fin: float, grid: PdeGrid, n_record: int = 100,
              implicit: bool = False, entropy_rho: float = 1.0) -> PdeSolution:
    """d_t u = 1/2 Lap(u^alpha)."""
    return _evolve(grid.project(u0), alpha, t_fin, grid, None, n_record, implicit, entropy_rho)


def fp_drift(h, alpha: float, grid: PdeGrid, upwind: bool = False) -> Drift:
    """Face drifts mobility * (h_{i+1} - h_i)/dx for a tilt h(t, pts) (or TiltField)."""
    hfun = h.h if hasattr(h, "h") else h
    pts = grid.centres()
    time_dep = getattr(h, "time_degree", 1) > 0
    cache: dict = {}

    def hvals(t):
        key = t if time_dep else 0.0
        if key not in cache:
            cache.clear()
            cache[key] = np.asarray(hfun(key, pts), dtype=float)
        return cache[key]

    def drift(t, u):
        hv = hvals(t)
        ua = _pow(u, alpha)
        out = []
        for ax in range(grid.d):
            dh = (np.roll(hv, -1, axis=ax) - hv) / grid.dx
            nb = np.roll(ua, -1, axis=ax)
            if upwind:
                mob = np.where(dh > 0, ua, nb)
            else:
                mob = _logmean(ua, nb)
            out.append(mob * dh)
        return out

    return drift


def solve_fokker_planck(u0, alpha: float, h, t_fin: float, grid: PdeGrid, n_record: int = 100,
                        implicit: bool = False, upwind: bool = False,
                        entropy_rho: float = 1.0) -> PdeSolution:
    """d_t u = 1/2 Lap(u^alpha) - div(u^alpha grad h)."""
    return _evolve(grid.project(u0), alpha, t_fin, grid, fp_drift(h, alpha, grid, upwind),
                   n_record, implicit, entropy_rho)


def linear_response(u0, alpha: float, h, t_fin: float, grid: PdeGrid,
                    n_record: int = 1) -> tuple[DensityPath, DensityPath]:
    """First-order response of the Fokker-Planck flow to the tilt h around the PME.

    Co-evolves the PME u and  d_t du = 1/2 Lap(alpha u^(alpha-1) du) - div(u^alpha grad h)
    with the discrete linearisation of the Fokker-Planck scheme and the same
    explicit steps.  Returns (u path, du path).
    """
    u = grid.project(u0)
    du = np.zeros_like(u)
    dx = grid.dx
    hfun = h.h if hasattr(h, "h") else h
    pts = grid.centres()
    rec = np.linspace(0.0, t_fin, n_record + 1)
    us, dus = [u.copy()], [du.copy()]
    t, nxt = 0.0, 1
    while nxt <= n_record:
        umax = float(u.max())
        dt = grid.c_cfl * dx * dx / max(alpha * umax ** (alpha - 1) * grid.d, 1e-300)
        if grid.dt is not None:
            dt = min(dt, grid.dt)
        if t + dt >= rec[nxt] - 1e-15 * t_fin:
            dt = rec[nxt] - t
        hv = np.asarray(hfun(t, pts), dtype=float)
        ua = _pow(u, alpha)
        lin = alpha * _pow(u, alpha - 1) * du
        div_u = np.zeros_like(u)
        div_d = np.zeros_like(u)
        for ax in range(grid.d):
            F = 0.5 * (np.roll(ua, -1, axis=ax) - ua) / dx
            G = 0.5 * (np.roll(lin, -1, axis=ax) - lin) / dx
            G = G - _logmean(ua, np.roll(ua, -1, axis=ax)) * (np.roll(hv, -1, axis=ax) - hv) / dx
            div_u += (F - np.roll(F, 1, axis=ax)) / dx
            div_d += (G - np.roll(G, 1, axis=ax)) / dx
        u = u + dt * div_u
        du = du + dt * div_d
        t += dt
        if abs(t - rec[nxt]) <= 1e-12 * t_fin:
            t = rec[nxt]
            us.append(u.copy())
            dus.append(du.copy())
            nxt += 1
    return DensityPath(rec, np.stack(us), grid.d), DensityPath(rec, np.stack(dus), grid.d)


def solve_skeleton(u0, alpha: float, g: Callable[[float, np.ndarray, PdeGrid], list], t_fin: float,
                   grid: PdeGrid, n_record: int = 100, implicit: bool = False,
                   entropy_rho: float = 1.0) -> PdeSolution:
    """d_t u = 1/2 Lap(u^alpha) - div(u^{alpha/2} g).

    g(t, u, grid) returns one array of face values per axis (face i sits
    between cells i and i+1).
    """
    def drift(t, u):
        half = _pow(u, alpha / 2)
        gf = g(t, u, grid)
        return [0.5 * (half + np.roll(half, -1, axis=ax)) * gf[ax] for ax in range(grid.d)]

    return _evolve(grid.project(u0), alpha, t_fin, grid, drift, n_record, implicit, entropy_rho)


def path_interpolator(path: DensityPath) -> Callable[[float], np.ndarray]:
    """Piecewise-linear-in-time evaluation of a recorded path."""
    times, vals = path.times, path.values

    def at(t: float) -> np.ndarray:
        t = min(max(t, times[0]), times[-1])
        j = int(np.searchsorted(times, t, side="right") - 1)
        j = min(j, times.size - 2)
        w = (t - times[j]) / (times[j + 1] - times[j])
        return (1 - w) * vals[j] + w * vals[j + 1]

    return at


def gradient_control(v_path: DensityPath, alpha: float, factor: float = 2.0):
    """g(t) = factor * grad(v_t^{alpha/2}) on faces, v read from a recorded path."""
    at = path_interpolator(v_path)

    def g(t, u, grid):
        vh = _pow(at(t), alpha / 2)
        return [factor * (np.roll(vh, -1, axis=ax) - vh) / grid.dx for ax in range(grid.d)]

    return g


def weak_form_residual(sol: PdeSolution, phi, dphi_dt, lap_phi, drift_term=None) -> float:
    """<phi_T,u_T> - <phi_0,u_0> - int <d_t phi, u> - 1/2 int int u^a Lap phi [- drift_term].

    phi, dphi_dt, lap_phi are callables (t, pts) -> values; integrals use
    the cell rule in space and the trapezoid rule on the recorded times.
    """
    path = sol.path
    grid_pts = TorusLattice(path.d, path.cells).positions.reshape(path.values.shape[1:] + (path.d,))
    t = path.times
    u = path.values
    a = sol.alpha
    bnd = np.mean(phi(t[-1], grid_pts) * u[-1]) - np.mean(phi(t[0], grid_pts) * u[0])
    dt_term = np.array([np.mean(dphi_dt(s, grid_pts) * v) for s, v in zip(t, u)])
    diff_term = np.array([np.mean(lap_phi(s, grid_pts) * _pow(v, a)) for s, v in zip(t, u)])
    res = bnd - trapezoid(dt_term, t) - 0.5 * trapezoid(diff_term, t)
    if drift_term is not None:
        res -= drift_term
    return float(res)


@dataclass
class BudgetReport:
    times: np.ndarray
    entropy: np.ndarray
    dissipation_integral: np.ndarray
    residual: np.ndarray
    relative: float


def entropy_dissipation_budget(sol: PdeSolution, rho: float = 1.0) -> BudgetReport:
    """R(t) = H(u_0) - H(u_t) - int_0^t D_alpha ds on the recorded times."""
    t = sol.times
    H = np.array([entropy(v, rho) for v in sol.path.values])
    D = sol.dissipation
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (D[1:] + D[:-1]) * np.diff(t))])
    R = H[0] - H - cum
    rel = float(np.max(np.abs(R)) / H[0]) if H[0] > 0 else float(np.max(np.abs(R)))
    return BudgetReport(t, H, cum, R, rel)


def control_norm_fp(sol: PdeSolution, grad_h: Callable[[float, np.ndarray], np.ndarray]) -> np.ndarray:
    """Cumulative int_0^t int u^alpha |grad h|^2 along the recorded times."""
    path = sol.path
    pts = TorusLattice(path.d, path.cells).positions.reshape(path.values.shape[1:] + (path.d,))
    vals = np.array([np.mean(_pow(v, sol.alpha) * np.sum(grad_h(s, pts) ** 2, axis=-1))
                     for s, v in zip(path.times, path.values)])
    return np.concatenate([[0.0], np.cumsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(path.times))])


def write_path_csv(path: DensityPath, filename) -> None:
    """Long format: time, cell (row-major index), value."""
    from .experiments.io import write_csv

    n = path.values[0].size
    rows = []
    for t, v in zip(path.times, path.values):
        flat = v.ravel()
        rows.extend((t, i, flat[i]) for i in range(n))
    write_csv(filename, ["time", "cell", "value"], rows)
