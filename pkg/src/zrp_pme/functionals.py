"""Entropy, dissipation, norms and mollified local averages.

Lattice fields are arrays over the N^d sites (cell volume N^-d); PDE fields
are arrays of shape (M,)*d (cell volume M^-d).  Both use the torus of unit
volume, so every integral is a mean over cells.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import xlogy

from .lattice import Configuration, TorusLattice


@dataclass
class DensityField:
    values: np.ndarray
    d: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != self.d:
            raise ValueError("values must have one axis per dimension")
        if np.any(self.values < 0):
            raise ValueError("densities must be nonnegative")

    @property
    def cells(self) -> int:
        return self.values.shape[0]

    @property
    def dx(self) -> float:
        return 1.0 / self.cells

    def mass(self) -> float:
        return float(self.values.mean())


@dataclass
class DensityPath:
    """Uniform time grid and a field per node: values[j] lives at times[j]."""

    times: np.ndarray
    values: np.ndarray
    d: int = 1

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape[0] != self.times.size or self.values.ndim != self.d + 1:
            raise ValueError("values must have shape (len(times),) + grid")
        if not np.all(np.diff(self.times) > 0):
            raise ValueError("time grid must be increasing")

    @property
    def cells(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return 1.0 / self.cells

    @property
    def t_fin(self) -> float:
        return float(self.times[-1] - self.times[0])

    def __getitem__(self, j) -> DensityField:
        return DensityField(self.values[j], self.d)

    def masses(self) -> np.ndarray:
        return self.values.reshape(self.times.size, -1).mean(axis=1)


def _values(u) -> np.ndarray:
    if isinstance(u, Configuration):
        return u.density
    if isinstance(u, DensityField):
        return u.values
    return np.asarray(u, dtype=float)


def entropy(u, rho=1.0) -> float:
    """H_rho(u) = int u log(u/rho) - u + rho  (bracket equal to rho where u = 0)."""
    u = _values(u)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), u.shape)
    if np.any((rho == 0) & (u > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        # split log so subnormal u cannot underflow u/rho to 0
        safe = np.where(rho > 0, rho, 1.0)
        dens = np.where(rho > 0, xlogy(u, u) - xlogy(u, safe) - u + rho, 0.0)
    return float(np.mean(dens))


def _half_power(u: np.ndarray, alpha: float) -> np.ndarray:
    if alpha == 2:
        return u.astype(float)
    with np.errstate(divide="ignore"):
        return np.where(u > 0, np.exp(0.5 * alpha * np.log(np.where(u > 0, u, 1.0))), 0.0)


def discrete_dissipation(eta, lattice: TorusLattice | None = None, alpha: float | None = None) -> float:
    """D_{alpha,N} = 1/(alpha N^(d-2)) sum_x sum_{y~x} (eta(x)^(a/2) - eta(y)^(a/2))^2 d/(2d)."""
    if isinstance(eta, Configuration):
        lattice = lattice or eta.lattice
        alpha = alpha if alpha is not None else eta.scaling.alpha
    if lattice is None or alpha is None:
        raise ValueError("lattice and alpha are required for raw site arrays")
    v = _half_power(_values(eta), alpha)
    diff = v[:, None] - v[lattice.neighbor_table]
    d = lattice.d
    return float(np.sum(diff * diff) * 0.5 / (alpha * lattice.N ** (d - 2)))


def _grid(u) -> np.ndarray:
    return u.values if isinstance(u, DensityField) else np.asarray(u, dtype=float)


def continuum_dissipation(u, alpha: float) -> float:
    """D_alpha(u) = (2/alpha) int |grad u^(alpha/2)|^2 with centred differences."""
    g = _grid(u)
    v = _half_power(g, alpha)
    M = g.shape[0]
    sq = np.zeros_like(v)
    for ax in range(g.ndim):
        dv = (np.roll(v, -1, axis=ax) - np.roll(v, 1, axis=ax)) * (M / 2)
        sq += dv * dv
    return float(2.0 / alpha * sq.mean())


def lp_norm(field, p: float, cell_volume: float | None = None) -> float:
    """(sum |f|^p * cell_volume)^(1/p); cell volume defaults to 1/size."""
    if p < 1:
        raise ValueError("p must be >= 1")
    f = np.abs(_values(field)).ravel()
    vol = 1.0 / f.size if cell_volume is None else cell_volume
    return float((np.sum(f ** p) * vol) ** (1.0 / p))


def interpolation_exponent(alpha: float, d: int) -> float:
    """beta = alpha + 1 - 2/p with p = 4 for d <= 2 and p = 2d/(d-2) otherwise."""
    p = 4.0 if d <= 2 else 2.0 * d / (d - 2)
    return alpha + 1.0 - 2.0 / p


def trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    return float(integrate.trapezoid(values, times))


def entropy_series(path, rho=1.0) -> np.ndarray:
    """H_rho at each snapshot of a PathRecorder or DensityPath."""
    obs = getattr(path, "observables", None)
    if obs and "entropy" in obs:
        return np.asarray(obs["entropy"])
    vals = _path_values(path)
    return np.array([entropy(v, rho) for v in vals])


def dissipation_series(path, alpha: float | None = None) -> np.ndarray:
    """D_{alpha,N} along a PathRecorder, D_alpha along a DensityPath."""
    obs = getattr(path, "observables", None)
    if obs and "dissipation" in obs:
        return np.asarray(obs["dissipation"])
    if isinstance(path, DensityPath):
        if alpha is None:
            raise ValueError("alpha is required for a DensityPath")
        return np.array([continuum_dissipation(v, alpha) for v in path.values])
    vals = _path_values(path)
    a = path.scaling.alpha if alpha is None else alpha
    return np.array([discrete_dissipation(v, path.lattice, a) for v in vals])


def _path_values(path) -> np.ndarray:
    if isinstance(path, DensityPath):
        return path.values
    counts = getattr(path, "counts", None)
    if counts is None:
        raise ValueError("path carries neither fields nor the required observables")
    return path.scaling.chi * counts


def path_functional(path, rho=1.0, alpha: float | None = None) -> float:
    """F = sup_t H(eta_t) + int D dt (trapezoid on the snapshot grid)."""
    h = entropy_series(path, rho)
    dis = dissipation_series(path, alpha)
    return float(h.max() + trapezoid(dis, path.times))


@lru_cache(maxsize=None)
def _bump_mass() -> float:
    val, _ = integrate.quad(lambda s: math.exp(-1.0 / (1.0 - 4.0 * s * s)), -0.5, 0.5,
                            epsabs=1e-14, epsrel=1e-12)
    return val


def bump(s: np.ndarray) -> np.ndarray:
    """Even C-infinity bump on [-1/2, 1/2] with unit integral."""
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 0.5
    q = np.where(inside, 1.0 - 4.0 * s * s, 1.0)
    return np.where(inside, np.exp(-1.0 / q), 0.0) / _bump_mass()


def mollifier_table(lattice: TorusLattice, r: float) -> tuple[np.ndarray, np.ndarray]:
    """Offsets (as coordinate tuples) and values of rho_r on the lattice support.

    rho_r(z) = prod_i bump(z_i / r) / r with z the wrapped displacement.
    """
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    N = lattice.N
    if r * N < 2:
        raise ValueError(f"mollifier under-resolved: r*N = {r * N:.3g} < 2")
    half = int(math.floor(r * N / 2))
    offs = np.arange(-half, half + 1)
    w1 = bump(offs / (N * r)) / r
    keep = w1 > 0
    offs, w1 = offs[keep], w1[keep]
    grids = np.meshgrid(*([offs] * lattice.d), indexing="ij")
    wgrid = np.ones_like(grids[0], dtype=float)
    for ax in range(lattice.d):
        wgrid = wgrid * np.meshgrid(*([w1] * lattice.d), indexing="ij")[ax]
    offsets = np.stack([g.ravel() for g in grids], axis=1)
    return offsets, wgrid.ravel()


def local_average(eta, lattice: TorusLattice, r: float) -> np.ndarray:
    """Mollified local average (1/(kappa N^d)) sum_y eta(y) rho_r(x - y).

    kappa = N^-d sum_y rho_r(y); the weights therefore sum to one and the
    average is a convex combination of site values.
    """
    v = _values(eta).reshape(lattice.shape)
    offsets, w = mollifier_table(lattice, r)
    kappa = w.sum() / lattice.site_count
    acc = np.zeros_like(v, dtype=float)
    for off, wi in zip(offsets, w):
        acc += wi * np.roll(v, tuple(off), axis=tuple(range(lattice.d)))
    return (acc / (kappa * lattice.site_count)).ravel()


def entropy_exponential_generator(config: Configuration) -> float:
    """G_N((alpha/2) H)(eta), the exponentially transformed generator on the entropy.

    Evaluated exactly from jump contributions
    g_xy = eta(x)^a exp((a/2)[(Psi(eta_x - chi) - Psi(eta_x) + Psi(eta_y + chi) - Psi(eta_y))/chi]) - eta(x)^a
    with Psi(u) = u log u; the result does not depend on a constant rho.
    """
    sc = config.scaling
    lat = config.lattice
    a, chi = sc.alpha, sc.chi
    eta = config.density

    def psi(u):
        return xlogy(u, u)

    nb = lat.neighbor_table
    ex = eta[:, None]
    ey = eta[nb]
    occupied = ex > 0
    e_minus = np.where(occupied, (psi(np.maximum(ex - chi, 0.0)) - psi(ex)) / chi, 0.0)
    e_plus = (psi(ey + chi) - psi(ey)) / chi
    with np.errstate(divide="ignore"):
        logpow = np.where(occupied, a * np.log(np.where(occupied, ex, 1.0)), -np.inf)
    gain = np.exp(logpow + 0.5 * a * (e_minus + e_plus))
    loss = np.exp(logpow)
    g = np.where(occupied, gain - loss, 0.0)
    return float(sc.d / lat.N ** (sc.d - 2) * g.mean(axis=1).sum())
