"""Discrete torus geometry, scaling parameters and particle configurations.

Sites are linearised row-major: the tuple (i_0, ..., i_{d-1}) maps to
sum_j i_j * N^(d-1-j).  Site x sits at the point x/N of the unit torus and
owns the cube of side 1/N centred there.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

MAX_DIM = 3


@dataclass(frozen=True)
class ScalingParams:
    d: int
    N: int
    chi: float
    alpha: float
    t_fin: float

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N < 2:
            raise ValueError(f"N must be >= 2, got {self.N}")
        if not self.chi > 0:
            raise ValueError("chi must be positive")
        if not self.alpha >= 1:
            raise ValueError("alpha must be >= 1")
        if not self.t_fin > 0:
            raise ValueError("t_fin must be positive")

    @property
    def s(self) -> float:
        """Scaling diagnostic N^2 chi^min(1, alpha/2)."""
        return self.N ** 2 * self.chi ** min(1.0, self.alpha / 2)

    @property
    def rate_prefactor(self) -> float:
        """Per-site exit rate is rate_prefactor * k^alpha."""
        return self.d * self.N ** 2 * self.chi ** (self.alpha - 1)

    @property
    def lattice(self) -> "TorusLattice":
        return TorusLattice(self.d, self.N)


class TorusLattice:
    """The torus (Z/NZ)^d with the uniform nearest-neighbour kernel."""

    def __init__(self, d: int, N: int):
        if d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {d}")
        if N < 2:
            raise ValueError(f"N must be >= 2, got {N}")
        self.d = int(d)
        self.N = int(N)
        self.site_count = self.N ** self.d

    def __repr__(self):
        return f"TorusLattice(d={self.d}, N={self.N})"

    def __eq__(self, other):
        return isinstance(other, TorusLattice) and (self.d, self.N) == (other.d, other.N)

    def __hash__(self):
        return hash((self.d, self.N))

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    def coords(self, x) -> np.ndarray:
        x = np.asarray(x)
        return np.stack(np.unravel_index(x, self.shape), axis=-1)

    def index(self, coords) -> np.ndarray:
        c = np.asarray(coords) % self.N
        return np.ravel_multi_index(tuple(np.moveaxis(c, -1, 0)), self.shape)

    def _check_site(self, x):
        if not (0 <= int(x) < self.site_count) or int(x) != x:
            raise IndexError(f"site {x} outside 0..{self.site_count - 1}")

    def neighbors(self, x: int) -> list[int]:
        """The 2d neighbours of x, ordered (axis 0: -1, +1, axis 1: -1, +1, ...)."""
        self._check_site(x)
        return [int(y) for y in self.neighbor_table[int(x)]]

    @cached_property
    def neighbor_table(self) -> np.ndarray:
        grid = np.arange(self.site_count).reshape(self.shape)
        cols = []
        for ax in range(self.d):
            cols.append(np.roll(grid, 1, axis=ax).ravel())
            cols.append(np.roll(grid, -1, axis=ax).ravel())
        table = np.stack(cols, axis=1).astype(np.int64)
        table.flags.writeable = False
        return table

    def kernel_matrix(self):
        """Sparse p^N(x, y); duplicate neighbours (N=2) add up."""
        from scipy import sparse

        n, k = self.site_count, 2 * self.d
        rows = np.repeat(np.arange(n), k)
        vals = np.full(n * k, 1.0 / k)
        return sparse.csr_matrix((vals, (rows, self.neighbor_table.ravel())), shape=(n, n))

    @cached_property
    def positions(self) -> np.ndarray:
        """Site centres x/N in [0, 1)^d, shape (site_count, d)."""
        return self.coords(np.arange(self.site_count)) / self.N

    def neighbor_mean(self, f: np.ndarray) -> np.ndarray:
        """(p^N f)(x) = (1/2d) sum_{y ~ x} f(y)."""
        f = np.asarray(f, dtype=float)
        return f[self.neighbor_table].mean(axis=1)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(q: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1/2, 1/2] with weights summing to 1."""
    if q not in _GL_CACHE:
        z, w = np.polynomial.legendre.leggauss(q)
        _GL_CACHE[q] = (z / 2, w / 2)
    return _GL_CACHE[q]


def cell_average(phi: Callable[[np.ndarray], np.ndarray], lattice: TorusLattice,
                 x=None, order: int = 3) -> np.ndarray | float:
    """Average of phi over the cube of side 1/N centred at each site.

    phi receives points of shape (..., d) and must be periodic in each
    coordinate (it is evaluated at unreduced coordinates near the cube).
    Uses an order-q tensor Gauss-Legendre rule per axis.
    """
    z, w = gauss_legendre(order)
    d, N = lattice.d, lattice.N
    mesh = np.stack(np.meshgrid(*([z] * d), indexing="ij"), axis=-1).reshape(-1, d)
    wts = np.prod(np.stack(np.meshgrid(*([w] * d), indexing="ij"), axis=-1).reshape(-1, d), axis=1)
    if x is None:
        centres = lattice.positions
    else:
        centres = np.atleast_1d(lattice.coords(np.asarray(x)) / N).reshape(-1, d)
    pts = centres[:, None, :] + mesh[None, :, :] / N
    vals = np.asarray(phi(pts), dtype=float)
    vals = np.broadcast_to(vals, pts.shape[:-1])
    out = vals @ wts
    if x is not None and np.ndim(x) == 0:
        return float(out[0])
    return out


def discrete_laplacian(f: np.ndarray, lattice: TorusLattice) -> np.ndarray:
    """N^2 sum_{y ~ x} (f(y) - f(x))."""
    f = np.asarray(f, dtype=float)
    nb = f[lattice.neighbor_table]
    return lattice.N ** 2 * (nb.sum(axis=1) - 2 * lattice.d * f)


@dataclass
class Configuration:
    """Occupation numbers k(x); the physical density is eta = chi * k."""

    counts: np.ndarray
    scaling: ScalingParams
    lattice: TorusLattice = field(init=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.dtype.kind not in "iu":
            if not np.all(counts == np.round(counts)):
                raise ValueError("occupation numbers must be integers")
        counts = counts.astype(np.int64).ravel()
        if counts.size != self.scaling.N ** self.scaling.d:
            raise ValueError(f"expected {self.scaling.N ** self.scaling.d} sites, got {counts.size}")
        if np.any(counts < 0):
            raise ValueError("occupation numbers must be nonnegative")
        self.counts = counts
        self.lattice = self.scaling.lattice

    @property
    def density(self) -> np.ndarray:
        return self.scaling.chi * self.counts

    @property
    def particles(self) -> int:
        return int(self.counts.sum())

    @property
    def mass(self) -> float:
        """<1, eta> = chi * sum k / N^d."""
        return self.scaling.chi * self.particles / self.lattice.site_count

    def copy(self) -> "Configuration":
        return Configuration(self.counts.copy(), self.scaling)

    @classmethod
    def from_profile(cls, u: Callable[[np.ndarray], np.ndarray] | Sequence[float],
                     scaling: ScalingParams) -> "Configuration":
        """Deterministic start: k(x) = round(u(x)/chi), u a callable or site array."""
        lat = scaling.lattice
        vals = cell_average(u, lat) if callable(u) else np.asarray(u, dtype=float)
        return cls(np.rint(vals / scaling.chi).astype(np.int64), scaling)
