"""Static and dynamic costs, the action, and the gradient-flow identity.

The dynamic cost is a supremum of

    Xi1(phi) = <phi_T,u_T> - <phi_0,u_0> - int <d_t phi, u> - 1/2 int int (Lap phi + |grad phi|^2) u^a

over space-time test functions.  Restricting phi to a finite basis turns the
supremum into a weighted Poisson problem  G c = b  with the Gram matrix
G_ij = int int u^a grad phi_i . grad phi_j, and the restricted value is
1/2 c^T G c, a lower bound that grows with the basis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np

from .functionals import DensityPath, continuum_dissipation, entropy, trapezoid
from .lattice import TorusLattice

PINV_RCOND = 1e-10
PSI_FLOOR = -40.0
Field = Callable[[float, np.ndarray], np.ndarray]


def _pow(u: np.ndarray, p: float) -> np.ndarray:
    if p == 1:
        return u
    return np.where(u > 0, np.abs(u) ** p, 0.0)


def _points(path: DensityPath) -> np.ndarray:
    """Cell centres i/M of the path's grid, shape grid + (d,)."""
    shape = path.values.shape[1:]
    return TorusLattice(path.d, path.cells).positions.reshape(shape + (path.d,))


def _trap_weights(t: np.ndarray) -> np.ndarray:
    w = np.zeros_like(t)
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return w


@dataclass
class TestFunction:
    """phi with its time derivative, spatial gradient and Laplacian, all (t, pts) callables."""

    __test__ = False

    value: Field
    dt: Field
    grad: Field
    lap: Field

    @classmethod
    def static(cls, value: Field, grad: Field, lap: Field) -> "TestFunction":
        return cls(value, lambda t, z: np.zeros(z.shape[:-1]), grad, lap)

    @classmethod
    def constant(cls, c: float = 1.0) -> "TestFunction":
        return cls.static(lambda t, z: np.full(z.shape[:-1], float(c)),
                          lambda t, z: np.zeros(z.shape),
                          lambda t, z: np.zeros(z.shape[:-1]))

    @classmethod
    def fourier(cls, k, kind: str = "cos", amp: float = 1.0, omega: float = 0.0) -> "TestFunction":
        """amp * trig(2 pi k.x) * cos(omega t), trig in {cos, sin}."""
        k = np.atleast_1d(np.asarray(k, dtype=float))
        two_pi_k = 2 * np.pi * k
        k2 = float(two_pi_k @ two_pi_k)
        f, fp = (np.cos, lambda a: -np.sin(a)) if kind == "cos" else (np.sin, np.cos)

        def phase(z):
            return z @ two_pi_k

        return cls(
            lambda t, z: amp * math.cos(omega * t) * f(phase(z)),
            lambda t, z: -amp * omega * math.sin(omega * t) * f(phase(z)),
            lambda t, z: amp * math.cos(omega * t) * fp(phase(z))[..., None] * two_pi_k,
            lambda t, z: -amp * k2 * math.cos(omega * t) * f(phase(z)),
        )


def xi1(phi: TestFunction, path: DensityPath, alpha: float) -> float:
    """Xi1(phi) by cell averages in space and the trapezoid rule on the path's times."""
    z = _points(path)
    t, u = path.times, path.values
    bnd = np.mean(phi.value(t[-1], z) * u[-1]) - np.mean(phi.value(t[0], z) * u[0])
    dterm = np.array([np.mean(phi.dt(s, z) * v) for s, v in zip(t, u)])
    quad = np.array([np.mean((phi.lap(s, z) + np.sum(phi.grad(s, z) ** 2, axis=-1)) * _pow(v, alpha))
                     for s, v in zip(t, u)])
    return float(bnd - trapezoid(dterm, t) - 0.5 * trapezoid(quad, t))


def xi0(psi, u0, rho, alpha: float) -> float:
    """<psi,u0> - alpha int rho (exp(psi/alpha) - 1); psi a callable of points or a cell array."""
    u0 = np.asarray(getattr(u0, "values", u0), dtype=float)
    if callable(psi):
        d = u0.ndim
        psi = psi(TorusLattice(d, u0.shape[0]).positions.reshape(u0.shape + (d,)))
    psi = np.broadcast_to(np.asarray(psi, dtype=float), u0.shape)
    rho = np.broadcast_to(np.asarray(rho, dtype=float), u0.shape)
    return float(np.mean(psi * u0) - alpha * np.mean(rho * np.expm1(psi / alpha)))


def entropy_maximiser(u0, rho, alpha: float) -> np.ndarray:
    """psi* = alpha log(u0/rho), floored at -40 alpha where u0 vanishes."""
    u0 = np.asarray(getattr(u0, "values", u0), dtype=float)
    with np.errstate(divide="ignore"):
        psi = alpha * np.log(u0 / np.asarray(rho, dtype=float))
    return np.maximum(psi, PSI_FLOOR * alpha)


class TestBasis:
    """Real Fourier modes up to |k|_inf <= K_max times piecewise-linear hats in time.

    Spatial mode 0 is the constant; the others are cos and sin of 2 pi k.x for
    k in a half space.  `offset` adds a constant to every spatial mode (used to
    check gauge invariance).
    """

    __test__ = False

    def __init__(self, d: int, K_max: int, time_nodes, offset: float = 0.0):
        if K_max < 0:
            raise ValueError("K_max must be nonnegative")
        self.d = d
        self.K_max = K_max
        self.time_nodes = np.asarray(time_nodes, dtype=float)
        if self.time_nodes.size < 2 or np.any(np.diff(self.time_nodes) <= 0):
            raise ValueError("need at least two increasing time nodes")
        self.offset = offset
        waves = [np.zeros(d, dtype=int)]
        kinds = ["const"]
        rng = range(-K_max, K_max + 1)
        for k in np.array(np.meshgrid(*([rng] * d), indexing="ij")).reshape(d, -1).T:
            nz = np.flatnonzero(k)
            if nz.size == 0 or k[nz[0]] < 0:
                continue
            waves += [k, k]
            kinds += ["cos", "sin"]
        order = np.argsort([np.abs(w).max() for w in waves], kind="stable")
        self.waves = [waves[i] for i in order]
        self.kinds = [kinds[i] for i in order]

    @classmethod
    def for_path(cls, path: DensityPath, K_max: int = 8, n_time: int = 64, offset: float = 0.0):
        return cls(path.d, K_max, np.linspace(path.times[0], path.times[-1], n_time), offset)

    @property
    def n_space(self) -> int:
        return len(self.waves)

    @property
    def n_time(self) -> int:
        return self.time_nodes.size

    def __len__(self):
        return self.n_space * self.n_time

    def spatial(self, pts: np.ndarray):
        """(values, gradients, Laplacians) of the spatial modes; leading axis = mode."""
        vals, grads, laps = [], [], []
        for k, kind in zip(self.waves, self.kinds):
            tk = 2 * np.pi * k.astype(float)
            ph = pts @ tk
            if kind == "const":
                vals.append(np.ones(pts.shape[:-1]) + self.offset)
                grads.append(np.zeros(pts.shape))
                laps.append(np.zeros(pts.shape[:-1]))
            elif kind == "cos":
                vals.append(np.cos(ph) + self.offset)
                grads.append(-np.sin(ph)[..., None] * tk)
                laps.append(-(tk @ tk) * np.cos(ph))
            else:
                vals.append(np.sin(ph) + self.offset)
                grads.append(np.cos(ph)[..., None] * tk)
                laps.append(-(tk @ tk) * np.sin(ph))
        return np.stack(vals), np.stack(grads), np.stack(laps)

    def hats(self, times: np.ndarray) -> np.ndarray:
        """H[n, j] = hat_j(times[n])."""
        eye = np.eye(self.n_time)
        return np.stack([np.interp(times, self.time_nodes, eye[j]) for j in range(self.n_time)], axis=1)


@dataclass
class GalerkinResult:
    value: float
    coefficients: np.ndarray
    control: np.ndarray
    gram: np.ndarray
    load: np.ndarray
    basis: TestBasis
    finite: bool = True

    def __iter__(self):
        yield self.value
        yield self.coefficients
        yield self.control


def _assemble(path: DensityPath, alpha: float, basis: TestBasis, laplacian: bool):
    if not np.all(np.isfinite(path.values)):
        raise ValueError("path has non-finite entries")
    if basis.d != path.d:
        raise ValueError("basis and path dimensions differ")
    z = _points(path)
    t = path.times
    ncell = path.values[0].size
    E, DE, LE = basis.spatial(z)
    S = basis.n_space
    E = E.reshape(S, ncell)
    DE = DE.reshape(S, ncell, path.d)
    LE = LE.reshape(S, ncell)
    H = basis.hats(t)
    w = _trap_weights(t)
    U = path.values.reshape(t.size, ncell)
    Ua = _pow(U, alpha)
    # A[n, s, s'] = <u_n^a, grad e_s . grad e_s'>
    A = np.einsum("nx,sxd,rxd->nsr", Ua, DE, DE, optimize=True) / ncell
    J = basis.n_time
    G = np.zeros((S, J, S, J))
    for n in range(t.size):
        nz = np.flatnonzero(H[n])
        for j in nz:
            for jj in nz:
                G[:, j, :, jj] += w[n] * H[n, j] * H[n, jj] * A[n]
    # int <phi, d_t u> with phi and u linear in time on each step
    dU = np.diff(U, axis=0)
    Hm = 0.5 * (H[1:] + H[:-1])
    b = np.einsum("sx,nx,nj->sj", E, dU, Hm, optimize=True) / ncell
    if laplacian:
        lap = np.einsum("nx,sx->ns", Ua, LE) / ncell
        b -= 0.5 * np.einsum("n,ns,nj->sj", w, lap, H)
    return G.reshape(S * J, S * J), b, b.reshape(S * J), H, DE, Ua


def _solve(path, alpha, basis, laplacian, mass_tol):
    G, b2, b, H, DE, Ua = _assemble(path, alpha, basis, laplacian)
    const = [i for i, k in enumerate(basis.kinds) if k == "const"]
    scale = max(1.0, float(np.abs(path.values).mean()))
    if const and np.max(np.abs(b2[const])) > mass_tol * scale:
        return G, b, None, math.inf, H, DE, Ua
    c = np.linalg.pinv(G, rcond=PINV_RCOND, hermitian=True) @ b
    return G, b, c, 0.5 * float(c @ G @ c), H, DE, Ua


def _gradient_field(c, basis, H, DE, path):
    """grad psi at every path time: shape (n_times, ncell, d)."""
    C = c.reshape(basis.n_space, basis.n_time)
    coef_t = H @ C.T  # (n, S)
    return np.einsum("ns,sxd->nxd", coef_t, DE)


def dynamic_cost(path: DensityPath, alpha: float, basis: TestBasis,
                 mass_tol: float = 1e-9) -> GalerkinResult:
    """Galerkin value of the dynamic cost and the optimal control u^(a/2) grad psi.

    The control has shape (n_times,) + grid + (d,).  A path whose mass moves
    is flagged with value +inf.
    """
    G, b, c, val, H, DE, Ua = _solve(path, alpha, basis, True, mass_tol)
    if c is None:
        return GalerkinResult(math.inf, np.full(b.shape, np.nan), None, G, b, basis, False)
    grad = _gradient_field(c, basis, H, DE, path)
    ctrl = np.sqrt(Ua)[..., None] * grad
    return GalerkinResult(val, c, ctrl.reshape(path.values.shape + (path.d,)), G, b, basis)


def action(path: DensityPath, alpha: float, basis: TestBasis, mass_tol: float = 1e-9) -> GalerkinResult:
    """Galerkin action 1/2 ||theta||^2 for  d_t u + div(1/2 u^(a/2) theta) = 0.

    theta = 2 u^(a/2) grad psi with psi solving the weighted Poisson problem
    for the load int <phi, d_t u>; hence the action is 2 c^T G c.
    """
    G, b, c, half, H, DE, Ua = _solve(path, alpha, basis, False, mass_tol)
    if c is None:
        return GalerkinResult(math.inf, np.full(b.shape, np.nan), None, G, b, basis, False)
    grad = _gradient_field(c, basis, H, DE, path)
    theta = 2 * np.sqrt(Ua)[..., None] * grad
    return GalerkinResult(4 * half, c, theta.reshape(path.values.shape + (path.d,)), G, b, basis)


def gram_check(G: np.ndarray) -> float:
    """Smallest eigenvalue over trace; >= -1e-10 for a valid Gram matrix."""
    tr = float(np.trace(G))
    return float(np.linalg.eigvalsh(0.5 * (G + G.T)).min() / tr) if tr > 0 else 0.0


def time_reverse(path: DensityPath) -> DensityPath:
    """(T u)_t = u_{t_fin - t} on the mirrored time grid."""
    t = path.times
    mirrored = t[0] + t[-1] - t[::-1]
    # symmetric grids (all uniform ones) keep their exact node values, so
    # reversing twice is bitwise the identity
    if np.max(np.abs(mirrored - t)) <= 1e-12 * (t[-1] - t[0]):
        mirrored = t.copy()
    return DensityPath(mirrored, path.values[::-1].copy(), path.d)


def dissipation_integral(path: DensityPath, alpha: float) -> float:
    return trapezoid(np.array([continuum_dissipation(v, alpha) for v in path.values]), path.times)


@dataclass
class RateReport:
    static_cost: float
    dynamic_cost: float
    action: float
    dissipation_integral: float
    entropy_difference: float
    residual: float

    @property
    def total(self) -> float:
        return self.static_cost + self.dynamic_cost

    def to_text(self) -> str:
        lines = [f"{f.name} = {getattr(self, f.name)!r}" for f in fields(self)]
        lines.append(f"total = {self.total!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RateReport":
        kv = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = float(v.strip())
        return cls(**{f.name: kv[f.name] for f in fields(cls)})


def rate_report(path: DensityPath, alpha: float, rho: float, basis: TestBasis) -> RateReport:
    """All terms of the gradient-flow identity for a path.

    residual = J - 1/2 (a H(u_T) - a H(u_0) + (a/2) int D + 1/2 A),
    dissipation_integral holds (a/2) int D and entropy_difference H(u_T) - H(u_0).
    """
    if not rho > 0:
        raise ValueError("rho must be a positive constant")
    J = dynamic_cost(path, alpha, basis).value
    A = action(path, alpha, basis).value
    D = dissipation_integral(path, alpha)
    h0, hT = entropy(path.values[0], rho), entropy(path.values[-1], rho)
    res = J - 0.5 * (alpha * (hT - h0) + 0.5 * alpha * D + 0.5 * A)
    return RateReport(alpha * h0, J, A, 0.5 * alpha * D, hT - h0, res)


def gradient_flow_residual(path: DensityPath, alpha: float, rho: float, basis: TestBasis) -> float:
    return rate_report(path, alpha, rho, basis).residual


def total_rate(path: DensityPath, alpha: float, rho: float, basis: TestBasis) -> float:
    """alpha H_rho(u_0) + J(path)."""
    return alpha * entropy(path.values[0], rho) + dynamic_cost(path, alpha, basis).value
