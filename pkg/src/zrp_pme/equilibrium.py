"""Single-site equilibrium laws of the zero-range process and related sums.

The single-site law at parameter rho is
    pi(k) = (rho/chi)^(alpha k) / (k!)^alpha / Z_alpha(rho/chi),
and everything here is evaluated in the log domain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy.special import gammaln, logsumexp

from .lattice import Configuration, ScalingParams, TorusLattice, cell_average

LOG_TOL = 40.0


def _log_terms(lam: float, phi: float, m: np.ndarray) -> np.ndarray:
    if phi == 0:
        return np.where(m == 0, 0.0, -np.inf)
    return lam * (m * math.log(phi) - gammaln(m + 1.0))


def _window(lam: float, phi: float, centre: int, cap: int | None = None,
            tol: float = LOG_TOL) -> np.ndarray:
    """Integers around `centre` whose log-terms lie within tol of the maximum.

    The terms are log-concave in m, so checking that both ends have dropped
    below max - tol is enough.
    """
    top = cap if cap is not None else None
    width = int(math.ceil(math.sqrt(2.0 * tol * max(phi, 1.0) / lam))) + 8
    while True:
        lo = max(0, centre - width)
        hi = centre + width
        if top is not None:
            hi = min(hi, top)
        m = np.arange(lo, hi + 1, dtype=np.float64)
        t = _log_terms(lam, phi, m)
        tmax = t.max()
        lo_ok = lo == 0 or t[0] < tmax - tol
        hi_ok = (top is not None and hi == top) or t[-1] < tmax - tol
        if lo_ok and hi_ok:
            return m
        width *= 2


def log_partition(lam: float, phi: float) -> float:
    """log Z_lam(phi) = log sum_m phi^(lam m) / (m!)^lam."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if phi < 0:
        raise ValueError("phi must be nonnegative")
    if phi == 0:
        return 0.0
    m = _window(lam, phi, int(math.floor(phi)))
    return float(logsumexp(_log_terms(lam, phi, m)))


def scaled_log_partition_diff(lam: float, a: float, b: float, chi: float) -> float:
    """chi * (log Z_lam(b/chi) - log Z_lam(a/chi)); tends to lam*(b - a) as chi -> 0."""
    if not (a > 0 and b > 0 and chi > 0):
        raise ValueError("a, b and chi must be positive")
    if a == b:
        return 0.0
    if lam == 1:
        return b - a
    return chi * (log_partition(lam, b / chi) - log_partition(lam, a / chi))


class SingleSiteMeasure:
    """pi_rho on occupation numbers, optionally conditioned on chi*k <= M.

    The retained support is the window where log-terms are within 40 nats of
    the mode; outside it the mass is below exp(-40) relative.
    """

    def __init__(self, rho: float, chi: float, alpha: float, M: float | None = None):
        if rho < 0:
            raise ValueError("rho must be nonnegative")
        if not chi > 0:
            raise ValueError("chi must be positive")
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        self.rho = float(rho)
        self.chi = float(chi)
        self.alpha = float(alpha)
        self.M = None if M is None else float(M)
        self.phi = self.rho / self.chi

        if self.phi == 0:
            self.log_Z = 0.0
            self.support = np.zeros(1)
            self.log_pmf_values = np.zeros(1)
            self.log_trunc_mass = 0.0
        else:
            self.log_Z = log_partition(self.alpha, self.phi)
            cap = None
            if self.M is not None:
                cap = int(math.floor(self.M / self.chi * (1 + 1e-12)))
                if cap < 0:
                    raise ValueError("truncation level must be nonnegative")
            centre = int(math.floor(self.phi))
            if cap is not None:
                centre = min(centre, cap)
            m = _window(self.alpha, self.phi, centre, cap)
            t = _log_terms(self.alpha, self.phi, m)
            log_kept = float(logsumexp(t))
            self.log_trunc_mass = min(0.0, log_kept - self.log_Z) if cap is not None else 0.0
            self.support = m
            self.log_pmf_values = t - log_kept
        self.pmf = np.exp(self.log_pmf_values)
        self.pmf /= self.pmf.sum()
        cdf = np.cumsum(self.pmf)
        self.cdf = cdf / cdf[-1]

    @property
    def m_min(self) -> int:
        return int(self.support[0])

    @property
    def m_max(self) -> int:
        return int(self.support[-1])

    def log_pmf(self, k) -> np.ndarray | float:
        """Exact log pi(k) from the closed form (not limited to the retained support)."""
        k = np.asarray(k, dtype=float)
        if self.phi == 0:
            out = np.where(k == 0, 0.0, -np.inf)
        else:
            out = _log_terms(self.alpha, self.phi, k) - self.log_Z - self.log_trunc_mass
            if self.M is not None:
                out = np.where(k * self.chi <= self.M * (1 + 1e-12), out, -np.inf)
        return float(out) if out.ndim == 0 else out

    def mean(self) -> float:
        return self.chi * float(np.dot(self.support, self.pmf))

    def second_moment(self) -> float:
        return self.chi ** 2 * float(np.dot(self.support ** 2, self.pmf))

    def variance(self) -> float:
        mu = float(np.dot(self.support, self.pmf))
        return self.chi ** 2 * float(np.dot((self.support - mu) ** 2, self.pmf))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        """Inverse-CDF draws of occupation numbers k."""
        u = rng.random(size)
        idx = np.searchsorted(self.cdf, u, side="right")
        idx = np.minimum(idx, self.support.size - 1)
        return (self.support[idx]).astype(np.int64)


@lru_cache(maxsize=4096)
def measure_for(rho: float, chi: float, alpha: float, M: float | None = None) -> SingleSiteMeasure:
    return SingleSiteMeasure(rho, chi, alpha, M)


def single_site_moments(measure: SingleSiteMeasure) -> tuple[float, float]:
    """(E[eta], E[eta^2]) under the measure."""
    return measure.mean(), measure.second_moment()


@dataclass
class EquilibriumField:
    """Site parameters rho(x) of a product (local) equilibrium."""

    rho: np.ndarray
    lattice: TorusLattice

    def __post_init__(self):
        rho = np.broadcast_to(np.asarray(self.rho, dtype=float), (self.lattice.site_count,)).copy()
        if np.any(rho < 0):
            raise ValueError("rho must be nonnegative")
        self.rho = rho

    @classmethod
    def from_profile(cls, profile: Callable[[np.ndarray], np.ndarray] | float,
                     lattice: TorusLattice, order: int = 3) -> "EquilibriumField":
        if callable(profile):
            return cls(cell_average(profile, lattice, order=order), lattice)
        return cls(np.full(lattice.site_count, float(profile)), lattice)


def sample_configuration(field: EquilibriumField, scaling: ScalingParams,
                         rng: np.random.Generator, M: float | None = None) -> Configuration:
    """Independent per-site draws from pi_{rho(x)} (or its truncation at M)."""
    values, inverse = np.unique(field.rho, return_inverse=True)
    counts = np.zeros(field.lattice.site_count, dtype=np.int64)
    for j, r in enumerate(values):
        sites = np.flatnonzero(inverse == j)
        if r == 0:
            continue
        meas = measure_for(float(r), scaling.chi, scaling.alpha, M)
        counts[sites] = meas.sample(rng, sites.size)
    return Configuration(counts, scaling)


def _site_values(f, lattice: TorusLattice, order: int = 3) -> np.ndarray:
    if callable(f):
        return cell_average(f, lattice, order=order)
    return np.broadcast_to(np.asarray(f, dtype=float), (lattice.site_count,))


def log_cgf_finite_N(psi, field: EquilibriumField, scaling: ScalingParams, order: int = 3) -> float:
    """(1/N^d) sum_x chi [log Z_a(rho e^{psibar/a}/chi) - log Z_a(rho/chi)]."""
    a, chi = scaling.alpha, scaling.chi
    psibar = _site_values(psi, field.lattice, order)
    if np.all(psibar == 0):
        return 0.0
    if a == 1:
        return float(np.mean(field.rho * np.expm1(psibar)))
    cache: dict[float, float] = {}

    def lz(phi: float) -> float:
        if phi not in cache:
            cache[phi] = log_partition(a, phi)
        return cache[phi]

    total = math.fsum(
        chi * (lz(r * math.exp(p / a) / chi) - lz(r / chi)) for r, p in zip(field.rho, psibar)
    )
    return total / field.lattice.site_count


def log_density_ratio_initial(config: Configuration, u0, rho, M: float | None = None) -> float:
    """(chi/N^d) log Y_0 with Y_0 = dPi_{u0,M}/dPi_rho evaluated at config.

    u0 and rho are site arrays (or scalars); M enables truncation of the
    numerator law.
    """
    sc = config.scaling
    lat = config.lattice
    a, chi = sc.alpha, sc.chi
    u0 = np.broadcast_to(np.asarray(u0, dtype=float), (lat.site_count,))
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (lat.site_count,))
    if np.any(u0 <= 0) or np.any(rho <= 0):
        raise ValueError("profiles must be strictly positive")
    eta = config.density
    if M is None and np.array_equal(u0, rho):
        return 0.0
    if M is not None and np.any(eta > M * (1 + 1e-12)):
        raise ValueError("configuration exceeds the truncation level")
    terms = []
    for e, uu, rr in zip(eta, u0, rho):
        t = a * e * math.log(uu / rr)
        if uu != rr:
            if a == 1:
                t -= uu - rr
            else:
                t -= chi * (log_partition(a, uu / chi) - log_partition(a, rr / chi))
        if M is not None:
            t -= chi * measure_for(float(uu), chi, a, M).log_trunc_mass
        terms.append(t)
    return math.fsum(terms) / lat.site_count


def log_product_measure(config: Configuration, field: EquilibriumField) -> float:
    """log Pi_rho(eta) for the product law with parameters field.rho."""
    sc = config.scaling
    total = []
    for k, r in zip(config.counts, field.rho):
        total.append(measure_for(float(r), sc.chi, sc.alpha).log_pmf(int(k)))
    return math.fsum(total)


def kernel_weight(lattice: TorusLattice, x: int, y: int) -> float:
    """p^N(x, y) with multiplicity (on N=2 both directions hit the same site)."""
    nb = lattice.neighbor_table[x]
    return float(np.count_nonzero(nb == y)) / nb.size


def log_jump_rate(config: Configuration, x: int, y: int) -> float:
    """log of (d N^2 / chi) eta(x)^alpha p(x, y)."""
    sc = config.scaling
    k = int(config.counts[x])
    p = kernel_weight(config.lattice, x, y)
    if k == 0 or p == 0:
        return -math.inf
    return math.log(sc.d * sc.N ** 2 / sc.chi) + sc.alpha * math.log(sc.chi * k) + math.log(p)


def detailed_balance_defect(config: Configuration, field: EquilibriumField, x: int, y: int) -> float:
    """[log Pi(eta) + log r(eta->eta^xy)] - [log Pi(eta^xy) + log r(eta^xy->eta)].

    Only the two touched sites enter, so the difference is formed site-wise.
    """
    if config.counts[x] < 1:
        raise ValueError("source site is empty")
    sc = config.scaling
    after = config.copy()
    after.counts[x] -= 1
    after.counts[y] += 1
    mx = measure_for(float(field.rho[x]), sc.chi, sc.alpha)
    my = measure_for(float(field.rho[y]), sc.chi, sc.alpha)
    kx, ky = int(config.counts[x]), int(config.counts[y])
    d_pi = (mx.log_pmf(kx) - mx.log_pmf(kx - 1)) + (my.log_pmf(ky) - my.log_pmf(ky + 1))
    return d_pi + log_jump_rate(config, x, y) - log_jump_rate(after, y, x)


def exp_entropy_moment(measure: SingleSiteMeasure, gamma: float,
                       cap: int | None = None, max_terms: int = 10 ** 7) -> tuple[float, float]:
    """Per-site sum  sum_m exp(gamma m log(m chi)) pi(m),  split at `cap`.

    Returns (log of the partial sum over m <= cap, log of the tail m > cap).
    Without a cap, it is placed where the summand has fallen 40 nats below its
    maximum.  The tail is +inf if the summand stops decaying (gamma >= alpha).
    """
    chi, a, phi = measure.chi, measure.alpha, measure.phi
    if phi == 0:
        return 0.0, -math.inf

    def logs(m):
        with np.errstate(divide="ignore", invalid="ignore"):
            g = np.where(m > 0, gamma * m * np.log(np.maximum(m, 1) * chi), 0.0)
        return g + _log_terms(a, phi, m) - measure.log_Z

    block = max(1024, int(4 * math.sqrt(max(phi, 1.0))))
    m = np.arange(0, block, dtype=np.float64)
    vals = [logs(m)]
    run_max = float(vals[0].max())
    start = block
    if gamma > a:
        # super-factorial growth: the series diverges
        return float(logsumexp(vals[0])), math.inf
    # extend until the summand is decreasing and far below its running max
    while True:
        last = vals[-1]
        if last[-1] < run_max - 2 * LOG_TOL and last[-1] < last[-2]:
            break
        if start > max_terms:
            return float(logsumexp(np.concatenate(vals))), math.inf
        m = np.arange(start, start + block, dtype=np.float64)
        vals.append(logs(m))
        run_max = max(run_max, float(vals[-1].max()))
        start += block
        block *= 2
    allv = np.concatenate(vals)
    if cap is None:
        top = allv.max()
        above = np.flatnonzero(allv >= top - LOG_TOL)
        cap = int(above[-1])
    head = allv[: cap + 1]
    tail = allv[cap + 1:]
    # geometric bound for what lies beyond the scanned block
    r = math.exp(allv[-1] - allv[-2])
    beyond = allv[-1] + math.log(r / (1 - r)) if r < 1 else math.inf
    log_tail = float(logsumexp(np.append(tail, beyond))) if tail.size else beyond
    return float(logsumexp(head)), log_tail
